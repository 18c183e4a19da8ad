// Internal JSON helpers shared by config and file-format code.
#pragma once

#include <json.hpp>

#include "dtrm/scenario.hpp"

namespace dtrm {

nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

}  // namespace dtrm
