#include "dtrm/scenario.hpp"

#include <stdexcept>

#include "dtrm/env_irs.hpp"
#include "dtrm/env_uav.hpp"

namespace dtrm {

const std::string& ScenarioSpec::id() const {
  if (std::holds_alternative<IrsScenario>(params)) return std::get<IrsScenario>(params).id;
  return std::get<UavScenario>(params).id;
}

std::string ScenarioSpec::task() const {
  return std::holds_alternative<IrsScenario>(params) ? "irs" : "uav";
}

const IrsScenario& ScenarioSpec::irs() const {
  if (!std::holds_alternative<IrsScenario>(params)) {
    throw std::logic_error("scenario '" + id() + "' is not an IRS scenario");
  }
  return std::get<IrsScenario>(params);
}

const UavScenario& ScenarioSpec::uav() const {
  if (!std::holds_alternative<UavScenario>(params)) {
    throw std::logic_error("scenario '" + id() + "' is not a UAV scenario");
  }
  return std::get<UavScenario>(params);
}

std::unique_ptr<Env> make_env(const ScenarioSpec& spec) {
  if (spec.task() == "irs") return std::make_unique<IrsEnv>(spec.irs());
  return std::make_unique<UavEnv>(spec.uav());
}

}  // namespace dtrm
