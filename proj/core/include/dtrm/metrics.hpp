// Append-only metric rows and deterministic CSV emission. Wall-clock timings
// are kept out of the CSV files so reruns at a fixed seed are byte-identical;
// they go to a separate timings sidecar instead.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dtrm {

struct MetricsRow {
  std::string phase;
  std::string scenario_id;
  long step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double wall_seconds = 0.0;  // not serialized into the CSV
};

class MetricsTable {
 public:
  void append(MetricsRow row);  // step must be monotone within a phase
  const std::vector<MetricsRow>& rows() const { return rows_; }

  // header: phase,scenario_id,step,mean_return,std_return
  void write_csv(const std::filesystem::path& path) const;
  void write_timings(const std::filesystem::path& path) const;

 private:
  std::vector<MetricsRow> rows_;
};

// shortest round-trip formatting, deterministic across runs
std::string format_double(double v);

}  // namespace dtrm
