#include "dtrm/metrics.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dtrm {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void MetricsTable::append(MetricsRow row) {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it) {
    if (it->phase == row.phase && it->scenario_id == row.scenario_id) {
      if (it->step > row.step) {
        throw std::invalid_argument("metrics: step must be monotone within a phase");
      }
      break;
    }
  }
  rows_.push_back(std::move(row));
}

void MetricsTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "phase,scenario_id,step,mean_return,std_return\n";
  for (const MetricsRow& r : rows_) {
    out << r.phase << ',' << r.scenario_id << ',' << r.step << ','
        << format_double(r.mean_return) << ',' << format_double(r.std_return) << '\n';
  }
}

void MetricsTable::write_timings(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::map<std::string, double> by_phase;
  for (const MetricsRow& r : rows_) by_phase[r.phase] += r.wall_seconds;
  for (const auto& [phase, secs] : by_phase) {
    out << phase << ": " << format_double(secs) << " s\n";
  }
}

}  // namespace dtrm
