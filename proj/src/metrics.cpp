#include "gpuos/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace gpuos {

Duration percentile(std::vector<Duration> samples, double p) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample set");
  if (p <= 0.0 || p >= 100.0) throw ConfigError("percentile p must be in (0,100)");
  std::sort(samples.begin(), samples.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(samples.size())));
  if (rank == 0) rank = 1;
  return samples[rank - 1];
}

double capacity_savings(double rightsized_tpc_time, double baseline_tpc_time) {
  if (baseline_tpc_time <= 0.0)
    throw ConfigError("capacity savings baseline integral is zero");
  return 1.0 - rightsized_tpc_time / baseline_tpc_time;
}

double energy_savings(double dvfs_joules, double maxfreq_joules) {
  if (maxfreq_joules <= 0.0)
    throw ConfigError("energy savings baseline is zero");
  return 1.0 - dvfs_joules / maxfreq_joules;
}

namespace {
// Fixed-precision doubles so reports are byte-stable.
nlohmann::json num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return nlohmann::json::parse(buf);
}
}  // namespace

std::string RunReport::to_json() const {
  nlohmann::json j;
  j["policy"] = policy;
  j["seed"] = seed;
  j["horizon_ns"] = horizon;
  j["tpc_utilization"] = num(tpc_utilization);
  j["allocated_tpc_time"] = num(allocated_tpc_time);
  j["energy_joules"] = num(energy_joules);
  nlohmann::json res = nlohmann::json::object();
  for (const auto& [f, d] : freq_residency) res[std::to_string(f)] = d;
  j["freq_residency_ns"] = res;
  j["predictor"] = {
      {"misprediction_rate_hp", num(predictor_misprediction_rate_hp)},
      {"p99_abs_error_ns_hp", predictor_p99_abs_error_hp},
      {"predictions_hp", predictions_hp}};
  j["rightsizing"] = {{"weighted_r_squared", num(weighted_r_squared)},
                      {"fitted_operators", fitted_operators}};
  nlohmann::json apps_j = nlohmann::json::array();
  for (const auto& a : apps) {
    apps_j.push_back({{"app_id", a.app_id},
                      {"high_priority", a.high_priority},
                      {"offered", a.offered},
                      {"completed", a.completed},
                      {"p50_ns", a.p50},
                      {"p95_ns", a.p95},
                      {"p99_ns", a.p99},
                      {"throughput_vs_offered", num(a.throughput_vs_offered)},
                      {"goodput_vs_offered", num(a.goodput_vs_offered)},
                      {"slo_attainment", num(a.slo_attainment)}});
  }
  j["apps"] = apps_j;
  return j.dump(2);
}

}  // namespace gpuos
