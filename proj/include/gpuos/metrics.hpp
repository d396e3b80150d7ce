#pragma once

#include <map>
#include <string>
#include <vector>

#include "gpuos/types.hpp"

namespace gpuos {

// Nearest-rank percentile: sorted[ceil(p/100 * n) - 1]. Deterministic, no
// interpolation.
Duration percentile(std::vector<Duration> samples, double p);

// 1 - integral(rightsized) / integral(baseline) over allocated TPC-time.
double capacity_savings(double rightsized_tpc_time, double baseline_tpc_time);

// 1 - E_dvfs / E_maxfreq.
double energy_savings(double dvfs_joules, double maxfreq_joules);

struct AppReport {
  std::string app_id;
  bool high_priority = false;
  long offered = 0;
  long completed = 0;
  Duration p50 = 0, p95 = 0, p99 = 0;
  double throughput_vs_offered = 0.0;  // completed / offered (open loop)
  double goodput_vs_offered = 0.0;     // SLO-compliant completions / offered
  double slo_attainment = 1.0;         // in [0,1]; 1.0 when no SLO
};

struct RunReport {
  std::vector<AppReport> apps;
  double tpc_utilization = 0.0;  // time-weighted, in [0,1]
  double allocated_tpc_time = 0.0;  // integral of dispatched TPC-time (TPC-ns)
  double energy_joules = 0.0;
  std::map<FreqMhz, Duration> freq_residency;
  double predictor_misprediction_rate_hp = 0.0;
  Duration predictor_p99_abs_error_hp = 0;
  long predictions_hp = 0;
  double weighted_r_squared = 0.0;  // right-sizing fit quality; 0 if unused
  long fitted_operators = 0;
  Duration horizon = 0;
  std::uint64_t seed = 0;
  std::string policy;

  std::string to_json() const;  // canonical (sorted keys, fixed precision)
};

}  // namespace gpuos
