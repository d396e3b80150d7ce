#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gpuos/predictor.hpp"
#include "gpuos/types.hpp"

namespace gpuos {

// s = (lat(f_th)/lat(f_max) - 1) / (f_max/f_th - 1), clamped to [0,1].
double sensitivity(Duration lat_fth, Duration lat_fmax, FreqMhz f_th,
                   FreqMhz f_max);

// S = sum(w*s) over weight-normalized records.
double aggregate_sensitivity(const std::vector<std::pair<double, double>>& ws);

// f_max / (1 + slip_k/S), snapped UP to the nearest supported frequency.
// S below the floor selects the lowest supported frequency.
FreqMhz select_frequency(double S, double slip_k, FreqMhz f_max,
                         const std::vector<FreqMhz>& supported,
                         double s_floor = 1e-6);

enum class DvfsPhase { Unseen, Probing, Confirmed };

struct SensitivityRecord {
  DvfsPhase phase = DvfsPhase::Unseen;
  double s = 1.0;             // current estimate; linear until learned
  double last_probe_s = -1.0;
  Duration baseline_fmax = 0;
  Duration runtime_last_batch = 0;  // feeds weight computation
};

struct DvfsConfig {
  double slip_k = 0.1;
  double confirm_tolerance = 0.05;  // consecutive estimates within 5%
};

// Per-app frequency planning: baseline collection at f_max, probing with an
// assumed-linear sensitivity, then steady-state selection from the aggregate.
class PowerManager {
 public:
  PowerManager(DvfsConfig cfg, std::vector<FreqMhz> supported)
      : cfg_(cfg), supported_(std::move(supported)) {
    if (supported_.empty()) throw ConfigError("empty frequency table");
  }

  // Kernel finished: observed latency at frequency f.
  void observe(const OperatorKey& key, Duration latency, FreqMhz f);

  // Batch finished: refine estimates and return the frequency this app wants
  // for its next batch.
  FreqMhz plan_batch(int queue_id);

  DvfsPhase phase(const OperatorKey& key) const;
  double estimate(const OperatorKey& key) const;
  long frequency_requests() const { return frequency_requests_; }

  // Device has one clock: take the max across active apps' targets.
  static FreqMhz arbitrate(const std::vector<FreqMhz>& app_targets);

 private:
  FreqMhz f_max() const { return supported_.back(); }
  DvfsConfig cfg_;
  std::vector<FreqMhz> supported_;
  std::map<OperatorKey, SensitivityRecord> records_;
  std::map<int, FreqMhz> last_request_;
  long frequency_requests_ = 0;
};

}  // namespace gpuos
