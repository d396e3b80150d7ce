#include "gpuos/power_manager.hpp"

#include <algorithm>
#include <cmath>

namespace gpuos {

double sensitivity(Duration lat_fth, Duration lat_fmax, FreqMhz f_th,
                   FreqMhz f_max) {
  if (lat_fth <= 0 || lat_fmax <= 0)
    throw ConfigError("latencies must be > 0");
  if (f_th >= f_max) throw ConfigError("f_th must be below f_max");
  double slow = static_cast<double>(lat_fth) / static_cast<double>(lat_fmax) -
                1.0;
  double ratio = static_cast<double>(f_max) / static_cast<double>(f_th) - 1.0;
  return std::clamp(slow / ratio, 0.0, 1.0);
}

double aggregate_sensitivity(
    const std::vector<std::pair<double, double>>& ws) {
  if (ws.empty()) throw ConfigError("aggregate over empty record set");
  double S = 0.0;
  for (const auto& [w, s] : ws) S += w * s;
  return std::clamp(S, 0.0, 1.0);
}

FreqMhz select_frequency(double S, double slip_k, FreqMhz f_max,
                         const std::vector<FreqMhz>& supported,
                         double s_floor) {
  if (supported.empty()) throw ConfigError("empty frequency table");
  if (slip_k <= 0.0) throw ConfigError("slip_k must be > 0");
  if (S <= s_floor) return supported.front();
  double raw = static_cast<double>(f_max) / (1.0 + slip_k / S);
  for (FreqMhz f : supported)
    if (static_cast<double>(f) >= raw) return f;
  return supported.back();
}

void PowerManager::observe(const OperatorKey& key, Duration latency,
                           FreqMhz f) {
  SensitivityRecord& rec = records_[key];
  rec.runtime_last_batch += latency;
  switch (rec.phase) {
    case DvfsPhase::Unseen:
      if (f == f_max()) {
        rec.baseline_fmax = latency;
        rec.phase = DvfsPhase::Probing;
        rec.s = 1.0;  // assume linear until proven otherwise
      }
      break;
    case DvfsPhase::Probing:
      if (f == f_max()) {
        rec.baseline_fmax = latency;  // refresh baseline
      } else if (rec.baseline_fmax > 0) {
        double s_obs = sensitivity(latency, rec.baseline_fmax, f, f_max());
        if (rec.last_probe_s >= 0.0 &&
            std::abs(s_obs - rec.last_probe_s) <=
                cfg_.confirm_tolerance * std::max(rec.last_probe_s, 1e-9)) {
          rec.phase = DvfsPhase::Confirmed;
        } else if (rec.last_probe_s >= 0.0 && rec.last_probe_s < 1e-9 &&
                   s_obs < 1e-9) {
          rec.phase = DvfsPhase::Confirmed;  // two zero estimates in a row
        }
        rec.last_probe_s = s_obs;
        rec.s = s_obs;
      }
      break;
    case DvfsPhase::Confirmed:
      break;
  }
}

FreqMhz PowerManager::plan_batch(int queue_id) {
  // Weights are runtime fractions over the batch that just finished.
  std::vector<std::pair<double, double>> ws;
  Duration total = 0;
  bool any_unseen = false;
  for (auto& [key, rec] : records_) {
    if (key.queue_id != queue_id) continue;
    total += rec.runtime_last_batch;
    if (rec.phase == DvfsPhase::Unseen) any_unseen = true;
  }
  FreqMhz target = f_max();
  if (!any_unseen && total > 0) {
    for (auto& [key, rec] : records_) {
      if (key.queue_id != queue_id) continue;
      ws.push_back({static_cast<double>(rec.runtime_last_batch) /
                        static_cast<double>(total),
                    rec.s});
    }
    if (!ws.empty()) {
      double S = aggregate_sensitivity(ws);
      target = select_frequency(S, cfg_.slip_k, f_max(), supported_);
    }
  }
  for (auto& [key, rec] : records_)
    if (key.queue_id == queue_id) rec.runtime_last_batch = 0;

  auto it = last_request_.find(queue_id);
  if (it == last_request_.end() || it->second != target) {
    last_request_[queue_id] = target;
    ++frequency_requests_;
  }
  return target;
}

DvfsPhase PowerManager::phase(const OperatorKey& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? DvfsPhase::Unseen : it->second.phase;
}

double PowerManager::estimate(const OperatorKey& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? 1.0 : it->second.s;
}

FreqMhz PowerManager::arbitrate(const std::vector<FreqMhz>& app_targets) {
  if (app_targets.empty()) throw ConfigError("arbitrate over no apps");
  return *std::max_element(app_targets.begin(), app_targets.end());
}

}  // namespace gpuos
