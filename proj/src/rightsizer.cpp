#include "gpuos/rightsizer.hpp"

#include <algorithm>
#include <cmath>

namespace gpuos {

ScalingFit fit_scaling(Duration l1, Duration lT, int T) {
  if (T < 2) throw ConfigError("fit needs T >= 2");
  if (l1 <= 0 || lT <= 0) throw ConfigError("fit latencies must be > 0");
  ScalingFit fit;
  double m = (static_cast<double>(l1) - static_cast<double>(lT)) /
             (1.0 - 1.0 / static_cast<double>(T));
  double b = static_cast<double>(l1) - m;
  fit.m_ns = m;
  fit.b_ns = b;
  fit.valid = l1 >= lT && b >= 0.0;
  return fit;
}

int filter_cap(long total_blocks, int occupancy_per_tpc, int total_tpcs) {
  if (total_blocks < 1 || occupancy_per_tpc < 1)
    throw ConfigError("filter_cap inputs must be >= 1");
  long cap = (total_blocks + occupancy_per_tpc - 1) / occupancy_per_tpc;
  return static_cast<int>(std::clamp<long>(cap, 1, total_tpcs));
}

int choose_tpcs(const ScalingFit& fit, int t_alloc, double slip_k, int cap) {
  if (t_alloc < 1) throw ConfigError("t_alloc must be >= 1");
  if (slip_k < 1.0) throw ConfigError("slip_k must be >= 1");
  int t_full = std::min(t_alloc, cap);
  if (!fit.valid) return t_full;
  if (fit.m_ns <= 0.0) return 1;  // flat curve
  double budget = slip_k * (fit.m_ns / t_full + fit.b_ns);
  if (budget <= fit.b_ns) return t_full;
  int t = static_cast<int>(std::ceil(fit.m_ns / (budget - fit.b_ns)));
  return std::clamp(t, 1, t_full);
}

int choose_tpcs_wave(const ScalingFit& fit, int t_alloc, double slip_k,
                     long blocks, int occ) {
  if (blocks < 1 || occ < 1) throw ConfigError("blocks and occ must be >= 1");
  int cap = filter_cap(blocks, occ, t_alloc);
  int t_full = std::min(t_alloc, cap);
  if (!fit.valid) return t_full;
  if (fit.m_ns <= 0.0) return static_cast<int>(std::min<long>(
      t_full, (blocks + occ - 1) / occ));
  double budget = slip_k * (fit.m_ns / t_full + fit.b_ns);
  int best = t_full;
  long max_waves = (blocks + occ - 1) / occ;
  for (long w = 1; w <= max_waves; ++w) {
    long slots = (blocks + w - 1) / w;        // blocks per wave
    int t = static_cast<int>((slots + occ - 1) / occ);  // width for w waves
    if (t > t_full) continue;
    if (fit.m_ns / t + fit.b_ns > budget) break;  // latency grows with w
    best = t;
    if (t == 1) break;
  }
  return best;
}

ProbeDecision Rightsizer::decide(const OperatorKey& key, int queue_depth,
                                 bool slo_slack_ok) const {
  auto it = states_.find(key);
  if (it == states_.end() || !it->second.have_full)
    return ProbeDecision::UseFull;
  const State& st = it->second;
  if (st.have_one) return ProbeDecision::UseFit;
  if (queue_depth < cfg_.probe_depth_limit && slo_slack_ok)
    return ProbeDecision::ProbeOneTpc;
  return ProbeDecision::UseFull;
}

void Rightsizer::observe(const OperatorKey& key, int tpc_count,
                         Duration latency) {
  State& st = states_[key];
  auto& cell = st.by_tpcs[tpc_count];
  cell.first += static_cast<double>(latency);
  cell.second += 1;
  if (tpc_count == 1 && !st.have_one) {
    st.l_one = latency;
    st.have_one = true;
  } else if (tpc_count > 1 && !st.have_full) {
    st.full_t = tpc_count;
    st.l_full = latency;
    st.have_full = true;
  }
  if (st.have_full && st.have_one && !st.fit.valid && st.full_t >= 2)
    st.fit = fit_scaling(st.l_one, st.l_full, st.full_t);
}

const ScalingFit* Rightsizer::fit_for(const OperatorKey& key) const {
  auto it = states_.find(key);
  if (it == states_.end() || !it->second.fit.valid) return nullptr;
  return &it->second.fit;
}

int Rightsizer::choose(const OperatorKey& key, int t_alloc, long blocks,
                       int occ) const {
  const ScalingFit* fit = fit_for(key);
  if (!fit) return std::min(t_alloc, filter_cap(blocks, occ, t_alloc));
  return choose_tpcs_wave(*fit, t_alloc, cfg_.slip_k, blocks, occ);
}

double r_squared(const ScalingFit& fit,
                 const std::vector<std::pair<int, double>>& points) {
  if (points.size() < 2) throw ConfigError("r_squared needs >= 2 points");
  double mean = 0.0;
  for (const auto& [t, l] : points) mean += l;
  mean /= static_cast<double>(points.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [t, l] : points) {
    double pred = fit.m_ns / t + fit.b_ns;
    ss_res += (l - pred) * (l - pred);
    ss_tot += (l - mean) * (l - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -ss_res;
  return 1.0 - ss_res / ss_tot;
}

double Rightsizer::weighted_r_squared(long* included) const {
  double weighted_sum = 0.0, weight_total = 0.0;
  long n = 0;
  for (const auto& [key, st] : states_) {
    if (!st.fit.valid) continue;
    std::vector<std::pair<int, double>> points;
    double exec_time = 0.0;
    for (const auto& [t, cell] : st.by_tpcs) {
      points.push_back({t, cell.first / static_cast<double>(cell.second)});
      exec_time += cell.first;
    }
    if (points.size() < 2) continue;
    weighted_sum += exec_time * r_squared(st.fit, points);
    weight_total += exec_time;
    ++n;
  }
  if (included) *included = n;
  return weight_total > 0.0 ? weighted_sum / weight_total : 0.0;
}

}  // namespace gpuos
