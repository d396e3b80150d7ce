#pragma once

#include <map>
#include <vector>

#include "gpuos/predictor.hpp"
#include "gpuos/types.hpp"

namespace gpuos {

// Two-point fit of the Amdahl-shaped scaling curve l(t) = m/t + b.
struct ScalingFit {
  double m_ns = 0.0;  // parallelizable mass
  double b_ns = 0.0;  // serial floor
  bool valid = false;
};

// Fit from latency at t=1 and at t=T.
ScalingFit fit_scaling(Duration l1, Duration lT, int T);

// Occupancy filter: ceil(blocks / occupancy), clamped to [1, total_tpcs].
int filter_cap(long total_blocks, int occupancy_per_tpc, int total_tpcs);

// Smallest t with m/t + b <= slip_k * (m/min(T_alloc,cap) + b), clamped to
// [1, min(T_alloc, cap)]. Invalid fits fall back to the cap alone.
int choose_tpcs(const ScalingFit& fit, int t_alloc, double slip_k, int cap);

// Wave-aware variant: blocks execute in integer waves of (t x occupancy)
// slots, so only the breakpoint widths ceil(blocks / (occ x waves)) actually
// change latency. Returns the smallest breakpoint width whose fitted latency
// stays within the slip budget; shrinking below a breakpoint would add a
// whole wave without saving time.
int choose_tpcs_wave(const ScalingFit& fit, int t_alloc, double slip_k,
                     long blocks, int occ);

enum class ProbeDecision { UseFull, ProbeOneTpc, UseFit };

struct RightsizerConfig {
  double slip_k = 1.1;
  int probe_depth_limit = 1;
};

// Per-operator right-sizing state machine: first execution at full width,
// a one-TPC probe at a quiet moment, then the fitted minimum.
class Rightsizer {
 public:
  explicit Rightsizer(RightsizerConfig cfg = {}) : cfg_(cfg) {}

  // queue_depth: pending launches behind this kernel; slo_slack_ok: the app is
  // best-effort or running under its SLO with a 2x margin.
  ProbeDecision decide(const OperatorKey& key, int queue_depth,
                       bool slo_slack_ok) const;
  // Observed whole-kernel latency at a TPC count; feeds the fit and R².
  void observe(const OperatorKey& key, int tpc_count, Duration latency);
  const ScalingFit* fit_for(const OperatorKey& key) const;
  int choose(const OperatorKey& key, int t_alloc, long blocks, int occ) const;

  // Execution-time-weighted R² over all operators with >= 2 distinct TPC
  // counts observed. Returns the count of included operators via the out
  // parameter.
  double weighted_r_squared(long* included = nullptr) const;

  const RightsizerConfig& config() const { return cfg_; }

 private:
  struct State {
    std::map<int, std::pair<double, long>> by_tpcs;  // t -> (sum ns, count)
    int full_t = 0;
    Duration l_full = 0;
    Duration l_one = 0;
    bool have_full = false, have_one = false;
    ScalingFit fit;
  };
  RightsizerConfig cfg_;
  std::map<OperatorKey, State> states_;
};

// R² of l(t) = m/t + b against observed (t, latency) points.
double r_squared(const ScalingFit& fit,
                 const std::vector<std::pair<int, double>>& points);

}  // namespace gpuos
