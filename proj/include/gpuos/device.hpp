#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "gpuos/types.hpp"

namespace gpuos {

struct DeviceTopology {
  int gpc_count = 1;
  int tpcs_per_gpc = 1;
  int sms_per_tpc = 2;

  int total_tpcs() const { return gpc_count * tpcs_per_gpc; }
  void validate() const;

  static DeviceTopology a100_like();  // 54 TPCs, 108 SMs
  static DeviceTopology h100_like();  // 8 GPCs x 9 TPCs
};

struct FrequencyDomain {
  std::vector<FreqMhz> supported_mhz;  // ascending
  Duration switch_latency = 50 * kMillisecond;

  FreqMhz f_max() const { return supported_mhz.back(); }
  FreqMhz f_min() const { return supported_mhz.front(); }
  bool supports(FreqMhz f) const;
  void validate() const;
};

// Ground truth for one kernel launch. Owned by the device engine; scheduling
// components never see block_duration_at_fmax or sensitivity_s, only the
// completion timestamps the engine produces.
struct SimKernelSpec {
  long total_blocks = 1;
  Duration block_duration_at_fmax = kMillisecond;
  double sensitivity_s = 1.0;       // in [0,1]
  int occupancy_per_tpc = 1;        // blocks one TPC runs concurrently
  Duration prelude_overhead = 500;  // 0.5us, charged per block when atomized

  void validate() const;
};

struct PowerModel {
  double p_static_w = 50.0;
  double p_tpc_w = 5.0;   // per active TPC at f_max
  double alpha = 2.0;

  double watts(int active_tpcs, FreqMhz f, FreqMhz f_max) const;
};

// lat(f) for one block: d0 * (1 + s * (f_max/f - 1)), rounded to ns.
Duration block_latency(const SimKernelSpec& spec, FreqMhz f,
                       const FrequencyDomain& fd);

// Closed-form latency of a lone kernel on t TPCs: integer waves times block
// latency. Used as the test oracle for the engine.
Duration reference_kernel_latency(const SimKernelSpec& spec, int t, FreqMhz f,
                                  const FrequencyDomain& fd);

using KernelId = std::uint32_t;
using AtomId = std::uint32_t;

struct AtomCompletion {
  AtomId atom;
  std::uint64_t tag;      // caller-chosen cookie
  SimTime dispatch_time;
  SimTime complete_time;
};

// Discrete-event GPU engine. Owns the clock, block-slot execution, the
// frequency domain and energy accounting. Single-threaded; all mutation
// happens inside run()/step().
class DeviceEngine {
 public:
  DeviceEngine(DeviceTopology topo, FrequencyDomain freq, PowerModel power);

  SimTime now() const { return now_; }
  const DeviceTopology& topology() const { return topo_; }
  const FrequencyDomain& freq_domain() const { return freq_; }
  FreqMhz current_mhz() const { return current_mhz_; }

  KernelId register_kernel(const SimKernelSpec& spec);

  // Dispatches [lo,hi) of `kernel` onto `tpcs` at `priority` (higher wins).
  // Blocks fill free slots greedily in block-index order; freed slots take the
  // next waiting block of the highest-priority resident atom on that TPC.
  AtomId submit_atom(KernelId kernel, long lo, long hi,
                     const std::vector<int>& tpcs, int priority, bool atomized,
                     std::uint64_t tag);

  // A paused atom keeps its in-flight blocks but starts no new ones.
  void set_atom_paused(AtomId atom, bool paused);

  // Schedules a frequency switch effective switch_latency from now; a newer
  // request replaces a pending one. Returns the effective time.
  SimTime request_frequency(FreqMhz f);

  void schedule_call(SimTime t, std::function<void()> fn);
  void set_atom_complete_handler(std::function<void(const AtomCompletion&)> h) {
    on_atom_complete_ = std::move(h);
  }

  bool step();       // process one event; false when the queue is empty
  void run_all();

  // Metrics. Accounting integrates piecewise between events and stops at the
  // metrics horizon if one is set.
  void set_metrics_horizon(SimTime t) { metrics_horizon_ = t; }
  double energy_joules() const { return energy_j_; }
  // integral of (active TPC count) dt, in TPC-nanoseconds
  double tpc_busy_integral() const { return busy_integral_; }
  const std::map<FreqMhz, Duration>& freq_residency() const {
    return freq_residency_;
  }
  long blocks_executed(KernelId k) const;

 private:
  struct AtomRun {
    KernelId kernel;
    long next_block, end_block;
    int in_flight = 0;
    std::vector<int> tpcs;
    int priority;
    std::uint64_t seq;
    bool atomized;
    bool paused = false;
    bool done = false;
    SimTime dispatch_time;
    std::uint64_t tag;
  };

  // Slot capacity per TPC is 1; a resident block of a kernel with occupancy o
  // consumes 1/o, tracked as an exact fraction.
  struct Tpc {
    std::vector<AtomId> resident;  // sorted by (priority desc, seq asc)
    long cap_num = 0, cap_den = 1;
    int blocks_running = 0;
  };

  enum class EventKind { BlockComplete, FreqSwitch, Call };
  struct Event {
    SimTime t;
    std::uint64_t seq;
    EventKind kind;
    int tpc = 0;
    AtomId atom = 0;
    std::uint64_t gen = 0;
    std::function<void()> fn;
  };
  struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };

  void push_block_complete(SimTime t, int tpc, AtomId atom);
  void advance_accounting(SimTime t);
  bool fits(const Tpc& tpc, int occupancy) const;
  void cap_add(Tpc& tpc, int occupancy);
  void cap_sub(Tpc& tpc, int occupancy);
  void start_block(int tpc_id, AtomId atom_id);
  void fill_tpc(int tpc_id);
  void finish_atom(AtomId atom_id);

  DeviceTopology topo_;
  FrequencyDomain freq_;
  PowerModel power_;
  FreqMhz current_mhz_;
  std::optional<std::pair<FreqMhz, SimTime>> pending_switch_;
  std::uint64_t switch_gen_ = 0;

  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, EventLater> events_;

  std::vector<Tpc> tpcs_;
  int active_tpcs_ = 0;
  std::vector<SimKernelSpec> kernels_;
  std::vector<long> blocks_executed_;
  std::vector<AtomRun> atoms_;

  std::function<void(const AtomCompletion&)> on_atom_complete_;

  SimTime last_account_ = 0;
  SimTime metrics_horizon_ = -1;  // <0: unbounded
  double energy_j_ = 0.0;
  double busy_integral_ = 0.0;
  std::map<FreqMhz, Duration> freq_residency_;
};

}  // namespace gpuos
