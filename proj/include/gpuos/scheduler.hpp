#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpuos/atomizer.hpp"
#include "gpuos/device.hpp"
#include "gpuos/power_manager.hpp"
#include "gpuos/predictor.hpp"
#include "gpuos/rightsizer.hpp"
#include "gpuos/types.hpp"
#include "gpuos/workload.hpp"

namespace gpuos {

enum class Policy {
  FullSystem,
  MpsLike,
  MigLike,
  TimeSlice,
  PriorityOnly,
  ReefLike,
};

Policy policy_from_string(const std::string& name);
std::string to_string(Policy p);

struct SchedulerConfig {
  Policy policy = Policy::FullSystem;
  int max_outstanding_atoms = 2;
  Duration steal_horizon = 0;  // 0: steal only currently idle TPCs
  bool stealing_enabled = true;
  bool atomizer_enabled = true;
  bool rightsizer_enabled = true;
  bool dvfs_enabled = true;
  // The occupancy filter belongs to the right-sizing feature set; turning it
  // off gives the naive quota-wide allocation used as the savings baseline.
  bool occupancy_filter = true;
  Duration atom_duration = kMillisecond;
  double disable_factor = 2.0;
  Duration time_slice_window = 2 * kMillisecond;
  PredictorConfig predictor;
  RightsizerConfig rightsizer;
  DvfsConfig dvfs;
  // mig_like only: app_id -> GPC indices; apps absent from the map never run.
  std::map<std::string, std::vector<int>> mig_gpcs;

  void validate() const;
};

struct RequestRecord {
  SimTime arrival = 0;
  SimTime completion = -1;  // <0: still outstanding at end of run
};

// Per-TPC scheduling state. busy_until is a prediction; resident counts are
// ground truth maintained from dispatch/completion events.
struct TpcLedgerEntry {
  int owner = -1;  // app index; -1 when outside every quota
  SimTime busy_until = 0;
  int resident_atoms = 0;
  int resident_stolen = 0;
};

// The TPC scheduler: launch/sync queues, quotas, stealing with revocation,
// atomization, right-sizing, and frequency planning — plus the baseline
// sharing policies, all expressed as dispatch-rule variants over the same
// device engine.
class Scheduler {
 public:
  Scheduler(DeviceEngine& engine, SchedulerConfig cfg,
            std::vector<AppWorkload> apps);

  // Schedules all arrivals and runs the engine until no work remains.
  // Closed-loop apps stop issuing at the horizon; metrics integrate up to it.
  void run(Duration horizon);

  int app_count() const { return static_cast<int>(apps_.size()); }
  const AppSpec& app_spec(int app) const { return apps_[app].wl.spec; }
  const std::vector<RequestRecord>& requests(int app) const {
    return apps_[app].requests;
  }
  // Latencies of requests that completed by the horizon.
  std::vector<Duration> completed_latencies(int app) const;
  long offered(int app) const;
  long completed(int app) const;

  const std::vector<PredictionLogEntry>& prediction_log() const {
    return prediction_log_;
  }
  const LatencyPredictor& predictor() const { return predictor_; }
  const Rightsizer& rightsizer() const { return rightsizer_; }
  const PowerManager& power_manager() const { return power_; }
  const std::vector<TpcLedgerEntry>& ledger() const { return tpcs_; }

  // Integral of (TPCs held by dispatched kernels) dt, clamped to the horizon.
  double allocated_tpc_time() const;
  double app_tpc_time(int app) const { return apps_[app].tpc_time; }
  Duration horizon() const { return horizon_; }

 private:
  struct Launch {
    KernelId kid = 0;
    long blocks = 1;
    int occ = 1;
    OperatorKey key;
    long request_idx = 0;
    bool last_in_request = false;
  };

  struct ActiveKernel {
    Launch launch;
    std::vector<AtomRange> atoms;
    std::size_t next_atom = 0;
    int outstanding = 0;
    std::vector<int> tpcs;
    int desired = 0;        // target width for (re-)acquisition
    bool may_steal = false;
    bool atomized = false;
    bool probe = false;
    SimTime first_dispatch = -1;
    FreqMhz freq0 = 0;  // frequency at first dispatch, for DVFS observation
    int max_width = 0;  // widest atom dispatch, fed to the right-sizer
  };

  struct AppState {
    AppWorkload wl;
    std::deque<Launch> launchq;
    std::optional<ActiveKernel> active;
    std::vector<RequestRecord> requests;
    std::vector<int> owned;  // TPC ids (quota range, or MIG partition)
    long requests_issued = 0;
    double tpc_time = 0.0;
    Duration last_latency = -1;
    FreqMhz dvfs_target;
  };

  struct AtomInfo {
    int app = -1;
    OperatorKey key;
    ObsConfig config;
    Duration predicted = 0;
    Confidence confidence = Confidence::Unknown;
    bool stolen = false;
    std::vector<int> tpcs;
  };

  void enqueue_request(int app, SimTime arrival, const RequestTemplate& tmpl);
  void on_arrival(int app, SimTime t);
  void dispatch_cycle();
  bool try_dispatch(int app);
  bool dispatch_full_system(int app);
  bool dispatch_shared(int app);  // mps/mig/priority/reef/time_slice variants
  void dispatch_atom(int app, const std::vector<int>& tpcs, bool stolen);
  void on_atom_complete(const AtomCompletion& done);
  void finish_kernel(int app, SimTime now);
  void finish_request(int app, long request_idx, SimTime now);
  std::vector<int> steal_tpcs(int app, int want) const;
  int idle_owned(int app, std::vector<int>* out) const;
  bool has_work(int app) const;
  int base_priority(int app) const;
  void rotate_time_slice();
  void arm_time_slice();
  void apply_dvfs();

  DeviceEngine& engine_;
  SchedulerConfig cfg_;
  std::vector<AppState> apps_;
  std::vector<int> dispatch_order_;  // HP apps first, then BE, by app index
  std::vector<TpcLedgerEntry> tpcs_;
  LatencyPredictor predictor_;
  Rightsizer rightsizer_;
  PowerManager power_;
  std::vector<PredictionLogEntry> prediction_log_;
  std::map<AtomId, AtomInfo> in_flight_;
  Duration horizon_ = 0;
  int active_slice_ = 0;  // time_slice: app holding the current window
  bool slice_armed_ = false;
  bool in_dispatch_ = false;
};

}  // namespace gpuos
