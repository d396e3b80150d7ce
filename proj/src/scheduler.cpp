#include "gpuos/scheduler.hpp"

#include <algorithm>
#include <set>

namespace gpuos {

namespace {
constexpr int kHpPriority = 30;
constexpr int kBePriority = 20;
constexpr int kStolenPriority = 10;
}  // namespace

Policy policy_from_string(const std::string& name) {
  if (name == "full_system") return Policy::FullSystem;
  if (name == "mps_like") return Policy::MpsLike;
  if (name == "mig_like") return Policy::MigLike;
  if (name == "time_slice") return Policy::TimeSlice;
  if (name == "priority_only") return Policy::PriorityOnly;
  if (name == "reef_like") return Policy::ReefLike;
  throw ConfigError("unknown policy: " + name);
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::FullSystem: return "full_system";
    case Policy::MpsLike: return "mps_like";
    case Policy::MigLike: return "mig_like";
    case Policy::TimeSlice: return "time_slice";
    case Policy::PriorityOnly: return "priority_only";
    case Policy::ReefLike: return "reef_like";
  }
  throw ConfigError("bad policy value");
}

void SchedulerConfig::validate() const {
  if (max_outstanding_atoms < 1)
    throw ConfigError("max_outstanding_atoms must be >= 1");
  if (atom_duration <= 0) throw ConfigError("atom_duration must be positive");
  if (steal_horizon < 0) throw ConfigError("steal_horizon must be >= 0");
  if (disable_factor <= 0) throw ConfigError("disable_factor must be > 0");
  if (time_slice_window <= 0)
    throw ConfigError("time_slice window must be positive");
}

Scheduler::Scheduler(DeviceEngine& engine, SchedulerConfig cfg,
                     std::vector<AppWorkload> apps)
    : engine_(engine),
      cfg_(std::move(cfg)),
      predictor_(cfg_.predictor),
      rightsizer_(cfg_.rightsizer),
      power_(cfg_.dvfs, engine.freq_domain().supported_mhz) {
  cfg_.validate();
  if (apps.empty()) throw ConfigError("scenario needs at least one app");
  const int total = engine_.topology().total_tpcs();
  tpcs_.resize(total);

  int quota_sum = 0;
  for (auto& wl : apps) {
    AppState a;
    a.wl = std::move(wl);
    a.dvfs_target = engine_.freq_domain().f_max();
    apps_.push_back(std::move(a));
  }

  if (cfg_.policy == Policy::FullSystem) {
    int ofs = 0;
    for (int i = 0; i < app_count(); ++i) {
      int q = apps_[i].wl.spec.tpc_quota;
      if (q < 1) throw ConfigError("tpc_quota must be >= 1 under full_system");
      quota_sum += q;
      for (int t = 0; t < q; ++t) {
        apps_[i].owned.push_back(ofs + t);
        tpcs_[ofs + t].owner = i;
      }
      ofs += q;
    }
    if (quota_sum > total)
      throw ConfigError("sum of tpc_quota exceeds total TPCs");
  } else if (cfg_.policy == Policy::MigLike) {
    std::set<int> used;
    for (int i = 0; i < app_count(); ++i) {
      auto it = cfg_.mig_gpcs.find(apps_[i].wl.spec.app_id);
      if (it == cfg_.mig_gpcs.end()) continue;  // no partition: never runs
      for (int g : it->second) {
        if (g < 0 || g >= engine_.topology().gpc_count)
          throw ConfigError("mig partition references GPC out of range");
        if (!used.insert(g).second)
          throw ConfigError("mig partitions overlap on a GPC");
        for (int t = 0; t < engine_.topology().tpcs_per_gpc; ++t) {
          int id = g * engine_.topology().tpcs_per_gpc + t;
          apps_[i].owned.push_back(id);
          tpcs_[id].owner = i;
        }
      }
      std::sort(apps_[i].owned.begin(), apps_[i].owned.end());
    }
  }

  for (int i = 0; i < app_count(); ++i)
    if (apps_[i].wl.spec.priority == PriorityClass::HP)
      dispatch_order_.push_back(i);
  for (int i = 0; i < app_count(); ++i)
    if (apps_[i].wl.spec.priority == PriorityClass::BE)
      dispatch_order_.push_back(i);

  engine_.set_atom_complete_handler(
      [this](const AtomCompletion& done) { on_atom_complete(done); });
}

int Scheduler::base_priority(int app) const {
  switch (cfg_.policy) {
    case Policy::FullSystem:
    case Policy::PriorityOnly:
    case Policy::ReefLike:
      return apps_[app].wl.spec.priority == PriorityClass::HP ? kHpPriority
                                                              : kBePriority;
    default:
      return kBePriority;  // uniform: FIFO by dispatch order
  }
}

bool Scheduler::has_work(int app) const {
  return !apps_[app].launchq.empty() || apps_[app].active.has_value();
}

void Scheduler::run(Duration horizon) {
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  horizon_ = horizon;
  engine_.set_metrics_horizon(horizon);
  for (int i = 0; i < app_count(); ++i) {
    AppState& a = apps_[i];
    if (a.wl.closed_loop) {
      engine_.schedule_call(0, [this, i] { on_arrival(i, engine_.now()); });
    } else {
      for (SimTime t : a.wl.arrivals) {
        if (t >= horizon) break;
        engine_.schedule_call(t, [this, i] { on_arrival(i, engine_.now()); });
      }
    }
  }
  engine_.run_all();
}

const RequestTemplate& request_template(const AppWorkload& wl, long n) {
  if (wl.per_request.empty()) return wl.request;
  return wl.per_request[static_cast<std::size_t>(n) % wl.per_request.size()];
}

void Scheduler::on_arrival(int app, SimTime t) {
  AppState& a = apps_[app];
  enqueue_request(app, t, request_template(a.wl, a.requests_issued));
  ++a.requests_issued;
  if (cfg_.policy == Policy::TimeSlice) {
    if (!has_work(active_slice_)) active_slice_ = app;
    arm_time_slice();
  }
  dispatch_cycle();
}

void Scheduler::enqueue_request(int app, SimTime arrival,
                                const RequestTemplate& tmpl) {
  if (tmpl.kernels.empty())
    throw ConfigError("request template has no kernels");
  AppState& a = apps_[app];
  long request_idx = static_cast<long>(a.requests.size());
  a.requests.push_back({arrival, -1});
  for (std::size_t i = 0; i < tmpl.kernels.size(); ++i) {
    const KernelRecord& k = tmpl.kernels[i];
    SimKernelSpec spec;
    spec.total_blocks = k.total_blocks();
    spec.block_duration_at_fmax = k.block_duration_at_fmax;
    spec.sensitivity_s = k.sensitivity_s;
    spec.occupancy_per_tpc = k.occupancy_per_tpc;
    Launch launch;
    launch.kid = engine_.register_kernel(spec);
    launch.blocks = spec.total_blocks;
    launch.occ = spec.occupancy_per_tpc;
    launch.key = {app, predictor_.next_ordinal(app)};
    launch.request_idx = request_idx;
    launch.last_in_request = i + 1 == tmpl.kernels.size();
    a.launchq.push_back(launch);
  }
  predictor_.batch_boundary(app);  // the request ends in a sync
}

void Scheduler::dispatch_cycle() {
  if (in_dispatch_) return;
  in_dispatch_ = true;
  for (int app : dispatch_order_) try_dispatch(app);
  in_dispatch_ = false;
}

bool Scheduler::try_dispatch(int app) {
  return cfg_.policy == Policy::FullSystem ? dispatch_full_system(app)
                                           : dispatch_shared(app);
}

bool Scheduler::dispatch_shared(int app) {
  AppState& a = apps_[app];
  if (a.active || a.launchq.empty()) return false;
  if (cfg_.policy == Policy::TimeSlice && app != active_slice_) return false;
  if (cfg_.policy == Policy::MigLike && a.owned.empty()) return false;
  if (cfg_.policy == Policy::ReefLike &&
      a.wl.spec.priority == PriorityClass::BE) {
    for (int i = 0; i < app_count(); ++i)
      if (apps_[i].wl.spec.priority == PriorityClass::HP && has_work(i))
        return false;  // launch gate closed while any HP app is busy
  }

  ActiveKernel ak;
  ak.launch = a.launchq.front();
  a.launchq.pop_front();
  ak.atoms = {{0, ak.launch.blocks}};
  a.active = std::move(ak);

  std::vector<int> tpcs;
  if (cfg_.policy == Policy::MigLike) {
    tpcs = a.owned;
  } else {
    tpcs.resize(tpcs_.size());
    for (std::size_t t = 0; t < tpcs_.size(); ++t) tpcs[t] = static_cast<int>(t);
  }
  dispatch_atom(app, tpcs, false);
  return true;
}

int Scheduler::idle_owned(int app, std::vector<int>* out) const {
  int n = 0;
  for (int t : apps_[app].owned) {
    if (tpcs_[t].resident_atoms == 0) {
      ++n;
      if (out) out->push_back(t);
    }
  }
  return n;
}

std::vector<int> Scheduler::steal_tpcs(int app, int want) const {
  std::vector<int> out;
  if (!cfg_.stealing_enabled || want < 1) return out;
  // A best-effort thief backs off entirely while any high-priority app is
  // busy: its quota TPCs are not "underutilized" capacity then, and the next
  // atom boundary is where revocation takes effect.
  if (apps_[app].wl.spec.priority == PriorityClass::BE) {
    for (int i = 0; i < app_count(); ++i)
      if (apps_[i].wl.spec.priority == PriorityClass::HP && has_work(i))
        return out;
  }
  SimTime limit = engine_.now() + cfg_.steal_horizon;
  auto stealable = [&](const TpcLedgerEntry& e) {
    if (e.owner == app) return false;
    if (e.resident_atoms > 0) return false;
    if (e.busy_until > limit) return false;
    if (e.owner >= 0 && has_work(e.owner)) return false;  // revocation
    return true;
  };
  // Unowned TPCs are the least disruptive targets; take them before dipping
  // into another app's quota.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t t = 0; t < tpcs_.size(); ++t) {
      const TpcLedgerEntry& e = tpcs_[t];
      if ((pass == 0) != (e.owner < 0)) continue;
      if (!stealable(e)) continue;
      out.push_back(static_cast<int>(t));
      if (static_cast<int>(out.size()) == want) return out;
    }
  }
  return out;
}

bool Scheduler::dispatch_full_system(int app) {
  AppState& a = apps_[app];
  bool any = false;
  for (;;) {
    if (!a.active) {
      if (a.launchq.empty()) break;
      ActiveKernel ak;
      ak.launch = a.launchq.front();
      a.launchq.pop_front();
      a.active = std::move(ak);
    }
    ActiveKernel& ak = *a.active;
    const Launch& L = ak.launch;

    if (ak.first_dispatch < 0) {
      // Plan the kernel: width, TPC acquisition (patient: wait for the
      // guaranteed share to be fully idle rather than dispatch narrow), atoms.
      int total = engine_.topology().total_tpcs();
      int cap = cfg_.occupancy_filter ? filter_cap(L.blocks, L.occ, total)
                                      : total;
      if (a.wl.spec.tpc_cap > 0) cap = std::min(cap, a.wl.spec.tpc_cap);
      int quota = static_cast<int>(a.owned.size());
      bool cold = !predictor_.has_any(L.key);
      bool may_steal = cfg_.stealing_enabled && !cold;
      int wide = may_steal ? cap : std::min(cap, quota);
      int desired = std::max(1, wide);
      if (cold) {
        desired = std::max(1, std::min(cap, quota));
        may_steal = false;
      } else if (cfg_.rightsizer_enabled) {
        bool slo_ok = true;
        if (a.wl.spec.priority == PriorityClass::HP && a.wl.spec.slo &&
            a.wl.spec.slo->latency)
          slo_ok = a.last_latency >= 0 &&
                   a.last_latency * 2 <= *a.wl.spec.slo->latency;
        switch (rightsizer_.decide(L.key, static_cast<int>(a.launchq.size()),
                                   slo_ok)) {
          case ProbeDecision::UseFull:
            break;
          case ProbeDecision::ProbeOneTpc:
            desired = 1;
            ak.probe = true;
            may_steal = false;
            break;
          case ProbeDecision::UseFit:
            desired = std::min(
                desired, rightsizer_.choose(L.key, quota, L.blocks, L.occ));
            break;
        }
      }

      int need = std::min(desired, quota);
      std::vector<int> sel;
      idle_owned(app, &sel);
      if (static_cast<int>(sel.size()) < need) break;  // patient wait
      if (static_cast<int>(sel.size()) > desired) sel.resize(desired);
      if (static_cast<int>(sel.size()) < desired && may_steal) {
        auto extra = steal_tpcs(app, desired - static_cast<int>(sel.size()));
        sel.insert(sel.end(), extra.begin(), extra.end());
      }
      if (sel.empty()) break;
      ak.tpcs = sel;
      ak.desired = desired;
      ak.may_steal = may_steal;

      FreqMhz f = engine_.current_mhz();
      Prediction p = predictor_.predict(
          L.key, static_cast<int>(sel.size()), f, L.blocks);
      bool atomize =
          cfg_.atomizer_enabled && !cold &&
          should_atomize(p.latency, L.blocks, cfg_.atom_duration,
                         cfg_.disable_factor);
      long wave = static_cast<long>(sel.size()) * L.occ;
      ak.atoms = atomize
                     ? plan_atoms(L.blocks, p.latency, cfg_.atom_duration, wave)
                     : std::vector<AtomRange>{{0, L.blocks}};
      ak.atomized = ak.atoms.size() > 1;
    }

    if (ak.next_atom >= ak.atoms.size()) break;  // draining completions

    std::vector<int> tpcs = ak.tpcs;
    if (ak.first_dispatch >= 0) {
      if (cfg_.stealing_enabled) {
        // With stealing on, atoms go out one at a time and each re-acquires
        // its TPC set: revocation takes effect at the atom boundary, and a
        // kernel widens mid-flight when capacity frees up.
        if (ak.outstanding > 0) break;
        std::vector<int> sel;
        idle_owned(app, &sel);
        if (static_cast<int>(sel.size()) > ak.desired) sel.resize(ak.desired);
        if (static_cast<int>(sel.size()) < ak.desired && ak.may_steal) {
          auto extra =
              steal_tpcs(app, ak.desired - static_cast<int>(sel.size()));
          sel.insert(sel.end(), extra.begin(), extra.end());
        }
        if (sel.empty()) break;
        tpcs = sel;
        ak.tpcs = sel;
      } else if (ak.outstanding >= cfg_.max_outstanding_atoms) {
        break;
      }
    }
    bool stolen = false;
    for (int t : tpcs) stolen |= tpcs_[t].owner != app;
    dispatch_atom(app, tpcs, stolen);
    any = true;
  }
  return any;
}

void Scheduler::dispatch_atom(int app, const std::vector<int>& tpcs,
                              bool stolen) {
  AppState& a = apps_[app];
  ActiveKernel& ak = *a.active;
  const Launch& L = ak.launch;
  AtomRange r = ak.atoms[ak.next_atom++];
  FreqMhz f = engine_.current_mhz();
  Prediction p =
      predictor_.predict(L.key, static_cast<int>(tpcs.size()), f, r.size());
  int prio = stolen ? kStolenPriority : base_priority(app);
  AtomId id = engine_.submit_atom(L.kid, r.lo, r.hi, tpcs, prio, ak.atomized,
                                  static_cast<std::uint64_t>(app));
  AtomInfo info;
  info.app = app;
  info.key = L.key;
  info.config = {static_cast<int>(tpcs.size()), f, r.size()};
  info.predicted = p.latency;
  info.confidence = p.confidence;
  info.stolen = stolen;
  info.tpcs = tpcs;
  in_flight_[id] = std::move(info);

  ++ak.outstanding;
  if (ak.first_dispatch < 0) {
    ak.first_dispatch = engine_.now();
    ak.freq0 = f;
  }
  ak.max_width = std::max(ak.max_width, static_cast<int>(tpcs.size()));
  SimTime until = engine_.now() + p.latency;
  for (int t : tpcs) {
    TpcLedgerEntry& e = tpcs_[t];
    ++e.resident_atoms;
    if (stolen) ++e.resident_stolen;
    e.busy_until = std::max(e.busy_until, until);
  }
}

void Scheduler::on_atom_complete(const AtomCompletion& done) {
  auto it = in_flight_.find(done.atom);
  if (it == in_flight_.end())
    throw InvariantError("completion for unknown atom");
  AtomInfo info = std::move(it->second);
  in_flight_.erase(it);

  Duration actual = done.complete_time - done.dispatch_time;
  prediction_log_.push_back(
      {info.key, info.config, info.predicted, actual,
       apps_[info.app].wl.spec.priority == PriorityClass::HP,
       info.confidence});
  predictor_.record(info.key, info.config, actual);

  for (int t : info.tpcs) {
    TpcLedgerEntry& e = tpcs_[t];
    if (--e.resident_atoms < 0)
      throw InvariantError("negative resident atom count");
    if (info.stolen) --e.resident_stolen;
    if (e.resident_atoms == 0)
      e.busy_until = std::min(e.busy_until, engine_.now());
  }

  AppState& a = apps_[info.app];
  if (!a.active) throw InvariantError("completion without an active kernel");
  ActiveKernel& ak = *a.active;
  if (--ak.outstanding == 0 && ak.next_atom == ak.atoms.size())
    finish_kernel(info.app, engine_.now());
  dispatch_cycle();
}

void Scheduler::finish_kernel(int app, SimTime now) {
  AppState& a = apps_[app];
  ActiveKernel ak = std::move(*a.active);
  a.active.reset();
  const Launch& L = ak.launch;
  Duration whole = now - ak.first_dispatch;

  if (cfg_.policy == Policy::FullSystem) {
    if (cfg_.rightsizer_enabled) rightsizer_.observe(L.key, ak.max_width, whole);
    if (cfg_.dvfs_enabled) power_.observe(L.key, whole, ak.freq0);
  }

  SimTime start = std::min(ak.first_dispatch, horizon_);
  SimTime end = std::min(now, horizon_);
  a.tpc_time += static_cast<double>(ak.max_width) *
                static_cast<double>(end - start);
  if (L.last_in_request) finish_request(app, L.request_idx, now);
}

void Scheduler::finish_request(int app, long request_idx, SimTime now) {
  AppState& a = apps_[app];
  RequestRecord& rec = a.requests[static_cast<std::size_t>(request_idx)];
  rec.completion = now;
  a.last_latency = now - rec.arrival;

  if (cfg_.policy == Policy::FullSystem && cfg_.dvfs_enabled) {
    a.dvfs_target = power_.plan_batch(app);
    apply_dvfs();
  }
  if (a.wl.closed_loop && now < horizon_) {
    enqueue_request(app, now, request_template(a.wl, a.requests_issued));
    ++a.requests_issued;
  }
}

void Scheduler::apply_dvfs() {
  std::vector<FreqMhz> targets;
  for (int i = 0; i < app_count(); ++i)
    if (has_work(i) || apps_[i].wl.closed_loop) targets.push_back(apps_[i].dvfs_target);
  if (targets.empty()) return;  // idle device holds its frequency
  engine_.request_frequency(PowerManager::arbitrate(targets));
}

void Scheduler::arm_time_slice() {
  if (slice_armed_) return;
  slice_armed_ = true;
  engine_.schedule_call(engine_.now() + cfg_.time_slice_window,
                        [this] { rotate_time_slice(); });
}

void Scheduler::rotate_time_slice() {
  slice_armed_ = false;
  bool busy = false;
  for (int i = 0; i < app_count(); ++i) busy |= has_work(i);
  if (!busy && in_flight_.empty()) return;  // re-armed on the next arrival

  int n = app_count();
  for (int step = 1; step <= n; ++step) {
    int cand = (active_slice_ + step) % n;
    if (has_work(cand)) {
      active_slice_ = cand;
      break;
    }
  }
  // Mid-flight kernels of non-active apps finish their resident blocks but
  // start no new ones until their next window.
  for (const auto& [id, info] : in_flight_)
    engine_.set_atom_paused(id, info.app != active_slice_);
  arm_time_slice();
  dispatch_cycle();
}

std::vector<Duration> Scheduler::completed_latencies(int app) const {
  std::vector<Duration> out;
  for (const RequestRecord& r : apps_[app].requests)
    if (r.completion >= 0 && r.completion <= horizon_)
      out.push_back(r.completion - r.arrival);
  return out;
}

long Scheduler::offered(int app) const { return apps_[app].requests_issued; }

long Scheduler::completed(int app) const {
  long n = 0;
  for (const RequestRecord& r : apps_[app].requests)
    if (r.completion >= 0 && r.completion <= horizon_) ++n;
  return n;
}

double Scheduler::allocated_tpc_time() const {
  double sum = 0.0;
  for (const AppState& a : apps_) sum += a.tpc_time;
  return sum;
}

}  // namespace gpuos
