#include "gpuos/device.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gpuos {

Duration duration_from_us(double us) {
  return static_cast<Duration>(std::llround(us * 1000.0));
}
Duration duration_from_ms(double ms) {
  return static_cast<Duration>(std::llround(ms * 1e6));
}
double duration_to_us(Duration d) { return static_cast<double>(d) / 1000.0; }
double duration_to_ms(Duration d) { return static_cast<double>(d) / 1e6; }

void DeviceTopology::validate() const {
  if (gpc_count < 1 || tpcs_per_gpc < 1 || sms_per_tpc < 1)
    throw ConfigError("device topology counts must be >= 1");
}

DeviceTopology DeviceTopology::a100_like() { return {6, 9, 2}; }
DeviceTopology DeviceTopology::h100_like() { return {8, 9, 2}; }

bool FrequencyDomain::supports(FreqMhz f) const {
  return std::find(supported_mhz.begin(), supported_mhz.end(), f) !=
         supported_mhz.end();
}

void FrequencyDomain::validate() const {
  if (supported_mhz.empty())
    throw ConfigError("frequency table must be non-empty");
  if (!std::is_sorted(supported_mhz.begin(), supported_mhz.end()))
    throw ConfigError("frequency table must be ascending");
  if (supported_mhz.front() <= 0)
    throw ConfigError("frequencies must be positive");
  if (switch_latency < 0) throw ConfigError("switch latency must be >= 0");
}

void SimKernelSpec::validate() const {
  if (total_blocks < 1) throw ConfigError("kernel needs >= 1 block");
  if (occupancy_per_tpc < 1) throw ConfigError("occupancy must be >= 1");
  if (block_duration_at_fmax <= 0)
    throw ConfigError("block duration must be > 0");
  if (sensitivity_s < 0.0 || sensitivity_s > 1.0)
    throw ConfigError("sensitivity must be in [0,1]");
  if (prelude_overhead < 0) throw ConfigError("prelude overhead must be >= 0");
}

double PowerModel::watts(int active_tpcs, FreqMhz f, FreqMhz f_max) const {
  double ratio = static_cast<double>(f) / static_cast<double>(f_max);
  return p_static_w + p_tpc_w * active_tpcs * std::pow(ratio, alpha);
}

Duration block_latency(const SimKernelSpec& spec, FreqMhz f,
                       const FrequencyDomain& fd) {
  if (!fd.supports(f)) throw ConfigError("unsupported frequency");
  double scale =
      1.0 + spec.sensitivity_s *
                (static_cast<double>(fd.f_max()) / static_cast<double>(f) - 1.0);
  return static_cast<Duration>(
      std::llround(static_cast<double>(spec.block_duration_at_fmax) * scale));
}

Duration reference_kernel_latency(const SimKernelSpec& spec, int t, FreqMhz f,
                                  const FrequencyDomain& fd) {
  if (t < 1) throw ConfigError("tpc count must be >= 1");
  long slots = static_cast<long>(t) * spec.occupancy_per_tpc;
  long waves = (spec.total_blocks + slots - 1) / slots;
  return waves * block_latency(spec, f, fd);
}

DeviceEngine::DeviceEngine(DeviceTopology topo, FrequencyDomain freq,
                           PowerModel power)
    : topo_(topo), freq_(std::move(freq)), power_(power) {
  topo_.validate();
  freq_.validate();
  current_mhz_ = freq_.f_max();
  tpcs_.resize(topo_.total_tpcs());
}

KernelId DeviceEngine::register_kernel(const SimKernelSpec& spec) {
  spec.validate();
  kernels_.push_back(spec);
  blocks_executed_.push_back(0);
  return static_cast<KernelId>(kernels_.size() - 1);
}

long DeviceEngine::blocks_executed(KernelId k) const {
  return blocks_executed_.at(k);
}

bool DeviceEngine::fits(const Tpc& tpc, int occupancy) const {
  // used + 1/occ <= 1  <=>  num*occ + den <= den*occ
  return tpc.cap_num * occupancy + tpc.cap_den <= tpc.cap_den * occupancy;
}

void DeviceEngine::cap_add(Tpc& tpc, int occupancy) {
  long num = tpc.cap_num * occupancy + tpc.cap_den;
  long den = tpc.cap_den * occupancy;
  long g = std::gcd(num, den);
  tpc.cap_num = num / (g ? g : 1);
  tpc.cap_den = den / (g ? g : 1);
}

void DeviceEngine::cap_sub(Tpc& tpc, int occupancy) {
  long num = tpc.cap_num * occupancy - tpc.cap_den;
  long den = tpc.cap_den * occupancy;
  if (num < 0) throw InvariantError("TPC slot accounting went negative");
  if (num == 0) {
    tpc.cap_num = 0;
    tpc.cap_den = 1;
    return;
  }
  long g = std::gcd(num, den);
  tpc.cap_num = num / g;
  tpc.cap_den = den / g;
}

AtomId DeviceEngine::submit_atom(KernelId kernel, long lo, long hi,
                                 const std::vector<int>& tpcs, int priority,
                                 bool atomized, std::uint64_t tag) {
  const SimKernelSpec& spec = kernels_.at(kernel);
  if (tpcs.empty()) throw ConfigError("atom needs a non-empty TPC set");
  if (lo < 0 || hi <= lo || hi > spec.total_blocks)
    throw ConfigError("atom block range out of bounds");
  for (int t : tpcs)
    if (t < 0 || t >= topo_.total_tpcs())
      throw ConfigError("TPC id out of range");

  AtomRun run;
  run.kernel = kernel;
  run.next_block = lo;
  run.end_block = hi;
  run.tpcs = tpcs;
  std::sort(run.tpcs.begin(), run.tpcs.end());
  run.priority = priority;
  run.seq = next_seq_++;
  run.atomized = atomized;
  run.dispatch_time = now_;
  run.tag = tag;
  atoms_.push_back(std::move(run));
  AtomId id = static_cast<AtomId>(atoms_.size() - 1);

  for (int t : atoms_[id].tpcs) {
    auto& res = tpcs_[t].resident;
    auto pos = std::find_if(res.begin(), res.end(), [&](AtomId other) {
      const AtomRun& o = atoms_[other];
      const AtomRun& a = atoms_[id];
      return o.priority < a.priority ||
             (o.priority == a.priority && o.seq > a.seq);
    });
    res.insert(pos, id);
  }
  for (int t : atoms_[id].tpcs) fill_tpc(t);
  if (atoms_[id].next_block == atoms_[id].end_block &&
      atoms_[id].in_flight == 0) {
    // Can happen only for a zero-size range, which is rejected above.
    throw InvariantError("atom completed at submit");
  }
  return id;
}

void DeviceEngine::set_atom_paused(AtomId atom, bool paused) {
  AtomRun& run = atoms_.at(atom);
  if (run.done || run.paused == paused) return;
  run.paused = paused;
  if (!paused)
    for (int t : run.tpcs) fill_tpc(t);
}

void DeviceEngine::start_block(int tpc_id, AtomId atom_id) {
  Tpc& tpc = tpcs_[tpc_id];
  AtomRun& run = atoms_[atom_id];
  const SimKernelSpec& spec = kernels_[run.kernel];
  advance_accounting(now_);
  cap_add(tpc, spec.occupancy_per_tpc);
  if (tpc.blocks_running++ == 0) ++active_tpcs_;
  ++run.in_flight;
  ++run.next_block;
  ++blocks_executed_[run.kernel];
  Duration d = block_latency(spec, current_mhz_, freq_);
  if (run.atomized) d += spec.prelude_overhead;
  push_block_complete(now_ + d, tpc_id, atom_id);
}

void DeviceEngine::fill_tpc(int tpc_id) {
  Tpc& tpc = tpcs_[tpc_id];
  for (;;) {
    // Highest-priority resident atom with waiting blocks; no bypass by
    // lower-priority atoms even if they would fit.
    AtomId chosen = 0;
    bool found = false;
    for (AtomId id : tpc.resident) {
      const AtomRun& run = atoms_[id];
      if (run.paused || run.next_block >= run.end_block) continue;
      chosen = id;
      found = true;
      break;
    }
    if (!found) return;
    if (!fits(tpc, kernels_[atoms_[chosen].kernel].occupancy_per_tpc)) return;
    start_block(tpc_id, chosen);
  }
}

void DeviceEngine::finish_atom(AtomId atom_id) {
  AtomRun& run = atoms_[atom_id];
  run.done = true;
  for (int t : run.tpcs) {
    auto& res = tpcs_[t].resident;
    res.erase(std::remove(res.begin(), res.end(), atom_id), res.end());
  }
  if (on_atom_complete_) {
    AtomCompletion c{atom_id, run.tag, run.dispatch_time, now_};
    on_atom_complete_(c);
  }
}

SimTime DeviceEngine::request_frequency(FreqMhz f) {
  if (!freq_.supports(f)) throw ConfigError("unsupported frequency");
  if (f == current_mhz_) {
    pending_switch_.reset();
    ++switch_gen_;
    return now_;
  }
  // Re-requesting the already-pending target keeps the in-flight switch; only
  // a different target restarts the switch latency.
  if (pending_switch_ && pending_switch_->first == f)
    return pending_switch_->second;
  SimTime effective = now_ + freq_.switch_latency;
  pending_switch_ = {f, effective};
  std::uint64_t gen = ++switch_gen_;
  Event e;
  e.t = effective;
  e.seq = next_seq_++;
  e.kind = EventKind::FreqSwitch;
  e.gen = gen;
  events_.push(std::move(e));
  return effective;
}

void DeviceEngine::schedule_call(SimTime t, std::function<void()> fn) {
  if (t < now_) throw InvariantError("scheduling a call in the past");
  Event e;
  e.t = t;
  e.seq = next_seq_++;
  e.kind = EventKind::Call;
  e.fn = std::move(fn);
  events_.push(std::move(e));
}

void DeviceEngine::push_block_complete(SimTime t, int tpc, AtomId atom) {
  Event e;
  e.t = t;
  e.seq = next_seq_++;
  e.kind = EventKind::BlockComplete;
  e.tpc = tpc;
  e.atom = atom;
  events_.push(std::move(e));
}

void DeviceEngine::advance_accounting(SimTime t) {
  SimTime upto = t;
  if (metrics_horizon_ >= 0) upto = std::min(upto, metrics_horizon_);
  if (upto > last_account_) {
    double dt_s = static_cast<double>(upto - last_account_) / 1e9;
    energy_j_ += power_.watts(active_tpcs_, current_mhz_, freq_.f_max()) * dt_s;
    busy_integral_ +=
        static_cast<double>(active_tpcs_) * (upto - last_account_);
    freq_residency_[current_mhz_] += upto - last_account_;
  }
  last_account_ = std::max(last_account_, t);
}

bool DeviceEngine::step() {
  if (events_.empty()) return false;
  Event e = events_.top();
  events_.pop();
  advance_accounting(e.t);
  now_ = e.t;
  switch (e.kind) {
    case EventKind::BlockComplete: {
      AtomRun& run = atoms_[e.atom];
      Tpc& tpc = tpcs_[e.tpc];
      cap_sub(tpc, kernels_[run.kernel].occupancy_per_tpc);
      if (--tpc.blocks_running == 0) --active_tpcs_;
      --run.in_flight;
      fill_tpc(e.tpc);
      if (run.in_flight == 0 && run.next_block == run.end_block && !run.done)
        finish_atom(e.atom);
      break;
    }
    case EventKind::FreqSwitch:
      if (e.gen == switch_gen_ && pending_switch_) {
        current_mhz_ = pending_switch_->first;
        pending_switch_.reset();
      }
      break;
    case EventKind::Call:
      e.fn();
      break;
  }
  return true;
}

void DeviceEngine::run_all() {
  while (step()) {
  }
}

}  // namespace gpuos
