#include "gpuos/sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gpuos {

using nlohmann::json;

std::vector<FreqMhz> default_freq_table() {
  return {540, 675, 810, 945, 1080, 1215, 1350, 1410};
}

void ScenarioConfig::validate() const {
  topo.validate();
  freq.validate();
  sched.validate();
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  if (apps.empty()) throw ConfigError("scenario needs at least one app");
  for (std::size_t i = 0; i < apps.size(); ++i) {
    const AppSpec& s = apps[i].spec;
    if (s.app_id.empty()) throw ConfigError("app id must be non-empty");
    for (std::size_t k = 0; k < i; ++k)
      if (apps[k].spec.app_id == s.app_id)
        throw ConfigError("duplicate app id: " + s.app_id);
    if (s.priority == PriorityClass::HP &&
        (!s.slo || (!s.slo->latency && !s.slo->throughput_fraction)))
      throw ConfigError("high-priority app " + s.app_id + " needs an SLO");
    if (s.priority == PriorityClass::BE && s.slo)
      throw ConfigError("best-effort app " + s.app_id + " must not carry an SLO");
  }
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t lane) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (lane + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Dist parse_dist(const json& j, const char* what) {
  Dist d;
  if (j.is_number()) {
    d.kind = Dist::Const;
    d.a = j.get<double>();
    return d;
  }
  if (j.contains("const")) {
    d.kind = Dist::Const;
    d.a = j.at("const").get<double>();
  } else if (j.contains("uniform")) {
    d.kind = Dist::Uniform;
    d.a = j.at("uniform").at(0).get<double>();
    d.b = j.at("uniform").at(1).get<double>();
  } else if (j.contains("choice")) {
    d.kind = Dist::Choice;
    d.choices = j.at("choice").get<std::vector<double>>();
  } else {
    throw ConfigError(std::string(what) + ": unknown distribution");
  }
  return d;
}

KernelRecord parse_kernel(const json& j) {
  KernelRecord k;
  if (j.contains("grid")) {
    k.grid_x = j.at("grid").at(0).get<long>();
    k.grid_y = j.at("grid").at(1).get<long>();
    k.grid_z = j.at("grid").at(2).get<long>();
  } else {
    k.grid_x = j.at("blocks").get<long>();
  }
  k.block_duration_at_fmax = duration_from_us(j.at("block_us").get<double>());
  k.sensitivity_s = j.value("s", 1.0);
  k.occupancy_per_tpc = j.value("occ", 1);
  return k;
}

AppWorkload parse_app(const json& j, const ScenarioConfig& cfg) {
  AppWorkload wl;
  wl.spec.app_id = j.at("id").get<std::string>();
  std::string prio = j.value("priority", "be");
  if (prio == "hp") {
    wl.spec.priority = PriorityClass::HP;
  } else if (prio == "be") {
    wl.spec.priority = PriorityClass::BE;
  } else {
    throw ConfigError("priority must be hp or be");
  }
  wl.spec.tpc_quota = j.value("quota", 0);
  wl.spec.tpc_cap = j.value("tpc_cap", 0);
  if (j.contains("slo_ms")) {
    SloSpec slo;
    slo.latency = duration_from_ms(j.at("slo_ms").get<double>());
    wl.spec.slo = slo;
  }

  const json& arr = j.at("arrival");
  if (arr.is_string() && arr.get<std::string>() == "closed_loop") {
    wl.spec.arrival = ClosedLoopArrival{};
    wl.closed_loop = true;
  } else if (arr.contains("poisson_rps")) {
    PoissonArrival p;
    p.rate_rps = arr.at("poisson_rps").get<double>();
    p.seed = arr.value("seed_offset", 0);
    wl.spec.arrival = p;
  } else if (arr.contains("times_ms")) {
    for (double t : arr.at("times_ms"))
      wl.arrivals.push_back(duration_from_ms(t));
    if (!std::is_sorted(wl.arrivals.begin(), wl.arrivals.end()))
      throw ConfigError("arrival times must be sorted");
  } else {
    throw ConfigError("arrival must be closed_loop, poisson, or times_ms");
  }

  // Workload may sit in a nested "workload" object or inline in the app.
  const json& w = j.contains("workload") ? j.at("workload") : j;
  if (w.contains("kernels")) {
    for (const json& k : w.at("kernels"))
      wl.request.kernels.push_back(parse_kernel(k));
  } else if (w.contains("model")) {
    const json& m = w.at("model");
    SynthModelParams p;
    p.layers = m.at("layers").get<int>();
    p.blocks_per_layer = parse_dist(m.at("blocks"), "blocks");
    p.block_us = parse_dist(m.at("block_us"), "block_us");
    if (m.contains("s")) p.sensitivity = parse_dist(m.at("s"), "s");
    if (m.contains("occ")) p.occupancy = parse_dist(m.at("occ"), "occ");
    p.seed = mix_seed(cfg.seed, m.value("seed_offset", 0));
    wl.request = synth_model(p);
  } else if (w.contains("trace")) {
    auto traced = load_trace(w.at("trace").get<std::string>());
    bool found = false;
    for (auto& t : traced) {
      if (t.app_id != wl.spec.app_id) continue;
      found = true;
      for (auto& [at, req] : t.requests) {
        wl.arrivals.push_back(at);
        wl.per_request.push_back(std::move(req));
      }
    }
    if (!found)
      throw ConfigError("trace has no records for app " + wl.spec.app_id);
    if (!wl.per_request.empty()) wl.request = wl.per_request.front();
  } else {
    throw ConfigError("app needs kernels, model, or trace");
  }
  return wl;
}

}  // namespace

namespace {
ScenarioConfig parse_scenario_impl(const json& j);
}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  try {
    return parse_scenario_impl(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
}

namespace {
ScenarioConfig parse_scenario_impl(const json& j) {
  ScenarioConfig c;
  c.name = j.value("name", "scenario");

  if (j.contains("device")) {
    const json& d = j.at("device");
    if (d.is_string()) {
      std::string prof = d.get<std::string>();
      if (prof == "a100-like") {
        c.topo = DeviceTopology::a100_like();
      } else if (prof == "h100-like") {
        c.topo = DeviceTopology::h100_like();
      } else {
        throw ConfigError("unknown device profile: " + prof);
      }
    } else {
      c.topo.gpc_count = d.at("gpc_count").get<int>();
      c.topo.tpcs_per_gpc = d.at("tpcs_per_gpc").get<int>();
      c.topo.sms_per_tpc = d.value("sms_per_tpc", 2);
    }
  }

  c.freq.supported_mhz =
      j.value("frequencies_mhz", default_freq_table());
  c.freq.switch_latency = duration_from_ms(j.value("switch_latency_ms", 50.0));
  if (j.contains("power")) {
    const json& p = j.at("power");
    c.power.p_static_w = p.value("static_w", c.power.p_static_w);
    c.power.p_tpc_w = p.value("tpc_w", c.power.p_tpc_w);
    c.power.alpha = p.value("alpha", c.power.alpha);
  }

  c.sched.policy = policy_from_string(j.value("policy", "full_system"));
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    SchedulerConfig& sc = c.sched;
    sc.max_outstanding_atoms =
        s.value("max_outstanding_atoms", sc.max_outstanding_atoms);
    sc.steal_horizon =
        duration_from_us(s.value("steal_horizon_us",
                                 duration_to_us(sc.steal_horizon)));
    sc.stealing_enabled = s.value("stealing", sc.stealing_enabled);
    sc.atomizer_enabled = s.value("atomizer", sc.atomizer_enabled);
    sc.rightsizer_enabled = s.value("rightsizer", sc.rightsizer_enabled);
    sc.dvfs_enabled = s.value("dvfs", sc.dvfs_enabled);
    sc.occupancy_filter = s.value("occupancy_filter", sc.occupancy_filter);
    sc.atom_duration =
        duration_from_us(s.value("atom_duration_us",
                                 duration_to_us(sc.atom_duration)));
    sc.disable_factor = s.value("disable_factor", sc.disable_factor);
    sc.time_slice_window =
        duration_from_us(s.value("time_slice_window_us",
                                 duration_to_us(sc.time_slice_window)));
    sc.rightsizer.slip_k = s.value("slip_k", sc.rightsizer.slip_k);
    sc.rightsizer.probe_depth_limit =
        s.value("probe_depth_limit", sc.rightsizer.probe_depth_limit);
    sc.dvfs.slip_k = s.value("dvfs_slip_k", sc.dvfs.slip_k);
    sc.predictor.ewma_beta = s.value("ewma_beta", sc.predictor.ewma_beta);
    sc.predictor.default_unknown =
        duration_from_us(s.value("default_unknown_us",
                                 duration_to_us(sc.predictor.default_unknown)));
  }
  if (j.contains("mig_gpcs"))
    for (auto& [app, gpcs] : j.at("mig_gpcs").items())
      c.sched.mig_gpcs[app] = gpcs.get<std::vector<int>>();

  c.horizon = duration_from_ms(j.value("horizon_ms", 1000.0));
  c.seed = j.value("seed", 1ULL);
  for (const json& a : j.at("apps")) c.apps.push_back(parse_app(a, c));
  c.validate();
  return c;
}
}  // namespace

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

namespace {

KernelRecord kernel(long blocks, double block_us, double s, int occ) {
  KernelRecord k;
  k.grid_x = blocks;
  k.block_duration_at_fmax = duration_from_us(block_us);
  k.sensitivity_s = s;
  k.occupancy_per_tpc = occ;
  return k;
}

ScenarioConfig preset_fig7() {
  ScenarioConfig c;
  c.name = "fig7";
  c.freq.supported_mhz = default_freq_table();
  c.sched.rightsizer_enabled = false;
  c.sched.dvfs_enabled = false;
  c.horizon = 10 * kSecond;

  AppWorkload hp;
  hp.spec = {"hp", PriorityClass::HP, 18, 0,
             SloSpec{80 * kMillisecond, std::nullopt}, PoissonArrival{}};
  hp.request.kernels = {kernel(360, 500, 0.6, 2), kernel(360, 500, 0.6, 2)};
  for (int burst = 0; burst < 100; ++burst)
    for (int r = 0; r < 5; ++r)
      hp.arrivals.push_back(burst * 100 * kMillisecond);

  AppWorkload be;
  be.spec = {"be", PriorityClass::BE, 9, 36, std::nullopt, PoissonArrival{}};
  for (int i = 0; i < 6; ++i)
    be.request.kernels.push_back(kernel(2160, 2000, 0.3, 4));
  for (int burst = 0; burst < 100; ++burst)
    be.arrivals.push_back(burst * 100 * kMillisecond + 95 * kMillisecond);

  c.apps = {hp, be};
  return c;
}

ScenarioConfig preset_inf_inf() {
  ScenarioConfig c;
  c.name = "inf-inf";
  c.freq.supported_mhz = default_freq_table();
  c.sched.rightsizer_enabled = false;
  c.sched.dvfs_enabled = false;
  c.sched.mig_gpcs = {{"inf-a", {0, 1, 2}}, {"inf-b", {3, 4, 5}}};
  c.horizon = 10 * kSecond;

  auto inference = [&](const std::string& id, Duration offset) {
    AppWorkload a;
    a.spec = {id, PriorityClass::HP, 18, 0,
              SloSpec{15 * kMillisecond, std::nullopt}, PoissonArrival{}};
    a.request.kernels = {kernel(360, 500, 0.5, 2), kernel(360, 500, 0.5, 2)};
    for (SimTime t = offset; t < c.horizon; t += 12 * kMillisecond)
      a.arrivals.push_back(t);
    return a;
  };

  AppWorkload be;
  be.spec = {"be", PriorityClass::BE, 9, 0, std::nullopt, ClosedLoopArrival{}};
  be.closed_loop = true;
  for (int i = 0; i < 29; ++i)
    be.request.kernels.push_back(kernel(540, 200, 0.4, 1));
  be.request.kernels.push_back(kernel(540, 2000, 0.4, 1));

  c.apps = {inference("inf-a", 0), inference("inf-b", 6 * kMillisecond), be};
  return c;
}

ScenarioConfig preset_inf_train() {
  ScenarioConfig c;
  c.name = "inf-train";
  c.freq.supported_mhz = default_freq_table();
  c.horizon = 10 * kSecond;

  AppWorkload inf;
  inf.spec = {"inf", PriorityClass::HP, 36, 0,
              SloSpec{60 * kMillisecond, std::nullopt}, PoissonArrival{}};
  for (int i = 0; i < 3; ++i) {
    inf.request.kernels.push_back(kernel(2880, 50, 0.7, 4));  // scalable
    inf.request.kernels.push_back(kernel(48, 1000, 0.2, 4));  // cap-limited
  }
  for (SimTime t = 0; t < c.horizon; t += 20 * kMillisecond)
    inf.arrivals.push_back(t);

  AppWorkload train;
  train.spec = {"train", PriorityClass::BE, 9, 0, std::nullopt,
                ClosedLoopArrival{}};
  train.closed_loop = true;
  train.request.kernels = {kernel(2160, 2000, 0.3, 4),
                           kernel(2160, 2000, 0.3, 4)};

  c.apps = {inf, train};
  return c;
}

}  // namespace

ScenarioConfig preset_scenario(const std::string& name) {
  if (name == "fig7") return preset_fig7();
  if (name == "inf-inf") return preset_inf_inf();
  if (name == "inf-train") return preset_inf_train();
  throw ConfigError("unknown preset: " + name);
}

std::vector<AppWorkload> resolve_workloads(const ScenarioConfig& cfg) {
  std::vector<AppWorkload> out = cfg.apps;
  for (std::size_t i = 0; i < out.size(); ++i) {
    AppWorkload& wl = out[i];
    if (wl.closed_loop || !wl.arrivals.empty()) continue;
    if (const auto* p = std::get_if<PoissonArrival>(&wl.spec.arrival)) {
      wl.arrivals = poisson_arrivals(p->rate_rps, cfg.horizon,
                                     mix_seed(cfg.seed, i * 2 + p->seed));
    } else {
      throw ConfigError("open-loop app " + wl.spec.app_id +
                        " has no arrivals");
    }
  }
  return out;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  DeviceEngine engine(cfg.topo, cfg.freq, cfg.power);
  Scheduler sched(engine, cfg.sched, resolve_workloads(cfg));
  sched.run(cfg.horizon);

  RunResult out;
  RunReport& rep = out.report;
  rep.horizon = cfg.horizon;
  rep.seed = cfg.seed;
  rep.policy = to_string(cfg.sched.policy);

  for (int i = 0; i < sched.app_count(); ++i) {
    const AppSpec& spec = sched.app_spec(i);
    AppReport app;
    app.app_id = spec.app_id;
    app.high_priority = spec.priority == PriorityClass::HP;
    app.offered = sched.offered(i);
    app.completed = sched.completed(i);
    std::vector<Duration> lat = sched.completed_latencies(i);
    if (!lat.empty()) {
      app.p50 = percentile(lat, 50);
      app.p95 = percentile(lat, 95);
      app.p99 = percentile(lat, 99);
    }
    app.throughput_vs_offered =
        app.offered > 0
            ? static_cast<double>(app.completed) / static_cast<double>(app.offered)
            : 0.0;
    long good = 0;
    if (spec.slo && spec.slo->latency) {
      for (Duration d : lat)
        if (d <= *spec.slo->latency) ++good;
      app.slo_attainment =
          lat.empty() ? 1.0
                      : static_cast<double>(good) /
                            static_cast<double>(lat.size());
      app.goodput_vs_offered =
          app.offered > 0
              ? static_cast<double>(good) / static_cast<double>(app.offered)
              : 0.0;
    } else {
      app.slo_attainment = 1.0;
      app.goodput_vs_offered = app.throughput_vs_offered;
    }
    rep.apps.push_back(app);
  }

  rep.tpc_utilization =
      engine.tpc_busy_integral() /
      (static_cast<double>(engine.topology().total_tpcs()) *
       static_cast<double>(cfg.horizon));
  rep.allocated_tpc_time = sched.allocated_tpc_time();
  rep.energy_joules = engine.energy_joules();
  rep.freq_residency = engine.freq_residency();

  std::vector<PredictionLogEntry> warm_hp;
  for (const PredictionLogEntry& e : sched.prediction_log())
    if (e.high_priority && e.confidence != Confidence::Unknown)
      warm_hp.push_back(e);
  if (!warm_hp.empty()) {
    MispredictionReport mp = misprediction_rate(warm_hp);
    rep.predictor_misprediction_rate_hp = mp.rate;
    rep.predictor_p99_abs_error_hp = mp.p99_abs_error;
    rep.predictions_hp = static_cast<long>(mp.count);
  }
  if (cfg.sched.rightsizer_enabled)
    rep.weighted_r_squared = sched.rightsizer().weighted_r_squared(
        &rep.fitted_operators);

  std::ostringstream log;
  for (int i = 0; i < sched.app_count(); ++i) {
    const auto& reqs = sched.requests(i);
    for (std::size_t r = 0; r < reqs.size(); ++r) {
      json line{{"app", sched.app_spec(i).app_id},
                {"request", r},
                {"arrival_us", duration_to_us(reqs[r].arrival)},
                {"completed", reqs[r].completion >= 0}};
      if (reqs[r].completion >= 0)
        line["latency_us"] =
            duration_to_us(reqs[r].completion - reqs[r].arrival);
      log << line.dump() << '\n';
    }
  }
  out.request_log = log.str();
  return out;
}

}  // namespace gpuos
