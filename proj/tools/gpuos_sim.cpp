// gpuos-sim: scenario runner for the GPU multi-tenancy simulator.
//
// Subcommands:
//   run         one scenario -> report JSON + per-request log
//   compare     one workload under several policies -> table
//   sweep       grid over slip_k / atom_duration / quota scale
//   fit-report  right-sizing fits and predictor accuracy for one scenario
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gpuos/sim.hpp"

namespace fs = std::filesystem;
using namespace gpuos;

namespace {

struct CommonOpts {
  std::string config;
  std::string preset;
  std::string policy;
  std::string out;
  std::uint64_t seed = 0;
  bool have_seed = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "Scenario config file (JSON)");
  cmd->add_option("--preset", o.preset, "Built-in scenario name");
  cmd->add_option("--policy", o.policy, "Override scheduling policy");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Override scenario seed")
      ->each([&o](const std::string&) { o.have_seed = true; });
}

ScenarioConfig load_common(const CommonOpts& o) {
  if (o.config.empty() == o.preset.empty())
    throw ConfigError("exactly one of --config or --preset is required");
  ScenarioConfig cfg = o.config.empty() ? preset_scenario(o.preset)
                                        : load_scenario_file(o.config);
  if (o.have_seed) cfg.seed = o.seed;
  if (!o.policy.empty()) cfg.sched.policy = policy_from_string(o.policy);
  return cfg;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << body;
}

void emit(const CommonOpts& o, const std::string& report,
          const std::string& request_log) {
  if (o.out.empty()) {
    std::cout << report << '\n';
    return;
  }
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "report.json", report + "\n");
  if (!request_log.empty())
    write_file(fs::path(o.out) / "requests.jsonl", request_log);
}

int cmd_run(const CommonOpts& o) {
  ScenarioConfig cfg = load_common(o);
  RunResult res = run_scenario(cfg);
  emit(o, res.report.to_json(), res.request_log);
  return 0;
}

bool same_workload(const ScenarioConfig& a, const ScenarioConfig& b) {
  if (a.apps.size() != b.apps.size()) return false;
  for (std::size_t i = 0; i < a.apps.size(); ++i) {
    if (a.apps[i].spec.app_id != b.apps[i].spec.app_id) return false;
    if (a.apps[i].request.kernels.size() != b.apps[i].request.kernels.size())
      return false;
  }
  return true;
}

int cmd_compare(const CommonOpts& o, const std::vector<std::string>& policies,
                const std::vector<std::string>& configs) {
  std::vector<ScenarioConfig> cfgs;
  if (!configs.empty()) {
    for (const std::string& path : configs)
      cfgs.push_back(load_scenario_file(path));
  } else {
    ScenarioConfig base = load_common(o);
    for (const std::string& p : policies) {
      ScenarioConfig c = base;
      c.sched.policy = policy_from_string(p);
      cfgs.push_back(c);
    }
  }
  if (cfgs.size() < 2)
    throw ConfigError("compare needs at least two policies or configs");
  for (std::size_t i = 1; i < cfgs.size(); ++i)
    if (!same_workload(cfgs[0], cfgs[i]))
      throw ConfigError("compare requires configs sharing one workload");

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream table;
  table << "policy          attainment  aggregate_completed  throughput_vs_offered\n";
  for (ScenarioConfig& c : cfgs) {
    if (o.have_seed) c.seed = o.seed;
    RunResult res = run_scenario(c);
    long aggregate = 0, offered = 0;
    double attain = 1.0;
    for (const AppReport& a : res.report.apps) {
      aggregate += a.completed;
      offered += a.offered;
      if (a.high_priority) attain = std::min(attain, a.slo_attainment);
    }
    double tput = offered > 0 ? static_cast<double>(aggregate) / offered : 0.0;
    char line[160];
    std::snprintf(line, sizeof line, "%-15s %10.4f %20ld %22.4f\n",
                  res.report.policy.c_str(), attain, aggregate, tput);
    table << line;
    rows.push_back({{"policy", res.report.policy},
                    {"slo_attainment", attain},
                    {"aggregate_completed", aggregate},
                    {"throughput_vs_offered", tput}});
  }
  std::cout << table.str();
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "compare.json", rows.dump(2) + "\n");
  }
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::vector<double>& slips,
              const std::vector<double>& atom_us,
              const std::vector<double>& quota_scales) {
  ScenarioConfig base = load_common(o);
  std::vector<double> s = slips.empty() ? std::vector<double>{base.sched.rightsizer.slip_k} : slips;
  std::vector<double> a = atom_us.empty()
                              ? std::vector<double>{duration_to_us(base.sched.atom_duration)}
                              : atom_us;
  std::vector<double> q = quota_scales.empty() ? std::vector<double>{1.0} : quota_scales;

  nlohmann::json rows = nlohmann::json::array();
  std::cout << "slip_k  atom_us  quota_scale  hp_p99_us  allocated_tpc_ms  energy_j\n";
  for (double slip : s) {
    for (double atom : a) {
      for (double scale : q) {
        ScenarioConfig c = base;
        c.sched.rightsizer.slip_k = slip;
        c.sched.atom_duration = duration_from_us(atom);
        for (AppWorkload& wl : c.apps)
          wl.spec.tpc_quota = std::max(
              1, static_cast<int>(wl.spec.tpc_quota * scale));
        RunResult res = run_scenario(c);
        Duration hp_p99 = 0;
        for (const AppReport& app : res.report.apps)
          if (app.high_priority) hp_p99 = std::max(hp_p99, app.p99);
        char line[160];
        std::snprintf(line, sizeof line,
                      "%6.3f %8.1f %12.3f %10.1f %17.3f %9.3f\n", slip, atom,
                      scale, duration_to_us(hp_p99),
                      res.report.allocated_tpc_time / 1e6 /
                          static_cast<double>(kMillisecond) * 1e6,
                      res.report.energy_joules);
        std::cout << line;
        rows.push_back({{"slip_k", slip},
                        {"atom_us", atom},
                        {"quota_scale", scale},
                        {"hp_p99_us", duration_to_us(hp_p99)},
                        {"allocated_tpc_time", res.report.allocated_tpc_time},
                        {"energy_joules", res.report.energy_joules}});
      }
    }
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "sweep.json", rows.dump(2) + "\n");
  }
  return 0;
}

int cmd_fit_report(const CommonOpts& o) {
  ScenarioConfig cfg = load_common(o);
  RunResult res = run_scenario(cfg);
  std::cout << "weighted_r_squared=" << res.report.weighted_r_squared
            << " fitted_operators=" << res.report.fitted_operators << '\n'
            << "hp_misprediction_rate=" << res.report.predictor_misprediction_rate_hp
            << " hp_p99_abs_error_us="
            << duration_to_us(res.report.predictor_p99_abs_error_hp)
            << " hp_predictions=" << res.report.predictions_hp << '\n';
  if (!o.out.empty()) emit(o, res.report.to_json(), res.request_log);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPU multi-tenancy scheduling simulator"};
  app.require_subcommand(1);

  CommonOpts run_o, cmp_o, sweep_o, fit_o;
  std::vector<std::string> cmp_policies, cmp_configs;
  std::vector<double> sweep_slip, sweep_atom, sweep_quota;

  CLI::App* run = app.add_subcommand("run", "Run one scenario");
  add_common(run, run_o);

  CLI::App* cmp = app.add_subcommand("compare", "Compare policies on one workload");
  add_common(cmp, cmp_o);
  cmp->add_option("--policies", cmp_policies, "Policies to compare")
      ->delimiter(',');
  cmp->add_option("configs", cmp_configs, "Explicit scenario config files");

  CLI::App* sw = app.add_subcommand("sweep", "Parameter grid sweep");
  add_common(sw, sweep_o);
  sw->add_option("--slip-k", sweep_slip, "slip_k values")->delimiter(',');
  sw->add_option("--atom-us", sweep_atom, "atom duration values (us)")
      ->delimiter(',');
  sw->add_option("--quota-scale", sweep_quota, "quota scale factors")
      ->delimiter(',');

  CLI::App* fit = app.add_subcommand("fit-report",
                                     "Right-sizing fit and predictor accuracy");
  add_common(fit, fit_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_o);
    if (cmp->parsed()) return cmd_compare(cmp_o, cmp_policies, cmp_configs);
    if (sw->parsed()) return cmd_sweep(sweep_o, sweep_slip, sweep_atom, sweep_quota);
    if (fit->parsed()) return cmd_fit_report(fit_o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
