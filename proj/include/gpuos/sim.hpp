#pragma once

#include <string>
#include <vector>

#include "gpuos/device.hpp"
#include "gpuos/metrics.hpp"
#include "gpuos/scheduler.hpp"
#include "gpuos/types.hpp"
#include "gpuos/workload.hpp"

namespace gpuos {

struct ScenarioConfig {
  std::string name = "scenario";
  DeviceTopology topo = DeviceTopology::a100_like();
  FrequencyDomain freq;
  PowerModel power;
  SchedulerConfig sched;
  std::vector<AppWorkload> apps;
  Duration horizon = kSecond;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RunResult {
  RunReport report;
  std::string request_log;  // line-delimited per-request records
};

std::vector<FreqMhz> default_freq_table();

ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario_file(const std::string& path);

// Built-in scenarios: "fig7" (one high-priority tenant with bursty arrivals
// next to a backlogged best-effort tenant), "inf-inf" (two latency-bound
// inference tenants plus a best-effort tenant), "inf-train" (inference with
// mixed-scalability operators next to a training-style tenant).
ScenarioConfig preset_scenario(const std::string& name);

// Materializes arrival processes (seeded) into concrete workloads.
std::vector<AppWorkload> resolve_workloads(const ScenarioConfig& cfg);

RunResult run_scenario(const ScenarioConfig& cfg);

}  // namespace gpuos
