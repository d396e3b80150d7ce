#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "gpuos/types.hpp"

namespace gpuos {

enum class PriorityClass { HP, BE };

struct PoissonArrival {
  double rate_rps = 1.0;
  std::uint64_t seed = 0;
};
struct ClosedLoopArrival {};

struct SloSpec {
  // Either a latency bound or a throughput fraction target (vs. running
  // alone on the device).
  std::optional<Duration> latency;
  std::optional<double> throughput_fraction;
};

struct AppSpec {
  std::string app_id;
  PriorityClass priority = PriorityClass::BE;
  int tpc_quota = 0;
  int tpc_cap = 0;  // static per-app width limit; 0 means unlimited
  std::optional<SloSpec> slo;
  std::variant<PoissonArrival, ClosedLoopArrival> arrival = ClosedLoopArrival{};
};

struct KernelRecord {
  long grid_x = 1, grid_y = 1, grid_z = 1;
  Duration block_duration_at_fmax = kMillisecond;
  double sensitivity_s = 1.0;
  int occupancy_per_tpc = 1;
  long total_blocks() const { return grid_x * grid_y * grid_z; }
};

// A request is a kernel sequence ending in a sync; latency is measured from
// arrival to sync completion.
struct RequestTemplate {
  std::vector<KernelRecord> kernels;
};

struct AppWorkload {
  AppSpec spec;
  RequestTemplate request;                 // template for every request
  std::vector<RequestTemplate> per_request;  // optional per-request override
  std::vector<SimTime> arrivals;           // open loop; empty for closed loop
  bool closed_loop = false;
};

// Distributions for the synthetic generator. "choice" picks uniformly from an
// explicit list.
struct Dist {
  enum Kind { Const, Uniform, Choice } kind = Const;
  double a = 0.0, b = 0.0;
  std::vector<double> choices;

  static Dist constant(double v) { return Dist{Const, v, 0.0, {}}; }

  double sample(std::mt19937_64& rng) const;
  void validate(const char* what, bool require_positive) const;
};

struct SynthModelParams {
  int layers = 1;
  Dist blocks_per_layer = Dist::constant(1.0);
  Dist block_us = Dist::constant(1000.0);
  Dist sensitivity = Dist::constant(1.0);
  Dist occupancy = Dist::constant(1.0);
  std::uint64_t seed = 0;
};

// Deterministic for a seed: the same params always yield the same template,
// which is what gives operators their stable ordinal structure.
RequestTemplate synth_model(const SynthModelParams& params);

// Sorted arrival times on [0, horizon); inter-arrival gaps are exponential
// from a hand-rolled sampler so runs are reproducible across platforms.
std::vector<SimTime> poisson_arrivals(double rate_rps, Duration horizon,
                                      std::uint64_t seed);

// Trace I/O: line-delimited JSON, one record per line, after a header line
// carrying the schema tag.
struct TraceApp {
  std::string app_id;
  std::vector<std::pair<SimTime, RequestTemplate>> requests;
};
std::vector<TraceApp> load_trace(const std::string& path);
void save_trace(const std::string& path, const std::vector<TraceApp>& apps);

}  // namespace gpuos
