#include "gpuos/workload.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gpuos {

double Dist::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Const:
      return a;
    case Uniform: {
      // 53-bit uniform in [0,1); avoids std::uniform_real_distribution so
      // sequences are identical across standard libraries.
      double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      return a + (b - a) * u;
    }
    case Choice: {
      if (choices.empty()) throw ConfigError("choice dist with no choices");
      return choices[rng() % choices.size()];
    }
  }
  throw ConfigError("bad distribution kind");
}

void Dist::validate(const char* what, bool require_positive) const {
  auto check = [&](double v) {
    if (require_positive && v <= 0.0)
      throw ConfigError(std::string(what) + ": values must be positive");
  };
  if (kind == Const) check(a);
  if (kind == Uniform) {
    check(a);
    check(b);
    if (b < a) throw ConfigError(std::string(what) + ": uniform hi < lo");
  }
  if (kind == Choice)
    for (double v : choices) check(v);
}

RequestTemplate synth_model(const SynthModelParams& params) {
  if (params.layers < 1) throw ConfigError("layers must be >= 1");
  params.blocks_per_layer.validate("blocks_per_layer", true);
  params.block_us.validate("block_us", true);
  params.occupancy.validate("occupancy", true);
  std::mt19937_64 rng(params.seed);
  RequestTemplate tmpl;
  tmpl.kernels.reserve(params.layers);
  for (int i = 0; i < params.layers; ++i) {
    KernelRecord k;
    k.grid_x = std::max(1L, std::lround(params.blocks_per_layer.sample(rng)));
    k.block_duration_at_fmax = duration_from_us(params.block_us.sample(rng));
    if (k.block_duration_at_fmax <= 0)
      throw ConfigError("block duration must be positive");
    double s = params.sensitivity.sample(rng);
    if (s < 0.0 || s > 1.0) throw ConfigError("sensitivity out of [0,1]");
    k.sensitivity_s = s;
    k.occupancy_per_tpc =
        std::max(1, static_cast<int>(std::lround(params.occupancy.sample(rng))));
    tmpl.kernels.push_back(k);
  }
  return tmpl;
}

std::vector<SimTime> poisson_arrivals(double rate_rps, Duration horizon,
                                      std::uint64_t seed) {
  if (rate_rps <= 0.0) throw ConfigError("poisson rate must be > 0");
  std::vector<SimTime> times;
  if (horizon <= 0) return times;
  std::mt19937_64 rng(seed);
  double t_s = 0.0;
  double horizon_s = static_cast<double>(horizon) / 1e9;
  for (;;) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    t_s += -std::log1p(-u) / rate_rps;
    if (t_s >= horizon_s) break;
    times.push_back(static_cast<SimTime>(std::llround(t_s * 1e9)));
  }
  return times;
}

namespace {

constexpr const char* kSchemaTag = "gpuos-trace-v1";

nlohmann::json parse_line(const std::string& line, int lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("trace parse error at line " + std::to_string(lineno) +
                      ": " + e.what());
  }
}

}  // namespace

std::vector<TraceApp> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file: " + path);
  std::string line;
  int lineno = 0;

  if (!std::getline(in, line)) return {};  // empty file -> empty workload
  ++lineno;
  auto header = parse_line(line, lineno);
  if (header.value("schema", "") != kSchemaTag)
    throw ConfigError("trace missing schema tag " + std::string(kSchemaTag));

  struct Pending {
    std::vector<KernelRecord> kernels;
    long next_seq = 0;
  };
  std::map<std::string, Pending> pending;  // keyed by app/stream
  std::vector<TraceApp> apps;
  auto app_index = [&](const std::string& id) -> TraceApp& {
    for (auto& a : apps)
      if (a.app_id == id) return a;
    apps.push_back({id, {}});
    return apps.back();
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = parse_line(line, lineno);
    std::string app = j.value("app", "");
    if (app.empty())
      throw ConfigError("trace line " + std::to_string(lineno) +
                        ": missing app");
    long seq = j.value("seq", -1L);
    std::string key = app + "/" + std::to_string(j.value("stream", 0));
    Pending& p = pending[key];
    if (seq != p.next_seq)
      throw ConfigError("trace line " + std::to_string(lineno) +
                        ": out-of-order seq " + std::to_string(seq) +
                        " (expected " + std::to_string(p.next_seq) + ")");
    ++p.next_seq;
    std::string kind = j.value("kind", "");
    if (kind == "kernel") {
      KernelRecord k;
      auto grid = j.at("grid");
      k.grid_x = grid.at(0).get<long>();
      k.grid_y = grid.at(1).get<long>();
      k.grid_z = grid.at(2).get<long>();
      if (k.total_blocks() < 1)
        throw ConfigError("trace line " + std::to_string(lineno) +
                          ": grid product must be >= 1");
      k.block_duration_at_fmax = duration_from_us(j.at("block_us").get<double>());
      k.sensitivity_s = j.value("s", 1.0);
      k.occupancy_per_tpc = j.value("occ", 1);
      p.kernels.push_back(k);
    } else if (kind == "sync") {
      SimTime arrival = duration_from_us(j.at("arrival_us").get<double>());
      RequestTemplate req;
      req.kernels = std::move(p.kernels);
      p.kernels.clear();
      app_index(app).requests.push_back({arrival, std::move(req)});
    } else {
      throw ConfigError("trace line " + std::to_string(lineno) +
                        ": unknown kind '" + kind + "'");
    }
  }
  for (const auto& [key, p] : pending)
    if (!p.kernels.empty())
      throw ConfigError("trace stream " + key + " ends without a sync");
  return apps;
}

void save_trace(const std::string& path, const std::vector<TraceApp>& apps) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace file: " + path);
  out << nlohmann::json{{"schema", kSchemaTag}}.dump() << '\n';
  for (const auto& app : apps) {
    long seq = 0;
    for (const auto& [arrival, req] : app.requests) {
      for (const auto& k : req.kernels) {
        nlohmann::json j{{"app", app.app_id},
                         {"stream", 0},
                         {"seq", seq++},
                         {"kind", "kernel"},
                         {"grid", {k.grid_x, k.grid_y, k.grid_z}},
                         {"block_us", duration_to_us(k.block_duration_at_fmax)},
                         {"s", k.sensitivity_s},
                         {"occ", k.occupancy_per_tpc}};
        out << j.dump() << '\n';
      }
      nlohmann::json j{{"app", app.app_id},
                       {"stream", 0},
                       {"seq", seq++},
                       {"kind", "sync"},
                       {"arrival_us", duration_to_us(arrival)}};
      out << j.dump() << '\n';
    }
  }
}

}  // namespace gpuos
