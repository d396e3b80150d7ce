#include "gpuos/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpuos/metrics.hpp"

namespace gpuos {

Prediction LatencyPredictor::predict(const OperatorKey& key, int tpc_count,
                                     FreqMhz f, long blocks) const {
  if (tpc_count < 1) throw ConfigError("tpc_count must be >= 1");
  auto it = store_.find(key);
  if (it == store_.end() || it->second.empty())
    return {cfg_.default_unknown, Confidence::Unknown};

  const auto& configs = it->second;
  ObsConfig query{tpc_count, f, blocks};
  auto exact = configs.find(query);
  if (exact != configs.end())
    return {static_cast<Duration>(std::llround(exact->second.ewma_ns)),
            Confidence::Exact};

  // Nearest recorded config: matching frequency preferred over matching TPC
  // count over matching block count; map order breaks remaining ties.
  const ObsConfig* best = nullptr;
  const Cell* best_cell = nullptr;
  int best_score = 8;
  for (const auto& [cfg, cell] : configs) {
    int score = (cfg.freq == f ? 0 : 4) + (cfg.tpc_count == tpc_count ? 0 : 2) +
                (cfg.blocks == blocks ? 0 : 1);
    if (score < best_score) {
      best_score = score;
      best = &cfg;
      best_cell = &cell;
    }
  }
  // Linear in TPCs and blocks, first-order (s=1) in frequency.
  double est = best_cell->ewma_ns;
  est *= static_cast<double>(best->tpc_count) / tpc_count;
  est *= static_cast<double>(blocks) / static_cast<double>(best->blocks);
  est *= static_cast<double>(best->freq) / static_cast<double>(f);
  return {static_cast<Duration>(std::llround(est)), Confidence::Scaled};
}

void LatencyPredictor::record(const OperatorKey& key, const ObsConfig& config,
                              Duration observed) {
  if (observed <= 0) throw ConfigError("observed latency must be > 0");
  Cell& cell = store_[key][config];
  if (cell.count == 0)
    cell.ewma_ns = static_cast<double>(observed);
  else
    cell.ewma_ns = (1.0 - cfg_.ewma_beta) * cell.ewma_ns +
                   cfg_.ewma_beta * static_cast<double>(observed);
  ++cell.count;
}

void LatencyPredictor::batch_boundary(int queue_id) { ordinals_[queue_id] = 0; }

int LatencyPredictor::next_ordinal(int queue_id) {
  return ordinals_[queue_id]++;
}

bool LatencyPredictor::has_any(const OperatorKey& key) const {
  auto it = store_.find(key);
  return it != store_.end() && !it->second.empty();
}

std::string LatencyPredictor::dump_store(int queue_id) const {
  std::ostringstream out;
  for (const auto& [key, configs] : store_) {
    if (key.queue_id != queue_id) continue;
    for (const auto& [cfg, cell] : configs) {
      out << key.queue_id << ' ' << key.ordinal << ' ' << cfg.tpc_count << ' '
          << cfg.freq << ' ' << cfg.blocks << ' ' << std::llround(cell.ewma_ns)
          << ' ' << cell.count << '\n';
    }
  }
  return out.str();
}

MispredictionReport misprediction_rate(
    const std::vector<PredictionLogEntry>& log, Duration threshold) {
  if (log.empty()) throw ConfigError("misprediction rate of an empty log");
  std::vector<Duration> errors;
  errors.reserve(log.size());
  std::size_t misses = 0;
  for (const auto& e : log) {
    Duration err = std::llabs(e.predicted - e.actual);
    errors.push_back(err);
    if (err > threshold) ++misses;
  }
  MispredictionReport rep;
  rep.count = log.size();
  rep.rate = static_cast<double>(misses) / static_cast<double>(log.size());
  rep.p99_abs_error = percentile(errors, 99.0);
  return rep;
}

}  // namespace gpuos
