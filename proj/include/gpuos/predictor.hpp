#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gpuos/types.hpp"

namespace gpuos {

// A kernel is identified by its launch queue and its ordinal within the
// current batch (ordinals reset at each sync). Template-stable workloads
// produce identical key sequences, which is what makes the per-key latency
// constant and learnable.
struct OperatorKey {
  int queue_id = 0;
  int ordinal = 0;
  auto operator<=>(const OperatorKey&) const = default;
};

struct PredictorConfig {
  double ewma_beta = 0.25;
  Duration default_unknown = 10 * kMillisecond;  // 10 x atom_duration default
};

enum class Confidence { Exact, Scaled, Unknown };

struct Prediction {
  Duration latency = 0;
  Confidence confidence = Confidence::Unknown;
};

struct ObsConfig {
  int tpc_count = 1;
  FreqMhz freq = 0;
  long blocks = 1;
  auto operator<=>(const ObsConfig&) const = default;
};

struct PredictionLogEntry {
  OperatorKey key;
  ObsConfig config;
  Duration predicted = 0;
  Duration actual = 0;
  bool high_priority = false;
  Confidence confidence = Confidence::Unknown;
};

struct MispredictionReport {
  double rate = 0.0;
  Duration p99_abs_error = 0;
  std::size_t count = 0;
};

// Online per-operator latency store: EWMA per (key, tpc_count, freq, blocks)
// with a conservative linear-scaling fallback for unseen configurations.
// Stores are per queue; one queue's observations never leak into another's.
class LatencyPredictor {
 public:
  explicit LatencyPredictor(PredictorConfig cfg = {}) : cfg_(cfg) {}

  Prediction predict(const OperatorKey& key, int tpc_count, FreqMhz f,
                     long blocks) const;
  void record(const OperatorKey& key, const ObsConfig& config,
              Duration observed);

  // Resets the batch ordinal counter for a queue (sync observed).
  void batch_boundary(int queue_id);
  int next_ordinal(int queue_id);  // assigns and advances

  bool has_any(const OperatorKey& key) const;

  // Canonical serialization of one queue's store, for isolation checks and
  // the fit report.
  std::string dump_store(int queue_id) const;

 private:
  struct Cell {
    double ewma_ns = 0.0;
    long count = 0;
  };
  PredictorConfig cfg_;
  std::map<OperatorKey, std::map<ObsConfig, Cell>> store_;
  std::map<int, int> ordinals_;
};

MispredictionReport misprediction_rate(
    const std::vector<PredictionLogEntry>& log,
    Duration threshold = 50 * kMicrosecond);

}  // namespace gpuos
