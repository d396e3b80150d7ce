#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gpuos/power_manager.hpp"

using namespace gpuos;

namespace {
const std::vector<FreqMhz> kTable = {540, 675, 810, 945, 1080, 1215, 1350,
                                     1410};
}

TEST_CASE("sensitivity from a throttled observation") {
  // Fully compute-bound: latency doubles when frequency halves.
  CHECK(sensitivity(2 * kMillisecond, kMillisecond, 705, 1410) ==
        doctest::Approx(1.0));
  // Memory-bound: no slowdown.
  CHECK(sensitivity(kMillisecond, kMillisecond, 705, 1410) ==
        doctest::Approx(0.0));
  // Halfway: 1.5x slowdown at half frequency.
  CHECK(sensitivity(1500 * kMicrosecond, kMillisecond, 705, 1410) ==
        doctest::Approx(0.5));
  // Clamped into [0,1].
  CHECK(sensitivity(900 * kMicrosecond, kMillisecond, 705, 1410) == 0.0);
  CHECK(sensitivity(5 * kMillisecond, kMillisecond, 705, 1410) == 1.0);
  CHECK_THROWS_AS(sensitivity(1, 1, 1410, 1410), ConfigError);
}

TEST_CASE("aggregate is the weight-dot-sensitivity sum") {
  CHECK(aggregate_sensitivity({{0.5, 1.0}, {0.5, 0.0}}) ==
        doctest::Approx(0.5));
  CHECK(aggregate_sensitivity({{1.0, 0.3}}) == doctest::Approx(0.3));
  CHECK_THROWS_AS(aggregate_sensitivity({}), ConfigError);
}

TEST_CASE("frequency selection matches the closed form with snap-up") {
  // f_max / (1 + slip/S): S=1, slip=0.1 -> 1281.8; snaps up to 1350.
  CHECK(select_frequency(1.0, 0.1, 1410, kTable) == 1350);
  // S=0.5 -> 1175; snaps up to 1215.
  CHECK(select_frequency(0.5, 0.1, 1410, kTable) == 1215);
  // S=0.1 -> 705; snaps up to 810.
  CHECK(select_frequency(0.1, 0.1, 1410, kTable) == 810);
  // Insensitive batches drop to the floor frequency.
  CHECK(select_frequency(0.0, 0.1, 1410, kTable) == 540);
  CHECK(select_frequency(1e-9, 0.1, 1410, kTable) == 540);
  CHECK_THROWS_AS(select_frequency(1.0, 0.0, 1410, kTable), ConfigError);
}

TEST_CASE("snap-up keeps the planned slowdown within slip_k") {
  for (double S : {0.05, 0.2, 0.5, 0.8, 1.0}) {
    for (double slip : {0.05, 0.1, 0.3}) {
      FreqMhz f = select_frequency(S, slip, 1410, kTable);
      double slowdown = S * (1410.0 / f - 1.0);
      CHECK(slowdown <= slip + 1e-12);
    }
  }
}

TEST_CASE("phase machine: unseen, probing, confirmed") {
  PowerManager pm(DvfsConfig{}, kTable);
  OperatorKey key{1, 0};
  CHECK(pm.phase(key) == DvfsPhase::Unseen);

  // First batch runs at f_max and records the baseline.
  pm.observe(key, 10 * kMillisecond, 1410);
  CHECK(pm.phase(key) == DvfsPhase::Probing);
  CHECK(pm.estimate(key) == doctest::Approx(1.0));
  CHECK(pm.plan_batch(1) == 1350);  // probing assumes s=1

  // Two consistent throttled observations confirm the estimate.
  pm.observe(key, 12 * kMillisecond, 1080);  // s = 0.2/0.3056 = 0.6545
  CHECK(pm.phase(key) == DvfsPhase::Probing);
  pm.plan_batch(1);
  pm.observe(key, 12 * kMillisecond, 1080);
  CHECK(pm.phase(key) == DvfsPhase::Confirmed);
  CHECK(pm.estimate(key) == doctest::Approx(0.6545454545));

  // Confirmed estimate drives steady-state selection.
  pm.observe(key, 12 * kMillisecond, 1080);
  FreqMhz f = pm.plan_batch(1);
  CHECK(f == select_frequency(0.6545454545454546, 0.1, 1410, kTable));
}

TEST_CASE("two zero estimates confirm a memory-bound operator") {
  PowerManager pm(DvfsConfig{}, kTable);
  OperatorKey key{2, 0};
  pm.observe(key, 10 * kMillisecond, 1410);
  pm.observe(key, 10 * kMillisecond, 1080);  // s = 0
  CHECK(pm.phase(key) == DvfsPhase::Probing);
  pm.observe(key, 10 * kMillisecond, 1080);
  CHECK(pm.phase(key) == DvfsPhase::Confirmed);
  CHECK(pm.estimate(key) == 0.0);
  pm.plan_batch(2);
  pm.observe(key, 10 * kMillisecond, 540);
  CHECK(pm.plan_batch(2) == 540);
}

TEST_CASE("plan weights operators by runtime fraction") {
  PowerManager pm(DvfsConfig{}, kTable);
  OperatorKey a{1, 0}, b{1, 1};
  // Confirm a at s=1 and b at s=0 via consistent probes.
  pm.observe(a, 10 * kMillisecond, 1410);
  pm.observe(b, 10 * kMillisecond, 1410);
  pm.plan_batch(1);
  for (int i = 0; i < 2; ++i) {
    pm.observe(a, 20 * kMillisecond, 705);  // s=1
    pm.observe(b, 10 * kMillisecond, 705);  // s=0
    pm.plan_batch(1);
  }
  CHECK(pm.phase(a) == DvfsPhase::Confirmed);
  CHECK(pm.phase(b) == DvfsPhase::Confirmed);
  // Batch of 30ms at f_max-equivalent: w_a = 2/3 -> S = 2/3.
  pm.observe(a, 20 * kMillisecond, 540);
  pm.observe(b, 10 * kMillisecond, 540);
  CHECK(pm.plan_batch(1) ==
        select_frequency(2.0 / 3.0, 0.1, 1410, kTable));
}

TEST_CASE("device arbitration takes the maximum app target") {
  CHECK(PowerManager::arbitrate({540, 1080, 810}) == 1080);
  CHECK(PowerManager::arbitrate({540}) == 540);
  CHECK_THROWS_AS(PowerManager::arbitrate({}), ConfigError);
}
