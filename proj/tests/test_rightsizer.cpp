#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gpuos/rightsizer.hpp"

using namespace gpuos;

TEST_CASE("two-point fit recovers m and b exactly") {
  // l(t) = 36ms/t + 2ms, sampled at t=1 and t=36.
  Duration l1 = 38 * kMillisecond;
  Duration lT = 3 * kMillisecond;
  ScalingFit fit = fit_scaling(l1, lT, 36);
  CHECK(fit.valid);
  CHECK(fit.m_ns == doctest::Approx(36.0e6).epsilon(1e-9));
  CHECK(fit.b_ns == doctest::Approx(2.0e6).epsilon(1e-9));
}

TEST_CASE("fit recovery over random exact curves") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    // Pick m as a multiple of T so both sample latencies are exact integers;
    // recovery is then limited only by double arithmetic.
    int T = 2 + static_cast<int>(rng() % 100);
    double m = static_cast<double>(T) * (1 + static_cast<long>(rng() % 10000000));
    double b = static_cast<double>(rng() % 100000000);
    Duration l1 = static_cast<Duration>(m + b);
    Duration lT = static_cast<Duration>(m / T + b);
    ScalingFit fit = fit_scaling(l1, lT, T);
    REQUIRE(fit.valid);
    CHECK(std::fabs(fit.m_ns - m) / m < 1e-9);
    if (b >= 1e5) CHECK(std::fabs(fit.b_ns - b) / b < 1e-9);
  }
}

TEST_CASE("occupancy filter caps width at one wave") {
  CHECK(filter_cap(100, 1, 54) == 54);
  CHECK(filter_cap(100, 4, 54) == 25);
  CHECK(filter_cap(3, 2, 54) == 2);
  CHECK(filter_cap(1, 8, 54) == 1);
  CHECK_THROWS_AS(filter_cap(0, 1, 54), ConfigError);
}

TEST_CASE("chosen width satisfies the slip bound") {
  ScalingFit fit{36.0e6, 2.0e6, true};
  int t_alloc = 36;
  double slip = 1.1;
  int t = choose_tpcs(fit, t_alloc, slip, 54);
  double baseline = fit.m_ns / t_alloc + fit.b_ns;
  CHECK(fit.m_ns / t + fit.b_ns <= slip * baseline + 1e-12);
  // One fewer TPC would violate the bound (t* is minimal).
  if (t > 1) CHECK(fit.m_ns / (t - 1) + fit.b_ns > slip * baseline);
}

TEST_CASE("flat curves collapse to one TPC, invalid fits to full width") {
  ScalingFit flat{0.0, 5.0e6, true};
  CHECK(choose_tpcs(flat, 36, 1.1, 54) == 1);
  ScalingFit invalid{};
  CHECK(choose_tpcs(invalid, 36, 1.1, 54) == 36);
  CHECK(choose_tpcs(invalid, 36, 1.1, 12) == 12);
}

TEST_CASE("slip bound holds over random fits") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    ScalingFit fit{1.0 + static_cast<double>(rng() % 1000000000),
                   static_cast<double>(rng() % 50000000), true};
    int t_alloc = 1 + static_cast<int>(rng() % 72);
    int cap = 1 + static_cast<int>(rng() % 72);
    int t = choose_tpcs(fit, t_alloc, 1.1, cap);
    int t_full = std::min(t_alloc, cap);
    CHECK(t >= 1);
    CHECK(t <= t_full);
    double baseline = fit.m_ns / t_full + fit.b_ns;
    CHECK(fit.m_ns / t + fit.b_ns <= 1.1 * baseline + 1e-12);
  }
}

TEST_CASE("probe state machine: full, then probe, then fit") {
  Rightsizer rs;
  OperatorKey key{1, 0};
  CHECK(rs.decide(key, 0, true) == ProbeDecision::UseFull);
  rs.observe(key, 36, 3 * kMillisecond);
  // Probe only at a quiet moment with SLO slack.
  CHECK(rs.decide(key, 5, true) == ProbeDecision::UseFull);
  CHECK(rs.decide(key, 0, false) == ProbeDecision::UseFull);
  CHECK(rs.decide(key, 0, true) == ProbeDecision::ProbeOneTpc);
  rs.observe(key, 1, 38 * kMillisecond);
  CHECK(rs.decide(key, 0, true) == ProbeDecision::UseFit);
  const ScalingFit* fit = rs.fit_for(key);
  REQUIRE(fit != nullptr);
  CHECK(rs.choose(key, 36, 720, 2) == choose_tpcs_wave(*fit, 36, 1.1, 720, 2));
}

TEST_CASE("wave-aware width never shrinks past a breakpoint") {
  // Flat-but-cap-limited kernel: 48 blocks at occupancy 4 run in one wave on
  // 12 TPCs; the naive minimal t (11) would double the latency. l = 12/t ms.
  ScalingFit fit = fit_scaling(12 * kMillisecond, kMillisecond, 12);
  CHECK(choose_tpcs(fit, 36, 1.1, 12) == 11);        // model-only answer
  CHECK(choose_tpcs_wave(fit, 36, 1.1, 48, 4) == 12);  // wave-feasible answer

  // Scalable kernel: 2880 blocks at occupancy 4, l = 36/t ms. The budget
  // admits 22 waves, whose breakpoint width is 33.
  ScalingFit fit2 = fit_scaling(36 * kMillisecond, kMillisecond, 36);
  CHECK(choose_tpcs_wave(fit2, 36, 1.1, 2880, 4) == 33);
  // Every returned width still satisfies the model slip bound.
  double budget = 1.1 * (fit2.m_ns / 36 + fit2.b_ns);
  int t = choose_tpcs_wave(fit2, 36, 1.1, 2880, 4);
  CHECK(fit2.m_ns / t + fit2.b_ns <= budget + 1e-12);
}

TEST_CASE("weighted r-squared is execution-time weighted") {
  Rightsizer rs;
  OperatorKey good{1, 0}, off{1, 1};
  // Operator fitting perfectly, heavy execution time.
  rs.observe(good, 10, 11 * kMillisecond);  // l = 100/t + 1 (ms)
  rs.observe(good, 1, 101 * kMillisecond);
  rs.observe(good, 2, 51 * kMillisecond);
  // Operator whose third point deviates.
  rs.observe(off, 10, 2 * kMillisecond);
  rs.observe(off, 1, 11 * kMillisecond);
  rs.observe(off, 2, 9 * kMillisecond);
  long n = 0;
  double r2 = rs.weighted_r_squared(&n);
  CHECK(n == 2);
  CHECK(r2 > 0.9);
  CHECK(r2 < 1.0);
}
