#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>

#include "gpuos/metrics.hpp"

using namespace gpuos;

TEST_CASE("nearest-rank percentile") {
  CHECK(percentile({1, 2, 3, 4}, 50) == 2);
  CHECK(percentile({4, 3, 2, 1}, 50) == 2);  // order-independent

  std::vector<Duration> equal(100, 7);
  for (double p : {1.0, 25.0, 50.0, 99.0}) CHECK(percentile(equal, p) == 7);

  std::vector<Duration> ladder(1000);
  std::iota(ladder.begin(), ladder.end(), 1);
  CHECK(percentile(ladder, 99) == 990);
  CHECK(percentile(ladder, 50) == 500);

  CHECK(percentile({42}, 99) == 42);
  CHECK_THROWS_AS(percentile({}, 50), ConfigError);
  CHECK_THROWS_AS(percentile({1}, 0.0), ConfigError);
  CHECK_THROWS_AS(percentile({1}, 100.0), ConfigError);
}

TEST_CASE("capacity and energy savings ratios") {
  CHECK(capacity_savings(100.0, 100.0) == doctest::Approx(0.0));
  CHECK(capacity_savings(50.0, 100.0) == doctest::Approx(0.5));
  CHECK(capacity_savings(120.0, 100.0) == doctest::Approx(-0.2));
  CHECK_THROWS_AS(capacity_savings(1.0, 0.0), ConfigError);

  CHECK(energy_savings(80.0, 100.0) == doctest::Approx(0.2));
  CHECK(energy_savings(100.0, 100.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(energy_savings(1.0, 0.0), ConfigError);
}

TEST_CASE("report serialization is canonical and stable") {
  RunReport rep;
  rep.policy = "full_system";
  rep.seed = 42;
  rep.horizon = kSecond;
  rep.tpc_utilization = 1.0 / 3.0;
  rep.energy_joules = 55.5;
  rep.freq_residency[1410] = kSecond;
  AppReport app;
  app.app_id = "a";
  app.high_priority = true;
  app.offered = 10;
  app.completed = 9;
  app.p99 = 12 * kMillisecond;
  app.slo_attainment = 8.0 / 9.0;
  rep.apps.push_back(app);

  std::string first = rep.to_json();
  CHECK(first == rep.to_json());
  CHECK(first.find("\"policy\": \"full_system\"") != std::string::npos);
  CHECK(first.find("\"p99_ns\": 12000000") != std::string::npos);
  CHECK(first.find("0.333333333") != std::string::npos);
}
