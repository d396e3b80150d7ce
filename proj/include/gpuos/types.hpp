#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gpuos {

// Simulation time and durations are integer nanoseconds. Integer time keeps
// event ordering exact and makes wave arithmetic match the closed-form
// oracle bit for bit.
using SimTime = std::int64_t;
using Duration = std::int64_t;
using FreqMhz = int;

constexpr Duration kNanosecond = 1;
constexpr Duration kMicrosecond = 1000;
constexpr Duration kMillisecond = 1000 * kMicrosecond;
constexpr Duration kSecond = 1000 * kMillisecond;

Duration duration_from_us(double us);
Duration duration_from_ms(double ms);
double duration_to_us(Duration d);
double duration_to_ms(Duration d);

// Thrown for bad configuration (unknown frequency, malformed scenario, ...).
// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when internal simulator state is inconsistent. Exit code 3.
class InvariantError : public std::runtime_error {
 public:
  explicit InvariantError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace gpuos
