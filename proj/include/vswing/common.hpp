#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vswing {

/// Raised for inconsistent model data (dangling references, bad parameters).
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for malformed or semantically invalid scenario input.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when an iterative solve fails to converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a time series is too short for the requested analysis.
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& msg)
      : std::runtime_error(msg) {}
};

constexpr double kPi = 3.14159265358979323846;

/// Round to nearest integer, ties away from zero resolved upward
/// (round-half-up): 0.5 -> 1, -0.5 -> 0.
inline long long round_half_up(double x) {
  return static_cast<long long>(std::floor(x + 0.5));
}

/// Splitmix64; used to derive independent sub-seeds from one run seed.
inline std::uint64_t split_seed(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace vswing
