#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cyclic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Every stochastic operation takes one of these explicitly.
using Rng = std::mt19937_64;

/// Builds a stream from an ordered key tuple, e.g. {seed, iteration, stage, action}.
Rng make_rng(std::initializer_list<std::uint64_t> keys);

/// Thrown for contract violations: bad dimensions, bad indices, malformed inputs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace cyclic
