#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rtminv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Source of randomness used throughout the library. Every stochastic
/// operation takes one explicitly so callers control determinism.
using Rng = std::mt19937_64;

/// Bad arguments, dimension mismatches, invalid configs. Maps to CLI exit 1.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-PD matrices, non-finite values, diverging fits. Maps to CLI exit 2.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was invoked on an object that is not ready for it.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The requested operation is not available for this kind of fit.
class UnsupportedOperation : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Mixes (seed, a, b) into a new 64-bit seed (splitmix64 finalizer).
/// Used to give each datum/epoch/repetition an independent, reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(seed, a, b));
}

Vector standard_normal(Rng& rng, Eigen::Index n);
double uniform01(Rng& rng);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

std::vector<double> to_std(const Vector& v);
Vector from_std(const std::vector<double>& v);

void require(bool condition, const std::string& message);

}  // namespace rtminv
