#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "rtminv/types.hpp"

namespace rtminv {

/// Returns log p(x) (up to a constant) and writes its gradient into `grad`.
using LogDensity = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsConfig {
  int memory = 10;
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  /// Also stop after three accepted steps in a row that each improve log p
  /// by less than this fraction of max(1, |log p|).
  double function_tolerance = 1e-12;
  /// Armijo sufficient-increase constant.
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_shrinks = 50;
};

struct MapResult {
  Vector point;
  double log_density = 0.0;
  Vector gradient;
  int iterations = 0;
  bool converged = false;
  /// Set when the backtracking search gave up; `point` is the best so far.
  bool line_search_failed = false;
};

/// Maximizes `target` with limited-memory BFGS and backtracking line search.
MapResult find_map(const LogDensity& target, const Vector& start, const LbfgsConfig& cfg = {});

struct HmcConfig {
  int leapfrog_steps = 20;
  double step_size = 5e-4;
  int burn_in = 100;
  int thinning = 1;
};

void validate(const HmcConfig& cfg);

struct PhasePoint {
  Vector position;
  Vector momentum;
};

/// Half kick, `steps` drifts with full kicks in between, half kick; unit mass.
/// Throws NumericalFailure if any intermediate state is non-finite.
PhasePoint leapfrog(Vector position, Vector momentum, const LogDensity& target, int steps,
                    double step_size);

struct HmcResult {
  std::vector<Vector> samples;
  double acceptance_rate = 0.0;
  int proposals = 0;
  int nonfinite_proposals = 0;
};

/// Metropolis-corrected HMC chain started at `init`; returns `n_samples`
/// draws after burn-in and thinning.
///
/// If `position_factor` F is given, the chain runs on z with x = init + F z
/// and unit mass in z, i.e. mass matrix (F F^T)^{-1} in x. Proposals with a
/// non-finite Hamiltonian are rejected; a run of consecutive non-finite
/// proposals longer than half the chain raises NumericalFailure.
HmcResult hmc_sample(const LogDensity& target, const Vector& init, int n_samples,
                     const HmcConfig& cfg, Rng& rng, const Matrix* position_factor = nullptr);

/// One row per sample, header x_1..x_D.
void write_chain_csv(std::ostream& out, std::span<const Vector> samples);

}  // namespace rtminv
