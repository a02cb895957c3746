#pragma once

#include <span>
#include <vector>

#include "rtminv/likelihood.hpp"
#include "rtminv/sampler.hpp"

namespace rtminv {

/// Unnormalized posterior log p(e | c) + log p(c) for one observed effect.
class PosteriorTarget {
 public:
  PosteriorTarget(LikelihoodModel likelihood, GaussianDensity prior, Vector effect);

  const LikelihoodModel& likelihood() const { return likelihood_; }
  const GaussianDensity& prior() const { return prior_; }
  const Vector& effect() const { return effect_; }
  Eigen::Index dim() const { return prior_.dim(); }

  double log_density(const Vector& c, Vector& grad) const;
  double log_density(const Vector& c) const;
  LogDensity as_log_density() const;

  /// Gauss-Newton precision J^T J / sigma^2 + S^{-1} at c.
  Matrix gauss_newton_precision(const Vector& c) const;

 private:
  LikelihoodModel likelihood_;
  GaussianDensity prior_;
  Vector effect_;
};

/// L-BFGS on the posterior in prior-whitened coordinates u, c = m + L u,
/// which makes the search insensitive to the scale of each cause.
MapResult find_posterior_map(const PosteriorTarget& target, const Vector& start,
                             const LbfgsConfig& cfg = {});

struct ModeSearchConfig {
  /// Prior draws used as extra L-BFGS starts next to the prior mean.
  int random_starts = 16;
  LbfgsConfig lbfgs;
  /// Modes closer than this (in prior standard deviations) are merged.
  double merge_tolerance = 1e-3;
};

struct PosteriorMode {
  Vector point;
  double log_density = 0.0;
  /// F with F F^T equal to the Laplace covariance at the mode.
  Matrix scale_factor;
  /// Laplace estimate of the log posterior mass attached to the mode.
  double log_mass = 0.0;
  bool converged = false;
};

/// Multi-start MAP search: the prior mean first, then `random_starts` prior
/// draws. Returns distinct modes sorted by decreasing log_mass.
std::vector<PosteriorMode> find_posterior_modes(const PosteriorTarget& target,
                                                const ModeSearchConfig& cfg, Rng& rng);

/// Laplace approximation around a point (normally a mode).
PosteriorMode laplace_at(const PosteriorTarget& target, const Vector& point);

struct PosteriorSamplerConfig {
  ModeSearchConfig modes;
  /// Step size is in units of the Laplace standard deviation at the mode.
  HmcConfig hmc{20, 0.1, 100, 1};
};

struct PosteriorSamples {
  std::vector<Vector> samples;
  double acceptance_rate = 0.0;
  std::vector<PosteriorMode> modes;
  /// Samples drawn around each entry of `modes`.
  std::vector<int> per_mode_counts;
};

/// Mode-initialized HMC: each of the n draws is assigned to a mode with
/// probability proportional to its Laplace mass, then one chain per used
/// mode runs from that mode, whitened by its Laplace covariance.
PosteriorSamples sample_posterior_modes(const PosteriorTarget& target, int n,
                                        const PosteriorSamplerConfig& cfg, Rng& rng);

}  // namespace rtminv
