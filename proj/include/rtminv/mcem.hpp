#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rtminv/fit_result.hpp"
#include "rtminv/posterior.hpp"

namespace rtminv {

struct McemConfig {
  int epochs = 10;
  /// Posterior draws per datum and epoch.
  int samples_per_datum = 1;
  PosteriorSamplerConfig sampler;
  bool parallel_e_step = false;
  /// Worker count when parallel_e_step is set (0 = all cores).
  int threads = 0;
  std::uint64_t seed = 0;
  /// Cause standardization for the reference prior; empty means the model's.
  Vector cause_scale;
  /// Variance of the broad reference prior used for the first MAP pass, in
  /// standardized units.
  double reference_variance = 100.0;
};

void validate(const McemConfig& cfg);

struct McemState {
  GaussianDensity prior;
  int epoch = 0;
  /// Draws from the latest E-step; empty for skipped data.
  std::vector<std::vector<Vector>> last_samples;
};

/// Posterior draws for one datum under the current prior: MAP search
/// (prior mean first), then mode-started HMC.
std::vector<Vector> e_step(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                           const McemConfig& cfg, Rng& rng);

/// Gaussian MLE over the pooled draws.
GaussianDensity m_step(std::span<const Vector> samples);

/// Mean log p(c | theta) over the pooled draws, the quantity the M-step maximizes.
double m_step_objective(std::span<const Vector> samples, const GaussianDensity& prior);

/// Starting prior: per-datum MAP estimates under the reference prior, moment-matched.
GaussianDensity initial_prior(const LikelihoodModel& lm, std::span<const Vector> effects,
                              const McemConfig& cfg);

struct EpochStats {
  int failed = 0;
  double objective = 0.0;
};

/// One E-step over every datum followed by the M-step. Datum i draws from
/// the stream (seed, i, epoch), so results do not depend on threading.
EpochStats mcem_epoch(const LikelihoodModel& lm, std::span<const Vector> effects,
                      const McemConfig& cfg, McemState& state);

FitResult fit_mcem(const LikelihoodModel& lm, std::span<const Vector> effects,
                   const McemConfig& cfg, const EpochObserver& observer = {});

/// Mode-initialized HMC draws from p(e | c) p(c) for a fitted prior.
PosteriorSamples sample_posterior(const LikelihoodModel& lm, const GaussianDensity& prior,
                                  const Vector& e, int n, const PosteriorSamplerConfig& cfg, Rng& rng);

}  // namespace rtminv
