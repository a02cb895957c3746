#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "rtminv/gmm.hpp"
#include "rtminv/posterior.hpp"

namespace rtminv {

struct RisConfig {
  /// Posterior draws used to fit the auxiliary density q.
  int fit_samples = 2000;
  /// Fresh posterior draws entering the estimator.
  int estimator_samples = 2000;
  GmmSelectionConfig gmm;
  PosteriorSamplerConfig sampler;
};

void validate(const RisConfig& cfg);

struct RisEstimate {
  double log_evidence = 0.0;
  double acceptance_rate = 0.0;
  int gmm_components = 0;
  /// Share of the largest single ratio in the estimator sum.
  double max_ratio_fraction = 0.0;
  /// Effective sample size of the ratios.
  double effective_samples = 0.0;
  bool high_variance = false;
  bool gmm_fallback = false;
};

/// -log mean_m [q(c_m) / (p(c_m) p(e | c_m))] over fixed posterior draws,
/// evaluated with a max shift. With q equal to the prior this is the
/// harmonic-mean estimator.
RisEstimate ris_from_samples(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                             const std::function<double(const Vector&)>& log_q,
                             std::span<const Vector> samples);

/// Reverse importance sampling estimate of log p(e) under `prior`.
RisEstimate ris_log_evidence(const LikelihoodModel& lm, const GaussianDensity& prior, const Vector& e,
                             const RisConfig& cfg, Rng& rng);

struct TestEvidence {
  /// Mean over the data that succeeded.
  double mean = 0.0;
  /// One entry per test datum; empty where the estimate failed.
  std::vector<std::optional<RisEstimate>> per_datum;
  int failures = 0;
};

/// RIS over a test set; datum i uses the stream (seed, i), so results do not
/// depend on `threads`.
TestEvidence test_evidence(const LikelihoodModel& lm, const GaussianDensity& prior,
                           std::span<const Vector> effects, const RisConfig& cfg, std::uint64_t seed,
                           int threads = 1);

/// Columns: datum, log_evidence, acceptance_rate, gmm_components.
void write_evidence_csv(std::ostream& out, const TestEvidence& ev);

}  // namespace rtminv
