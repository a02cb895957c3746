#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtminv/fit_result.hpp"
#include "rtminv/likelihood.hpp"
#include "rtminv/variational.hpp"

namespace rtminv {

struct ViFitConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  int mc_samples_per_datum = 1;
  std::vector<int> hidden_layers{64, 64};
  /// Cause standardization; empty means the model's natural scale.
  Vector cause_scale;
  std::uint64_t seed = 0;
};

void validate(const ViFitConfig& cfg);

/// Amortized variational fit: shuffled single-datum ADAM ascent on the ELBO,
/// jointly over the encoder and the prior. The prior starts at N(0, I) in
/// standardized cause units.
FitResult fit_vi(const LikelihoodModel& lm, std::span<const Vector> effects,
                 const ViFitConfig& cfg, const EpochObserver& observer = {});

/// One encoder pass: N(mu_NN(e), Sigma_NN(e)).
GaussianDensity predict_posterior(const VariationalPosterior& q, const Vector& e);

}  // namespace rtminv
