#pragma once

#include "rtminv/forward_model.hpp"
#include "rtminv/gaussian.hpp"

namespace rtminv {

/// p(e | c) = N(e | f(c), sigma^2 I) for a fixed forward model.
class LikelihoodModel {
 public:
  explicit LikelihoodModel(ForwardModel forward) : forward_(std::move(forward)) {}

  const ForwardModel& forward() const { return forward_; }
  double noise_variance() const { return forward_.noise_variance(); }

  double log_likelihood(const Vector& c, const Vector& e) const;
  /// d/dc log p(e | c) = J^T (e - f(c)) / sigma^2.
  Vector grad_log_likelihood(const Vector& c, const Vector& e) const;

  /// Value and gradient in one pass.
  double log_likelihood(const Vector& c, const Vector& e, Vector& grad) const;

 private:
  Vector residual(const Vector& c, const Vector& e) const;

  ForwardModel forward_;
};

/// log p(e | c) + log p(c), the posterior up to its normalizer.
double log_posterior_unnorm(const LikelihoodModel& lm, const GaussianDensity& prior,
                            const Vector& c, const Vector& e);

/// J^T (e - f(c)) / sigma^2 - S^{-1} (c - m).
Vector grad_log_posterior(const LikelihoodModel& lm, const GaussianDensity& prior,
                          const Vector& c, const Vector& e);

}  // namespace rtminv
