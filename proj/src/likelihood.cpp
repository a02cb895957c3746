#include "rtminv/likelihood.hpp"

#include <cmath>
#include <numbers>

namespace rtminv {

Vector LikelihoodModel::residual(const Vector& c, const Vector& e) const {
  if (e.size() != forward_.effect_dim()) {
    throw InvalidInput("likelihood: effect has length " + std::to_string(e.size()) +
                       ", expected " + std::to_string(forward_.effect_dim()));
  }
  const Vector f = forward_.eval(c);
  if (!f.allFinite()) throw NumericalFailure(forward_.name() + ": non-finite forward value");
  return e - f;
}

double LikelihoodModel::log_likelihood(const Vector& c, const Vector& e) const {
  const Vector r = residual(c, e);
  const double sigma2 = noise_variance();
  return -0.5 * static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi * sigma2) -
         r.squaredNorm() / (2.0 * sigma2);
}

double LikelihoodModel::log_likelihood(const Vector& c, const Vector& e, Vector& grad) const {
  const Vector r = residual(c, e);
  const double sigma2 = noise_variance();
  grad = forward_.jacobian(c).transpose() * r / sigma2;
  return -0.5 * static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi * sigma2) -
         r.squaredNorm() / (2.0 * sigma2);
}

Vector LikelihoodModel::grad_log_likelihood(const Vector& c, const Vector& e) const {
  Vector grad;
  log_likelihood(c, e, grad);
  return grad;
}

double log_posterior_unnorm(const LikelihoodModel& lm, const GaussianDensity& prior,
                            const Vector& c, const Vector& e) {
  require(prior.dim() == lm.forward().cause_dim(), "prior dimension does not match the model");
  return lm.log_likelihood(c, e) + prior.log_pdf(c);
}

Vector grad_log_posterior(const LikelihoodModel& lm, const GaussianDensity& prior,
                          const Vector& c, const Vector& e) {
  require(prior.dim() == lm.forward().cause_dim(), "prior dimension does not match the model");
  return lm.grad_log_likelihood(c, e) + prior.grad_log_pdf(c);
}

}  // namespace rtminv
