#pragma once

#include <span>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/likelihood.hpp"
#include "rtminv/mlp.hpp"

namespace rtminv {

/// Number of free entries of a DxD lower-triangular matrix.
constexpr Eigen::Index lower_entry_count(Eigen::Index d) { return d * (d + 1) / 2; }

/// Builds a lower-triangular factor from row-major packed entries; diagonal
/// entries are stored as logarithms.
Matrix unpack_log_cholesky(const double* entries, Eigen::Index d);

/// q(c | e) = N(mu(e), L(e) L(e)^T) from an encoder network.
///
/// The encoder sees effects standardized by the training-set mean and scale
/// and emits the mean and lower-triangular factor in standardized cause units
/// (cause / cause_scale). Positive diagonals come from an exponential map, so
/// every input gives a positive definite covariance.
class VariationalPosterior {
 public:
  VariationalPosterior() = default;
  VariationalPosterior(Mlp encoder, Vector input_mean, Vector input_scale, Vector cause_scale);

  static Eigen::Index output_dim(Eigen::Index cause_dim) {
    return cause_dim + lower_entry_count(cause_dim);
  }

  bool initialized() const { return encoder_.parameter_count() > 0; }
  Eigen::Index cause_dim() const { return cause_scale_.size(); }
  Eigen::Index effect_dim() const { return input_mean_.size(); }

  Mlp& encoder() { return encoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Vector& input_mean() const { return input_mean_; }
  const Vector& input_scale() const { return input_scale_; }
  const Vector& cause_scale() const { return cause_scale_; }

  Vector standardize_effect(const Vector& e) const;

  struct Standardized {
    Vector mean;
    Matrix factor;
  };
  /// Encoder output decoded into standardized-unit mean and factor.
  Standardized standardized(const Vector& e) const;

  /// N(mu_NN(e), Sigma_NN(e)) in cause units. Throws InvalidState if untrained.
  GaussianDensity predict(const Vector& e) const;

 private:
  Mlp encoder_;
  Vector input_mean_;
  Vector input_scale_;
  Vector cause_scale_;
};

void to_json(nlohmann::json& j, const VariationalPosterior& q);
void from_json(const nlohmann::json& j, VariationalPosterior& q);

/// Prior N(m, L L^T) with free parameters [m, packed log-Cholesky entries],
/// held in standardized cause units.
class LearnablePrior {
 public:
  LearnablePrior() = default;
  /// m = 0, L = I.
  explicit LearnablePrior(Eigen::Index dim);

  Eigen::Index dim() const { return dim_; }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  Vector mean() const { return params_.head(dim_); }
  Matrix factor() const { return unpack_log_cholesky(params_.data() + dim_, dim_); }

  /// The prior in cause units for the given standardization scale.
  GaussianDensity density(const Vector& cause_scale) const;

 private:
  Eigen::Index dim_ = 0;
  Vector params_;
};

/// mu + L z.
Vector reparam_sample(const Vector& mean, const Matrix& factor, const Vector& z);

/// KL(N(mu_q, Lq Lq^T) || N(mu_p, Lp Lp^T)) with gradients in the factors.
struct GaussianKl {
  double value = 0.0;
  Vector d_mean_q;
  Matrix d_factor_q;  // lower triangle meaningful
  Vector d_mean_p;
  Matrix d_factor_p;
};
GaussianKl kl_with_gradients(const Vector& mean_q, const Matrix& factor_q, const Vector& mean_p,
                             const Matrix& factor_p);

struct ElboEstimate {
  double value = 0.0;
  double expected_log_likelihood = 0.0;
  double kl = 0.0;
  /// d value / d encoder parameters.
  Vector encoder_grad;
  /// d value / d prior parameters.
  Vector prior_grad;
};

/// Single-datum ELBO: mean log p(e | c_m) over c_m = reparam(mu, L, z_m), minus
/// the closed-form KL(q(.|e) || prior). One z per Monte Carlo sample.
ElboEstimate elbo_estimate(const LikelihoodModel& lm, const LearnablePrior& prior,
                           const VariationalPosterior& q, const Vector& e,
                           std::span<const Vector> z);

/// Same with `mc_samples` fresh draws; a draw whose forward evaluation fails
/// is redrawn once before the failure propagates.
ElboEstimate elbo_estimate(const LikelihoodModel& lm, const LearnablePrior& prior,
                           const VariationalPosterior& q, const Vector& e, int mc_samples,
                           Rng& rng);

}  // namespace rtminv
