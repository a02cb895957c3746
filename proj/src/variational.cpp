#include "rtminv/variational.hpp"

#include <cmath>
#include <functional>

#include <nlohmann/json.hpp>

namespace rtminv {

Matrix unpack_log_cholesky(const double* entries, Eigen::Index d) {
  Matrix l = Matrix::Zero(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j, ++k) l(i, j) = (i == j) ? std::exp(entries[k]) : entries[k];
  }
  return l;
}

namespace {

// Packs d value / d L (lower part) into the log-Cholesky parameter layout.
void pack_factor_gradient(const Matrix& d_factor, const Matrix& factor, double* out) {
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < factor.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j, ++k) {
      out[k] = (i == j) ? d_factor(i, i) * factor(i, i) : d_factor(i, j);
    }
  }
}

}  // namespace

VariationalPosterior::VariationalPosterior(Mlp encoder, Vector input_mean, Vector input_scale,
                                           Vector cause_scale)
    : encoder_(std::move(encoder)),
      input_mean_(std::move(input_mean)),
      input_scale_(std::move(input_scale)),
      cause_scale_(std::move(cause_scale)) {
  require(input_mean_.size() == input_scale_.size(), "input standardization sizes differ");
  require((input_scale_.array() > 0.0).all(), "input scales must be positive");
  require((cause_scale_.array() > 0.0).all(), "cause scales must be positive");
  require(encoder_.input_dim() == input_mean_.size(), "encoder input does not match the effect size");
  require(encoder_.output_dim() == output_dim(cause_scale_.size()),
          "encoder output must hold a mean and a packed lower-triangular factor");
}

Vector VariationalPosterior::standardize_effect(const Vector& e) const {
  require(e.size() == input_mean_.size(), "effect has the wrong dimension for this encoder");
  return (e - input_mean_).cwiseQuotient(input_scale_);
}

VariationalPosterior::Standardized VariationalPosterior::standardized(const Vector& e) const {
  if (!initialized()) throw InvalidState("variational posterior has no trained encoder");
  const Vector out = encoder_.forward(standardize_effect(e));
  const Eigen::Index d = cause_dim();
  return {out.head(d), unpack_log_cholesky(out.data() + d, d)};
}

GaussianDensity VariationalPosterior::predict(const Vector& e) const {
  const Standardized s = standardized(e);
  const Matrix l = cause_scale_.asDiagonal() * s.factor;
  return GaussianDensity(cause_scale_.cwiseProduct(s.mean), l * l.transpose());
}

void to_json(nlohmann::json& j, const VariationalPosterior& q) {
  j = nlohmann::json{{"network", q.encoder()},
                     {"input_mean", to_std(q.input_mean())},
                     {"input_scale", to_std(q.input_scale())},
                     {"cause_scale", to_std(q.cause_scale())}};
}

void from_json(const nlohmann::json& j, VariationalPosterior& q) {
  q = VariationalPosterior(j.at("network").get<Mlp>(),
                           from_std(j.at("input_mean").get<std::vector<double>>()),
                           from_std(j.at("input_scale").get<std::vector<double>>()),
                           from_std(j.at("cause_scale").get<std::vector<double>>()));
}

LearnablePrior::LearnablePrior(Eigen::Index dim)
    : dim_(dim), params_(Vector::Zero(dim + lower_entry_count(dim))) {
  require(dim > 0, "prior dimension must be positive");
}

GaussianDensity LearnablePrior::density(const Vector& cause_scale) const {
  require(cause_scale.size() == dim_, "cause scale does not match the prior dimension");
  const Matrix l = cause_scale.asDiagonal() * factor();
  return GaussianDensity(cause_scale.cwiseProduct(mean()), l * l.transpose());
}

Vector reparam_sample(const Vector& mean, const Matrix& factor, const Vector& z) {
  require(mean.size() == z.size() && factor.rows() == z.size() && factor.cols() == z.size(),
          "reparam_sample: shape mismatch");
  return mean + factor.triangularView<Eigen::Lower>() * z;
}

GaussianKl kl_with_gradients(const Vector& mean_q, const Matrix& factor_q, const Vector& mean_p,
                             const Matrix& factor_p) {
  const Eigen::Index d = mean_q.size();
  const auto lp = factor_p.triangularView<Eigen::Lower>();
  const Matrix a = lp.solve(Matrix(factor_q.triangularView<Eigen::Lower>()));
  const Vector b = lp.solve(mean_q - mean_p);
  GaussianKl kl;
  kl.value = 0.5 * (a.squaredNorm() + b.squaredNorm() - static_cast<double>(d)) +
             factor_p.diagonal().array().log().sum() - factor_q.diagonal().array().log().sum();
  const auto lp_t = factor_p.transpose().triangularView<Eigen::Upper>();
  kl.d_mean_q = lp_t.solve(b);
  kl.d_mean_p = -kl.d_mean_q;
  kl.d_factor_q = lp_t.solve(a);
  kl.d_factor_q.diagonal().array() -= factor_q.diagonal().array().inverse();
  kl.d_factor_p = -lp_t.solve(Matrix(a * a.transpose() + b * b.transpose()));
  kl.d_factor_p.diagonal().array() += factor_p.diagonal().array().inverse();
  kl.d_factor_q = kl.d_factor_q.triangularView<Eigen::Lower>();
  kl.d_factor_p = kl.d_factor_p.triangularView<Eigen::Lower>();
  return kl;
}

namespace {

using DrawNoise = std::function<Vector(int sample, bool retry)>;

ElboEstimate elbo_impl(const LikelihoodModel& lm, const LearnablePrior& prior,
                       const VariationalPosterior& q, const Vector& e, int mc_samples,
                       const DrawNoise& draw) {
  require(mc_samples >= 1, "ELBO needs at least one Monte Carlo sample");
  const Eigen::Index d = q.cause_dim();
  require(prior.dim() == d && lm.forward().cause_dim() == d,
          "ELBO: prior, posterior and model disagree on the cause dimension");
  if (!q.initialized()) throw InvalidState("ELBO: variational posterior has no encoder");

  const Vector x = q.standardize_effect(e);
  const Vector out = q.encoder().forward(x);
  const Vector mu = out.head(d);
  const Matrix lq = unpack_log_cholesky(out.data() + d, d);
  const Vector& scale = q.cause_scale();

  Vector d_mu = Vector::Zero(d);
  Matrix d_lq = Matrix::Zero(d, d);
  double expected_ll = 0.0;
  for (int m = 0; m < mc_samples; ++m) {
    Vector z = draw(m, false);
    Vector grad_c;
    double ll = 0.0;
    try {
      ll = lm.log_likelihood(scale.cwiseProduct(reparam_sample(mu, lq, z)), e, grad_c);
    } catch (const NumericalFailure&) {
      z = draw(m, true);
      ll = lm.log_likelihood(scale.cwiseProduct(reparam_sample(mu, lq, z)), e, grad_c);
    }
    const Vector g = scale.cwiseProduct(grad_c);
    expected_ll += ll;
    d_mu += g;
    d_lq += g * z.transpose();
  }
  const double inv_m = 1.0 / static_cast<double>(mc_samples);
  expected_ll *= inv_m;
  d_mu *= inv_m;
  d_lq *= inv_m;

  const GaussianKl kl = kl_with_gradients(mu, lq, prior.mean(), prior.factor());
  d_mu -= kl.d_mean_q;
  d_lq = Matrix(d_lq.triangularView<Eigen::Lower>()) - kl.d_factor_q;

  Vector cotangent(out.size());
  cotangent.head(d) = d_mu;
  pack_factor_gradient(d_lq, lq, cotangent.data() + d);

  ElboEstimate est;
  est.expected_log_likelihood = expected_ll;
  est.kl = kl.value;
  est.value = expected_ll - kl.value;
  est.encoder_grad = q.encoder().backward(x, cotangent).parameters;
  est.prior_grad.resize(prior.parameters().size());
  est.prior_grad.head(d) = -kl.d_mean_p;
  pack_factor_gradient(-kl.d_factor_p, prior.factor(), est.prior_grad.data() + d);
  return est;
}

}  // namespace

ElboEstimate elbo_estimate(const LikelihoodModel& lm, const LearnablePrior& prior,
                           const VariationalPosterior& q, const Vector& e,
                           std::span<const Vector> z) {
  return elbo_impl(lm, prior, q, e, static_cast<int>(z.size()), [&](int m, bool retry) -> Vector {
    if (retry) throw NumericalFailure("ELBO: forward model failed at a fixed noise draw");
    require(z[static_cast<std::size_t>(m)].size() == q.cause_dim(), "ELBO: noise has the wrong size");
    return z[static_cast<std::size_t>(m)];
  });
}

ElboEstimate elbo_estimate(const LikelihoodModel& lm, const LearnablePrior& prior,
                           const VariationalPosterior& q, const Vector& e, int mc_samples,
                           Rng& rng) {
  return elbo_impl(lm, prior, q, e, mc_samples,
                   [&](int, bool) { return standard_normal(rng, q.cause_dim()); });
}

}  // namespace rtminv
