#include "rtminv/gaussian.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

namespace rtminv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool try_cholesky(const Matrix& sym, Matrix& factor) {
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) return false;
  factor = llt.matrixL();
  return factor.allFinite() && (factor.diagonal().array() > 0.0).all();
}

}  // namespace

Matrix cholesky_with_jitter(const Matrix& sym, bool* jittered) {
  if (jittered) *jittered = false;
  if (!sym.allFinite()) throw NumericalFailure("covariance has non-finite entries");
  Matrix factor;
  if (try_cholesky(sym, factor)) return factor;
  const double dim = static_cast<double>(sym.rows());
  const double trace = sym.trace();
  const double jitter = trace > 0.0 ? 1e-9 * trace / dim : kAbsoluteJitter;
  Matrix repaired = sym;
  repaired.diagonal().array() += jitter;
  if (!try_cholesky(repaired, factor)) {
    throw NumericalFailure("covariance is not positive definite after jitter");
  }
  if (jittered) *jittered = true;
  return factor;
}

GaussianDensity::GaussianDensity(Vector mean, Matrix cov) : mean_(std::move(mean)) {
  const Eigen::Index d = mean_.size();
  require(d > 0, "Gaussian needs a positive dimension");
  require(cov.rows() == d && cov.cols() == d, "covariance shape does not match the mean");
  require(mean_.allFinite(), "Gaussian mean must be finite");
  if (!cov.allFinite()) throw NumericalFailure("covariance has non-finite entries");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
          "covariance is not symmetric");
  cov_ = 0.5 * (cov + cov.transpose());
  factor_ = cholesky_with_jitter(cov_, &jittered_);
  if (jittered_) cov_ = factor_ * factor_.transpose();
}

GaussianDensity GaussianDensity::standard(Eigen::Index dim) {
  return GaussianDensity(Vector::Zero(dim), Matrix::Identity(dim, dim));
}

double GaussianDensity::log_det_cov() const {
  return 2.0 * factor_.diagonal().array().log().sum();
}

Vector GaussianDensity::whiten(const Vector& v) const {
  return factor_.triangularView<Eigen::Lower>().solve(v);
}

Vector GaussianDensity::solve(const Vector& v) const {
  return factor_.transpose().triangularView<Eigen::Upper>().solve(whiten(v));
}

double GaussianDensity::log_pdf(const Vector& x) const {
  require(x.size() == dim(), "log_pdf: dimension mismatch");
  const Vector z = whiten(x - mean_);
  return -0.5 * z.squaredNorm() - 0.5 * log_det_cov() - 0.5 * static_cast<double>(dim()) * kLog2Pi;
}

Vector GaussianDensity::grad_log_pdf(const Vector& x) const {
  require(x.size() == dim(), "grad_log_pdf: dimension mismatch");
  return -solve(x - mean_);
}

Vector GaussianDensity::sample(Rng& rng) const {
  return mean_ + factor_ * standard_normal(rng, dim());
}

double kl_gaussians(const GaussianDensity& p, const GaussianDensity& q) {
  require(p.dim() == q.dim(), "kl_gaussians: dimension mismatch");
  const double d = static_cast<double>(p.dim());
  // tr(Sq^{-1} Sp) = ||Lq^{-1} Lp||_F^2
  const Matrix a = q.factor().triangularView<Eigen::Lower>().solve(p.factor());
  const Vector b = q.whiten(q.mean() - p.mean());
  const double kl =
      0.5 * (a.squaredNorm() + b.squaredNorm() - d + q.log_det_cov() - p.log_det_cov());
  return std::max(kl, 0.0);
}

Matrix scatter_matrix(std::span<const Vector> samples, const Vector& mean) {
  Matrix scatter = Matrix::Zero(mean.size(), mean.size());
  for (const auto& x : samples) {
    const Vector d = x - mean;
    scatter.noalias() += d * d.transpose();
  }
  scatter /= static_cast<double>(samples.size());
  return 0.5 * (scatter + scatter.transpose());
}

GaussianDensity fit_gaussian_mle(std::span<const Vector> samples) {
  require(samples.size() >= 2, "fit_gaussian_mle needs at least 2 samples");
  const Eigen::Index d = samples.front().size();
  Vector mean = Vector::Zero(d);
  for (const auto& x : samples) {
    require(x.size() == d, "fit_gaussian_mle: samples have different dimensions");
    mean += x;
  }
  mean /= static_cast<double>(samples.size());
  return GaussianDensity(mean, scatter_matrix(samples, mean));
}

void to_json(nlohmann::json& j, const GaussianDensity& g) {
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index r = 0; r < g.dim(); ++r) {
    cov.push_back(to_std(g.cov().row(r).transpose()));
  }
  j = nlohmann::json{{"mean", to_std(g.mean())}, {"cov", cov}};
}

void from_json(const nlohmann::json& j, GaussianDensity& g) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto rows = j.at("cov").get<std::vector<std::vector<double>>>();
  const auto d = static_cast<Eigen::Index>(mean.size());
  require(static_cast<Eigen::Index>(rows.size()) == d, "Gaussian JSON: cov row count");
  Matrix cov(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    require(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) == d,
            "Gaussian JSON: cov column count");
    for (Eigen::Index c = 0; c < d; ++c)
      cov(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  g = GaussianDensity(from_std(mean), cov);
}

}  // namespace rtminv
