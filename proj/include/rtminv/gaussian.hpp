#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/types.hpp"

namespace rtminv {

/// Multivariate normal N(mean, cov) with a cached Cholesky factor.
///
/// Construction symmetrizes the covariance (rejecting matrices that are not
/// symmetric to 1e-12 relative to their largest entry) and, if the
/// factorization fails, adds 1e-9 * trace(S) / D to the diagonal once.
class GaussianDensity {
 public:
  GaussianDensity() = default;
  GaussianDensity(Vector mean, Matrix cov);

  static GaussianDensity standard(Eigen::Index dim);

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  /// Lower-triangular L with L L^T = cov.
  const Matrix& factor() const { return factor_; }
  bool jittered() const { return jittered_; }

  double log_det_cov() const;

  double log_pdf(const Vector& x) const;
  /// Gradient of log_pdf with respect to x: -S^{-1} (x - m).
  Vector grad_log_pdf(const Vector& x) const;

  /// S^{-1} v via two triangular solves.
  Vector solve(const Vector& v) const;
  /// L^{-1} v.
  Vector whiten(const Vector& v) const;

  Vector sample(Rng& rng) const;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix factor_;
  bool jittered_ = false;
};

/// Jitter used when the scatter of a degenerate sample is exactly zero.
inline constexpr double kAbsoluteJitter = 1e-9;

/// Closed-form KL(p || q).
double kl_gaussians(const GaussianDensity& p, const GaussianDensity& q);

/// Maximum-likelihood fit: sample mean and 1/N scatter. Needs >= 2 samples.
GaussianDensity fit_gaussian_mle(std::span<const Vector> samples);

/// The 1/N scatter matrix before any jitter is applied.
Matrix scatter_matrix(std::span<const Vector> samples, const Vector& mean);

/// Cholesky factor of a symmetric matrix with one diagonal jitter pass.
/// Throws NumericalFailure if the jittered matrix still does not factor.
Matrix cholesky_with_jitter(const Matrix& sym, bool* jittered = nullptr);

void to_json(nlohmann::json& j, const GaussianDensity& g);
void from_json(const nlohmann::json& j, GaussianDensity& g);

}  // namespace rtminv
