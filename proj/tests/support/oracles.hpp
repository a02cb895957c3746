// Independent reference computations for the tests. Nothing here calls into
// the library's own density or gradient code.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// log N(x | m, S) through a dense inverse and determinant.
inline double dense_log_pdf(const Vec& m, const Mat& s, const Vec& x) {
  const Vec d = x - m;
  const double quad = d.dot(s.inverse() * d);
  return -0.5 * (static_cast<double>(m.size()) * std::log(2.0 * std::numbers::pi) +
                 std::log(s.determinant()) + quad);
}

/// Marginal evidence of e under f(c) = 2c, c ~ N(m, S), noise sigma2:
/// e ~ N(2m, 4S + sigma2 I).
inline double linear2d_log_evidence(const Vec& m, const Mat& s, double sigma2, const Vec& e) {
  const Mat cov = 4.0 * s + sigma2 * Mat::Identity(m.size(), m.size());
  return dense_log_pdf(2.0 * m, cov, e);
}

/// KL(N(m0, S0) || N(m1, S1)) via dense algebra.
inline double dense_kl(const Vec& m0, const Mat& s0, const Vec& m1, const Mat& s1) {
  const Mat s1_inv = s1.inverse();
  const Vec d = m1 - m0;
  return 0.5 * ((s1_inv * s0).trace() + d.dot(s1_inv * d) - static_cast<double>(m0.size()) +
                std::log(s1.determinant() / s0.determinant()));
}

/// Central-difference gradient of a scalar function.
inline Vec central_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(const Vec& a, const Vec& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
