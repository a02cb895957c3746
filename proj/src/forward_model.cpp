#include "rtminv/forward_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rtminv {

// Generated from data/surrogate_rtm_coefficients.txt at configure time.
extern const char kSurrogateCoefficientsText[];

ForwardModel::ForwardModel(std::string name, int cause_dim, int effect_dim, double noise_variance,
                           Evaluator evaluator, JacobianFn jacobian, Vector cause_scale) {
  require(cause_dim > 0 && effect_dim > 0, "forward model dimensions must be positive");
  require(noise_variance > 0.0 && std::isfinite(noise_variance),
          "noise variance must be positive and finite");
  require(static_cast<bool>(evaluator), "forward model needs an evaluator");
  if (cause_scale.size() == 0) cause_scale = Vector::Ones(cause_dim);
  require(cause_scale.size() == cause_dim && (cause_scale.array() > 0.0).all(),
          "cause scale must be positive with one entry per cause");
  impl_ = std::make_shared<const Impl>(Impl{std::move(name), cause_dim, effect_dim, noise_variance,
                                            std::move(evaluator), std::move(jacobian),
                                            std::move(cause_scale)});
}

void ForwardModel::check_cause(const Vector& c) const {
  if (c.size() != impl_->cause_dim) {
    throw InvalidInput(impl_->name + ": cause has length " + std::to_string(c.size()) +
                       ", expected " + std::to_string(impl_->cause_dim));
  }
}

Vector ForwardModel::eval(const Vector& c) const {
  check_cause(c);
  Vector e = impl_->evaluator(c);
  if (e.size() != impl_->effect_dim) {
    throw InvalidInput(impl_->name + ": evaluator returned the wrong effect dimension");
  }
  return e;
}

Matrix ForwardModel::finite_difference_jacobian(const Vector& c, double h) const {
  check_cause(c);
  Matrix jac(impl_->effect_dim, impl_->cause_dim);
  Vector probe = c;
  for (int k = 0; k < impl_->cause_dim; ++k) {
    probe[k] = c[k] + h;
    const Vector plus = eval(probe);
    probe[k] = c[k] - h;
    const Vector minus = eval(probe);
    probe[k] = c[k];
    jac.col(k) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

Matrix ForwardModel::jacobian(const Vector& c) const {
  check_cause(c);
  Matrix jac = impl_->jacobian ? impl_->jacobian(c) : finite_difference_jacobian(c);
  if (jac.rows() != impl_->effect_dim || jac.cols() != impl_->cause_dim) {
    throw InvalidInput(impl_->name + ": Jacobian has the wrong shape");
  }
  if (!jac.allFinite()) throw NumericalFailure(impl_->name + ": non-finite Jacobian");
  return jac;
}

Vector ForwardModel::simulate(const Vector& c, Rng& rng) const {
  return eval(c) + std::sqrt(impl_->noise_variance) * standard_normal(rng, impl_->effect_dim);
}

ForwardModel ForwardModel::with_noise_variance(double noise_variance) const {
  return ForwardModel(impl_->name, impl_->cause_dim, impl_->effect_dim, noise_variance,
                      impl_->evaluator, impl_->jacobian, impl_->cause_scale);
}

Vector truncate_negative(const Vector& c) { return c.cwiseMax(0.0); }

ForwardModel make_linear2d(double noise_variance) {
  return ForwardModel(
      "linear2d", 2, 2, noise_variance, [](const Vector& c) -> Vector { return 2.0 * c; },
      [](const Vector&) -> Matrix { return 2.0 * Matrix::Identity(2, 2); });
}

ForwardModel make_bimodal(double noise_variance) {
  return ForwardModel(
      "bimodal", 2, 2, noise_variance,
      [](const Vector& c) -> Vector {
        Vector e(2);
        e << c[0] * c[0], c[0] * c[1];
        return e;
      },
      [](const Vector& c) -> Matrix {
        Matrix j(2, 2);
        j << 2.0 * c[0], 0.0, c[1], c[0];
        return j;
      });
}

Vector surrogate_cause_scale() {
  Vector s(3);
  s << 1e-2, 1e-2, 50.0;
  return s;
}

SurrogateCoefficients parse_surrogate_coefficients(std::string_view text) {
  std::vector<double> values;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    std::vector<double> row_values;
    double x = 0.0;
    while (row >> x) row_values.push_back(x);
    if (!row.eof()) throw InvalidInput("surrogate coefficients: unparsable line '" + line + "'");
    if (row_values.empty()) continue;
    if (row_values.size() != 3) {
      throw InvalidInput("surrogate coefficients: every row needs 3 entries");
    }
    values.insert(values.end(), row_values.begin(), row_values.end());
  }
  if (values.size() != 2 * 9 * 3) {
    throw InvalidInput("surrogate coefficients: expected 18 rows (A then B)");
  }
  SurrogateCoefficients out{Matrix(9, 3), Matrix(9, 3)};
  for (int r = 0; r < 9; ++r) {
    for (int k = 0; k < 3; ++k) {
      out.linear(r, k) = values[static_cast<std::size_t>(r * 3 + k)];
      out.quadratic(r, k) = values[static_cast<std::size_t>(27 + r * 3 + k)];
    }
  }
  if (!out.linear.allFinite() || !out.quadratic.allFinite()) {
    throw InvalidInput("surrogate coefficients must be finite");
  }
  return out;
}

SurrogateCoefficients load_surrogate_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open surrogate coefficient file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_surrogate_coefficients(buffer.str());
}

const SurrogateCoefficients& builtin_surrogate_coefficients() {
  static const SurrogateCoefficients coefficients =
      parse_surrogate_coefficients(kSurrogateCoefficientsText);
  return coefficients;
}

SurrogateCoefficients generate_surrogate_coefficients(std::uint64_t seed) {
  Rng rng(seed);
  const Vector scale = surrogate_cause_scale();
  SurrogateCoefficients out{Matrix(9, 3), Matrix(9, 3)};
  for (int r = 0; r < 9; ++r)
    for (int k = 0; k < 3; ++k) out.linear(r, k) = uniform01(rng) / scale[k];
  for (int r = 0; r < 9; ++r)
    for (int k = 0; k < 3; ++k) out.quadratic(r, k) = uniform01(rng) / (scale[k] * scale[k]);
  return out;
}

ForwardModel make_surrogate_rtm(double noise_variance, const SurrogateCoefficients& coefficients) {
  require(coefficients.linear.rows() == 9 && coefficients.linear.cols() == 3 &&
              coefficients.quadratic.rows() == 9 && coefficients.quadratic.cols() == 3,
          "surrogate coefficients must be 9x3");
  const Matrix a = coefficients.linear;
  const Matrix b = coefficients.quadratic;
  return ForwardModel(
      "surrogate_rtm", 3, 9, noise_variance,
      [a, b](const Vector& c) -> Vector {
        const Vector t = truncate_negative(c);
        return a * t + b * t.cwiseProduct(t);
      },
      [a, b](const Vector& c) -> Matrix {
        const Vector t = truncate_negative(c);
        Matrix j = a + 2.0 * b * t.asDiagonal();
        // d t_k / d c_k is 0 for c_k <= 0 (including exactly 0).
        for (int k = 0; k < 3; ++k)
          if (!(c[k] > 0.0)) j.col(k).setZero();
        return j;
      },
      surrogate_cause_scale());
}

ForwardModel make_model(std::string_view name, double noise_variance) {
  if (name == "linear2d") return make_linear2d(noise_variance);
  if (name == "bimodal") return make_bimodal(noise_variance);
  if (name == "surrogate_rtm") return make_surrogate_rtm(noise_variance);
  throw InvalidInput("unknown forward model '" + std::string(name) + "'");
}

std::vector<std::string> model_names() { return {"linear2d", "bimodal", "surrogate_rtm"}; }

}  // namespace rtminv
