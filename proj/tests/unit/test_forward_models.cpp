#include <doctest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "rtminv/forward_model.hpp"

using namespace rtminv;

namespace {

Vector vec(std::initializer_list<double> v) { return from_std(std::vector<double>(v)); }

Matrix fd_jacobian(const ForwardModel& m, const Vector& c, double h) {
  Matrix j(m.effect_dim(), m.cause_dim());
  for (int k = 0; k < m.cause_dim(); ++k) {
    Vector cp = c;
    Vector cm = c;
    cp[k] += h;
    cm[k] -= h;
    j.col(k) = (m.eval(cp) - m.eval(cm)) / (2.0 * h);
  }
  return j;
}

}  // namespace

TEST_CASE("linear2d evaluates 2c and has a constant Jacobian") {
  const ForwardModel m = make_linear2d();
  CHECK(m.cause_dim() == 2);
  CHECK(m.effect_dim() == 2);
  CHECK(m.noise_variance() == kDefaultNoiseVariance);
  CHECK(m.eval(vec({1, 1})).isApprox(vec({2, 2})));
  CHECK(m.eval(vec({4, 6})).isApprox(vec({8, 12})));
  Matrix expected(2, 2);
  expected << 2, 0, 0, 2;
  CHECK(m.jacobian(vec({-3.0, 7.5})).isApprox(expected));
}

TEST_CASE("bimodal model is sign symmetric") {
  const ForwardModel m = make_bimodal();
  CHECK(m.eval(vec({1, 2})).isApprox(vec({1, 2})));
  CHECK(m.eval(vec({2, 2})).isApprox(vec({4, 4})));
  CHECK(m.eval(vec({-2, -2})).isApprox(vec({4, 4})));
  Matrix expected(2, 2);
  expected << 4, 0, 2, 2;
  CHECK(m.jacobian(vec({2, 2})).isApprox(expected));
  CHECK((fd_jacobian(m, vec({2, 2}), 1e-6) - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("simulate at vanishing noise reproduces the noiseless toy values") {
  Rng rng(1);
  CHECK((make_linear2d(1e-30).simulate(vec({4, 6}), rng) - vec({8, 12})).norm() < 1e-12);
  CHECK((make_bimodal(1e-30).simulate(vec({2, 2}), rng) - vec({4, 4})).norm() < 1e-12);
  CHECK((make_bimodal(1e-30).simulate(vec({-2, -2}), rng) - vec({4, 4})).norm() < 1e-12);
}

TEST_CASE("dimension mismatches are invalid input") {
  const ForwardModel m = make_linear2d();
  Rng rng(2);
  CHECK_THROWS_AS(m.eval(vec({1, 2, 3})), InvalidInput);
  CHECK_THROWS_AS(m.jacobian(vec({1})), InvalidInput);
  CHECK_THROWS_AS(m.simulate(vec({1}), rng), InvalidInput);
  CHECK_THROWS_AS(make_model("no_such_model"), InvalidInput);
  CHECK_THROWS_AS(make_linear2d(0.0), InvalidInput);
}

TEST_CASE("surrogate truncates negative causes") {
  const ForwardModel m = make_surrogate_rtm();
  CHECK(m.cause_dim() == 3);
  CHECK(m.effect_dim() == 9);
  CHECK(m.eval(vec({-1, -2, -3})) == m.eval(vec({0, 0, 0})));
  CHECK(m.jacobian(vec({-1, -1, -1})).isZero());
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vector c = 0.02 * standard_normal(rng, 3);
    CHECK(m.eval(c) == m.eval(truncate_negative(c)));
  }
}

TEST_CASE("evaluation is bit-for-bit deterministic") {
  for (const auto& name : model_names()) {
    const ForwardModel m = make_model(name);
    Rng rng(4);
    const Vector c = m.cause_scale().cwiseProduct(standard_normal(rng, m.cause_dim()));
    CHECK(m.eval(c) == m.eval(c));
  }
}

TEST_CASE("analytic Jacobians match central differences on 100 random points") {
  for (const auto& name : model_names()) {
    const ForwardModel m = make_model(name);
    Rng rng(5);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      Vector c = m.cause_scale().cwiseProduct(standard_normal(rng, m.cause_dim()));
      if (name == "surrogate_rtm") c = c.cwiseAbs() + 0.1 * m.cause_scale();  // away from the kink
      const Matrix analytic = m.jacobian(c);
      const Matrix numeric = fd_jacobian(m, c, kFiniteDifferenceStep);
      for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
        for (Eigen::Index k = 0; k < analytic.cols(); ++k) {
          if (std::abs(analytic(r, k)) <= 1e-8) continue;
          worst = std::max(worst, std::abs(analytic(r, k) - numeric(r, k)) / std::abs(analytic(r, k)));
        }
      }
    }
    INFO(name);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("models without an analytic Jacobian fall back to central differences") {
  const ForwardModel m("cubic", 1, 1, 1e-7, [](const Vector& c) { return Vector(c.array().cube()); },
                       {}, Vector::Ones(1));
  CHECK_FALSE(m.has_analytic_jacobian());
  CHECK(m.jacobian(vec({2.0}))(0, 0) == doctest::Approx(12.0).epsilon(1e-8));
}

TEST_CASE("non-finite forward output is a numerical failure") {
  const ForwardModel m("log", 1, 1, 1e-7, [](const Vector& c) { return Vector(c.array().log()); },
                       {}, Vector::Ones(1));
  CHECK_THROWS_AS(m.jacobian(vec({0.0})), NumericalFailure);
}

TEST_CASE("simulate noise has the configured variance") {
  const ForwardModel m = make_bimodal();
  Rng rng(6);
  const Vector c = vec({1.0, 2.0});
  const Vector f = m.eval(c);
  Vector sq = Vector::Zero(2);
  const int n = 10000;
  for (int i = 0; i < n; ++i) sq += (m.simulate(c, rng) - f).cwiseAbs2();
  sq /= n;
  for (int k = 0; k < 2; ++k) CHECK(std::abs(sq[k] / m.noise_variance() - 1.0) < 0.05);
}

TEST_CASE("checked-in surrogate coefficients match the seeded generator") {
  const SurrogateCoefficients generated = generate_surrogate_coefficients(42);
  const SurrogateCoefficients& builtin = builtin_surrogate_coefficients();
  CHECK(builtin.linear == generated.linear);
  CHECK(builtin.quadratic == generated.quadratic);
  const SurrogateCoefficients from_file =
      load_surrogate_coefficients(std::string(RTMINV_SOURCE_DIR) + "/data/surrogate_rtm_coefficients.txt");
  CHECK(from_file.linear == generated.linear);

  // Raw draws are uniform on [0, 1] before column scaling.
  const Vector s = surrogate_cause_scale();
  const Matrix raw_a = generated.linear * s.asDiagonal();
  const Matrix raw_b = generated.quadratic * s.cwiseAbs2().asDiagonal();
  CHECK(raw_a.minCoeff() >= 0.0);
  CHECK(raw_a.maxCoeff() <= 1.0);
  CHECK(raw_b.minCoeff() >= 0.0);
  CHECK(raw_b.maxCoeff() <= 1.0);
}

TEST_CASE("coefficient parser rejects malformed files") {
  CHECK_THROWS_AS(parse_surrogate_coefficients("1 2 3\n"), InvalidInput);
  CHECK_THROWS_AS(parse_surrogate_coefficients("1 2\n"), InvalidInput);
  std::string text;
  for (int i = 0; i < 18; ++i) text += "1 2 x\n";
  CHECK_THROWS_AS(parse_surrogate_coefficients(text), InvalidInput);
  text.clear();
  for (int i = 0; i < 18; ++i) text += "1 2 3  # row\n";
  CHECK(parse_surrogate_coefficients(text).linear(0, 2) == 3.0);
}
