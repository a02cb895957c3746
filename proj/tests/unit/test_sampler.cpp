#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "rtminv/posterior.hpp"

using namespace rtminv;

namespace {

Vector vec(std::initializer_list<double> v) { return from_std(std::vector<double>(v)); }

GaussianDensity correlated(const Vector& mean) {
  Matrix s(2, 2);
  s << 1, 0.6, 0.6, 1;
  return {mean, s};
}

LogDensity gaussian_target(const GaussianDensity& g) {
  return [g](const Vector& x, Vector& grad) {
    grad = g.grad_log_pdf(x);
    return g.log_pdf(x);
  };
}

}  // namespace

TEST_CASE("L-BFGS finds the maximum of a quadratic") {
  const GaussianDensity g = correlated(vec({3, -1}));
  const MapResult r = find_map(gaussian_target(g), vec({-10, 10}));
  CHECK(r.converged);
  CHECK((r.point - g.mean()).norm() < 1e-6);
}

TEST_CASE("bimodal MAP from the prior mean goes to the positive mode") {
  const LikelihoodModel lm(make_bimodal());
  const PosteriorTarget target(lm, correlated(vec({1, 2})), vec({4, 4}));
  const MapResult r = find_posterior_map(target, vec({1, 1}));
  CHECK((r.point - vec({2, 2})).norm() < 1e-3);
}

TEST_CASE("leapfrog is reversible and nearly conserves energy") {
  const GaussianDensity g = correlated(vec({0, 0}));
  const LogDensity target = gaussian_target(g);
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const Vector q0 = standard_normal(rng, 2);
    const Vector p0 = standard_normal(rng, 2);
    const PhasePoint fwd = leapfrog(q0, p0, target, 20, 0.05);
    const PhasePoint back = leapfrog(fwd.position, -fwd.momentum, target, 20, 0.05);
    CHECK((back.position - q0).norm() < 1e-10);
    CHECK((back.momentum + p0).norm() < 1e-10);
    const double h0 = -g.log_pdf(q0) + 0.5 * p0.squaredNorm();
    const double h1 = -g.log_pdf(fwd.position) + 0.5 * fwd.momentum.squaredNorm();
    CHECK(std::abs(h1 - h0) < 0.01);
  }
}

TEST_CASE("leapfrog reports non-finite states") {
  const LogDensity blowup = [](const Vector& x, Vector& grad) {
    grad = Vector::Constant(x.size(), x[0] > 0.5 ? NAN : 1.0);
    return 0.0;
  };
  CHECK_THROWS_AS(leapfrog(vec({0}), vec({1}), blowup, 10, 0.1), NumericalFailure);
}

TEST_CASE("HMC reproduces gaussian moments") {
  const GaussianDensity g = correlated(vec({1, 2}));
  Rng rng(32);
  // Trajectory length 1 stays clear of the half period of either principal axis.
  const HmcResult r = hmc_sample(gaussian_target(g), g.mean(), 5000, HmcConfig{10, 0.1, 100, 1}, rng);
  REQUIRE(r.samples.size() == 5000);
  const GaussianDensity fit = fit_gaussian_mle(r.samples);
  CHECK((fit.mean() - g.mean()).cwiseAbs().maxCoeff() < 0.1);
  CHECK((fit.cov() - g.cov()).cwiseAbs().maxCoeff() < 0.1);
  CHECK(r.acceptance_rate > 0.9);
}

TEST_CASE("tiny steps are almost always accepted") {
  const GaussianDensity g = correlated(vec({0, 0}));
  Rng rng(33);
  const HmcResult r = hmc_sample(gaussian_target(g), vec({0.5, 0.5}), 1000, HmcConfig{5, 1e-4, 10, 1}, rng);
  CHECK(r.acceptance_rate > 0.999);
}

TEST_CASE("HMC edge cases and validation") {
  const GaussianDensity g = GaussianDensity::standard(2);
  Rng rng(34);
  CHECK(hmc_sample(gaussian_target(g), vec({0, 0}), 1, HmcConfig{}, rng).samples.size() == 1);
  CHECK(hmc_sample(gaussian_target(g), vec({0, 0}), 0, HmcConfig{}, rng).samples.empty());
  CHECK_THROWS_AS(validate(HmcConfig{0, 0.1, 0, 1}), InvalidInput);
  CHECK_THROWS_AS(validate(HmcConfig{10, -0.1, 0, 1}), InvalidInput);
  CHECK_THROWS_AS(validate(HmcConfig{10, 0.1, -1, 1}), InvalidInput);
  CHECK_THROWS_AS(validate(HmcConfig{10, 0.1, 0, 0}), InvalidInput);

  const HmcResult thin = hmc_sample(gaussian_target(g), vec({0, 0}), 100, HmcConfig{5, 0.2, 0, 3}, rng);
  CHECK(thin.samples.size() == 100);
  CHECK(thin.proposals == 300);
}

TEST_CASE("whitened HMC handles badly scaled targets") {
  Matrix s(2, 2);
  s << 1e-8, 0, 0, 1e2;
  const GaussianDensity g(vec({0, 0}), s);
  const Matrix f = g.factor();
  Rng rng(35);
  const HmcResult r = hmc_sample(gaussian_target(g), g.mean(), 3000, HmcConfig{20, 0.1, 50, 1}, rng, &f);
  const GaussianDensity fit = fit_gaussian_mle(r.samples);
  CHECK(fit.cov()(0, 0) / s(0, 0) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(fit.cov()(1, 1) / s(1, 1) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("chain csv layout") {
  std::ostringstream out;
  const std::vector<Vector> s{vec({1, 2}), vec({3, 4})};
  write_chain_csv(out, s);
  const std::string text = out.str();
  CHECK(text.rfind("x_1,x_2\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("posterior gauss-newton precision on a linear model is exact") {
  const LikelihoodModel lm(make_linear2d(0.5));
  const GaussianDensity prior = correlated(vec({4, 6}));
  const PosteriorTarget t(lm, prior, vec({8, 12}));
  const Matrix expected = 4.0 / 0.5 * Matrix::Identity(2, 2) + prior.cov().inverse();
  CHECK((t.gauss_newton_precision(vec({1, 1})) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mode search finds both bimodal modes with Laplace masses") {
  const LikelihoodModel lm(make_bimodal());
  const GaussianDensity prior = correlated(vec({1, 2}));
  const PosteriorTarget t(lm, prior, vec({4, 4}));
  Rng rng(36);
  const auto modes = find_posterior_modes(t, ModeSearchConfig{}, rng);
  REQUIRE(modes.size() == 2);
  CHECK((modes[0].point - vec({2, 2})).norm() < 1e-3);
  CHECK((modes[1].point - vec({-2, -2})).norm() < 1e-3);
  // Both modes have the same likelihood and curvature, so the mass ratio is the prior ratio.
  CHECK(modes[0].log_mass - modes[1].log_mass ==
        doctest::Approx(prior.log_pdf(vec({2, 2})) - prior.log_pdf(vec({-2, -2}))).epsilon(1e-3));
}

TEST_CASE("mode-initialized sampler splits draws by Laplace mass") {
  const LikelihoodModel lm(make_bimodal());
  // A prior centred at the origin makes the two modes equally likely.
  const GaussianDensity prior(vec({0, 0}), Matrix::Identity(2, 2));
  const PosteriorTarget t(lm, prior, vec({4, 4}));
  Rng rng(37);
  const PosteriorSamples s = sample_posterior_modes(t, 4000, PosteriorSamplerConfig{}, rng);
  REQUIRE(s.samples.size() == 4000);
  int negative = 0;
  for (const auto& c : s.samples) negative += c[0] < 0.0;
  const double fraction = negative / 4000.0;
  // Binomial with p = 0.5: three standard errors.
  CHECK(std::abs(fraction - 0.5) < 3.0 * std::sqrt(0.25 / 4000.0));
  CHECK(s.acceptance_rate > 0.8);
  for (const auto& c : s.samples) CHECK((c.cwiseAbs() - vec({2, 2})).norm() < 0.01);
}

TEST_CASE("linear posterior samples match the conjugate posterior") {
  const double s2 = 0.1;
  const LikelihoodModel lm(make_linear2d(s2));
  const GaussianDensity prior = correlated(vec({4, 6}));
  const Vector e = vec({7, 13});
  const Matrix precision = prior.cov().inverse() + 4.0 / s2 * Matrix::Identity(2, 2);
  const Matrix cov = precision.inverse();
  const Vector mean = cov * (prior.cov().inverse() * prior.mean() + 2.0 / s2 * e);
  Rng rng(38);
  const PosteriorSamples s = sample_posterior_modes(PosteriorTarget(lm, prior, e), 5000, {}, rng);
  const GaussianDensity fit = fit_gaussian_mle(s.samples);
  CHECK((fit.mean() - mean).cwiseAbs().maxCoeff() < 0.02);
  CHECK((fit.cov() - cov).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("L-BFGS at a stationary point stops immediately") {
  const GaussianDensity g = correlated(vec({3, -1}));
  const MapResult r = find_map(gaussian_target(g), g.mean());
  CHECK(r.iterations <= 1);
  CHECK(r.point == g.mean());
}

TEST_CASE("leapfrog edge cases") {
  const GaussianDensity g = GaussianDensity::standard(2);
  const PhasePoint same = leapfrog(vec({0.3, -0.2}), vec({1, 2}), gaussian_target(g), 0, 0.1);
  CHECK(same.position == vec({0.3, -0.2}));
  CHECK(same.momentum == vec({1, 2}));

  // Harmonic oscillator: energy error is O(step^2).
  const PhasePoint p = leapfrog(vec({1, 0}), vec({0, 1}), gaussian_target(g), 20, 1e-3);
  const double h0 = 0.5 * (1.0 + 1.0);
  const double h1 = 0.5 * (p.position.squaredNorm() + p.momentum.squaredNorm());
  CHECK(std::abs(h1 - h0) < 1e-6);
}

TEST_CASE("standard normal sampling and near-exact integration") {
  const GaussianDensity g = GaussianDensity::standard(2);
  Rng rng(39);
  const HmcResult r = hmc_sample(gaussian_target(g), vec({0, 0}), 10000, HmcConfig{10, 0.1, 100, 1}, rng);
  const GaussianDensity fit = fit_gaussian_mle(r.samples);
  CHECK(fit.mean().cwiseAbs().maxCoeff() < 0.05);
  CHECK((fit.cov() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);

  const HmcResult exact = hmc_sample(gaussian_target(g), vec({0.5, 0.5}), 500, HmcConfig{3, 1e-6, 0, 1}, rng);
  CHECK(exact.acceptance_rate > 0.999);
}

TEST_CASE("leapfrog round trips on the built-in posteriors") {
  Rng rng(40);
  for (const auto& name : model_names()) {
    const ForwardModel m = make_model(name);
    const Vector s = m.cause_scale();
    const GaussianDensity prior(2.0 * s, Matrix(s.cwiseAbs2().asDiagonal()));
    const Vector e = m.simulate(prior.mean(), rng);
    const PosteriorTarget t(LikelihoodModel(m), prior, e);
    // Whitened by the Gauss-Newton scale so one step size suits every model.
    const PosteriorMode mode = laplace_at(t, prior.mean());
    const Matrix f = mode.scale_factor;
    const LogDensity whitened = [&](const Vector& z, Vector& grad) {
      Vector g;
      const double v = t.log_density(prior.mean() + f * z, g);
      grad = f.transpose() * g;
      return v;
    };
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector q0 = 0.5 * standard_normal(rng, m.cause_dim());
      const Vector p0 = standard_normal(rng, m.cause_dim());
      const PhasePoint fwd = leapfrog(q0, p0, whitened, 20, 0.01);
      const PhasePoint back = leapfrog(fwd.position, -fwd.momentum, whitened, 20, 0.01);
      worst = std::max(worst, (back.position - q0).cwiseAbs().maxCoeff());
    }
    INFO(name);
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("negative-mode share under the true bimodal prior follows the Laplace masses") {
  // The prior N([1, 2], S) puts almost no mass near [-2, -2], so the exact
  // posterior share of the negative mode is about 5e-4.
  const LikelihoodModel lm(make_bimodal());
  const PosteriorTarget t(lm, correlated(vec({1, 2})), vec({4, 4}));
  Rng rng(41);
  const PosteriorSamples s = sample_posterior_modes(t, 5000, PosteriorSamplerConfig{}, rng);
  REQUIRE(s.modes.size() == 2);
  const double p = 1.0 / (1.0 + std::exp(s.modes[0].log_mass - s.modes[1].log_mass));
  CHECK(p < 1e-3);
  int negative = 0;
  for (const auto& c : s.samples) negative += c[0] < 0.0;
  const double expected = 5000 * p;
  CHECK(std::abs(negative - expected) <= 5.0 * std::sqrt(expected) + 1.0);
}
