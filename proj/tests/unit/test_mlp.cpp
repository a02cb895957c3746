#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "rtminv/mlp.hpp"

using namespace rtminv;

namespace {

// Independent forward pass straight from the storage layout.
Vector reference_forward(const std::vector<int>& sizes, const Vector& params, const Vector& input) {
  Vector h = input;
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    Vector next(out);
    for (int r = 0; r < out; ++r) {
      double acc = params[offset + in * out + r];
      for (int c = 0; c < in; ++c) acc += params[offset + c * out + r] * h[c];
      next[r] = l + 2 < sizes.size() ? std::tanh(acc) : acc;
    }
    offset += in * out + out;
    h = next;
  }
  return h;
}

}  // namespace

TEST_CASE("parameter layout and counts") {
  const Mlp net({2, 16, 16, 9});
  CHECK(net.parameter_count() == (2 * 16 + 16) + (16 * 16 + 16) + (16 * 9 + 9));
  CHECK(net.parameters().isZero());
  const auto blocks = net.blocks();
  CHECK(blocks.size() == 6);
  Eigen::Index total = 0;
  for (const auto& b : blocks) {
    CHECK(b.offset == total);
    total += b.size;
  }
  CHECK(total == net.parameter_count());
  CHECK_THROWS_AS(Mlp({3}), InvalidInput);
  CHECK_THROWS_AS(Mlp({3, 0, 2}), InvalidInput);
}

TEST_CASE("glorot initialization bounds") {
  Rng rng(21);
  const Mlp net = Mlp::glorot_uniform({9, 64, 64, 5}, rng);
  for (int l = 0; l < net.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / (net.layer_sizes()[l] + net.layer_sizes()[l + 1]));
    CHECK(net.weight(l).cwiseAbs().maxCoeff() <= bound);
    CHECK(net.bias(l).isZero());
  }
}

TEST_CASE("forward agrees with an independent implementation") {
  Rng rng(22);
  const std::vector<int> sizes{2, 16, 16, 9};
  Mlp net = Mlp::glorot_uniform(sizes, rng);
  net.parameters() += 0.1 * standard_normal(rng, net.parameter_count());
  for (int i = 0; i < 20; ++i) {
    const Vector x = standard_normal(rng, 2);
    CHECK((net.forward(x) - reference_forward(sizes, net.parameters(), x)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(net.forward(Vector::Zero(3)), InvalidInput);
}

TEST_CASE("backward matches central differences") {
  Rng rng(23);
  const std::vector<int> sizes{3, 8, 8, 4};
  Mlp net = Mlp::glorot_uniform(sizes, rng);
  net.parameters() += 0.1 * standard_normal(rng, net.parameter_count());
  const Vector x = standard_normal(rng, 3);
  const Vector cot = standard_normal(rng, 4);
  const Mlp::Gradient g = net.backward(x, cot);

  const auto by_params = [&](const Vector& p) { return reference_forward(sizes, p, x).dot(cot); };
  const auto by_input = [&](const Vector& in) { return reference_forward(sizes, net.parameters(), in).dot(cot); };
  CHECK(oracle::max_relative_error(g.parameters, oracle::central_gradient(by_params, net.parameters(), 1e-6), 1e-4) <
        1e-6);
  CHECK(oracle::max_relative_error(g.input, oracle::central_gradient(by_input, x, 1e-6), 1e-4) < 1e-6);
}

TEST_CASE("json round trip preserves the network") {
  Rng rng(24);
  const Mlp net = Mlp::glorot_uniform({2, 5, 3}, rng);
  const nlohmann::json j = net;
  const Mlp back = j.get<Mlp>();
  CHECK(back.layer_sizes() == net.layer_sizes());
  CHECK(back.parameters() == net.parameters());
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Adam opt(3, AdamConfig{0.01});
  Vector p = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  opt.step(p, g);
  // Bias correction makes the first update lr * g / (|g| + eps').
  CHECK(p[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.01).epsilon(1e-4));
  opt.step(p, g, Objective::minimize);
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(opt.step_count() == 2);
}

TEST_CASE("adam minimizes a quadratic") {
  Adam opt(2, AdamConfig{0.05});
  Vector p(2);
  p << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * p, Objective::minimize);
  CHECK(p.norm() < 1e-2);
}

TEST_CASE("adam rejects non-finite gradients and names the block") {
  Adam opt(4, AdamConfig{}, {{"weights", 0, 2}, {"bias", 2, 2}});
  Vector p = Vector::Ones(4);
  Vector g = Vector::Zero(4);
  g[3] = NAN;
  try {
    opt.step(p, g);
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& e) {
    CHECK(std::string(e.what()).find("bias") != std::string::npos);
  }
  CHECK(p == Vector::Ones(4));
  CHECK(opt.step_count() == 0);
  CHECK_THROWS_AS(opt.step(p, Vector::Zero(3)), InvalidInput);
}

TEST_CASE("adam fixed points") {
  Adam opt(2, AdamConfig{0.01});
  Vector p(2);
  p << 1.0, -1.0;
  opt.step(p, Vector::Zero(2));
  CHECK(p == (Vector(2) << 1.0, -1.0).finished());

  Adam steady(1, AdamConfig{0.01});
  Vector q = Vector::Zero(1);
  double last = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double before = q[0];
    steady.step(q, Vector::Constant(1, 3.0));
    last = q[0] - before;
  }
  CHECK(last == doctest::Approx(0.01).epsilon(1e-6));

  Adam bowl(2, AdamConfig{1e-2});
  Vector x(2);
  x << 1.5, -0.5;
  const Vector target = (Vector(2) << 0.3, 0.7).finished();
  for (int i = 0; i < 5000; ++i) bowl.step(x, 2.0 * (x - target), Objective::minimize);
  CHECK((x - target).norm() < 1e-4);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto train = [] {
    Rng rng(25);
    Mlp net = Mlp::glorot_uniform({2, 6, 1}, rng);
    Adam opt(net.parameter_count(), AdamConfig{1e-2});
    for (int i = 0; i < 50; ++i) {
      const Vector x = standard_normal(rng, 2);
      const Vector err = net.forward(x) - Vector::Constant(1, x.sum());
      opt.step(net.parameters(), net.backward(x, err).parameters, Objective::minimize);
    }
    return net.parameters();
  };
  CHECK(train() == train());
}

TEST_CASE("gradient check on 20 random networks") {
  Rng rng(26);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::vector<int> sizes{1 + t % 3, 3 + t % 5, 2 + t % 4};
    Mlp net = Mlp::glorot_uniform(sizes, rng);
    net.parameters() += 0.2 * standard_normal(rng, net.parameter_count());
    const Vector x = standard_normal(rng, sizes.front());
    const Vector cot = standard_normal(rng, sizes.back());
    const auto f = [&](const Vector& p) { return reference_forward(sizes, p, x).dot(cot); };
    worst = std::max(worst, oracle::max_relative_error(net.backward(x, cot).parameters,
                                                       oracle::central_gradient(f, net.parameters(), 1e-6), 1e-4));
  }
  CHECK(worst < 1e-4);
}
