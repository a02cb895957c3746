#include "rtminv/mlp.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace rtminv {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  require(sizes_.size() >= 2, "an MLP needs at least an input and an output layer");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    require(sizes_[l] > 0 && sizes_[l + 1] > 0, "MLP layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Vector::Zero(total);
}

Mlp Mlp::glorot_uniform(std::vector<int> layer_sizes, Rng& rng) {
  Mlp net(std::move(layer_sizes));
  for (int l = 0; l < net.layer_count(); ++l) {
    auto w = net.weight(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = limit * (2.0 * uniform01(rng) - 1.0);
  }
  return net;
}

Eigen::Map<Matrix> Mlp::weight(int layer) {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Matrix> Mlp::weight(int layer) const {
  const auto l = static_cast<std::size_t>(layer);
  return {params_.data() + weight_offset(layer), sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Vector> Mlp::bias(int layer) {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::Map<const Vector> Mlp::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[static_cast<std::size_t>(layer) + 1]};
}

std::vector<ParameterBlock> Mlp::blocks() const {
  std::vector<ParameterBlock> out;
  for (int l = 0; l < layer_count(); ++l) {
    const auto i = static_cast<std::size_t>(l);
    out.push_back({"layer " + std::to_string(l) + " weights", weight_offset(l),
                   static_cast<Eigen::Index>(sizes_[i]) * sizes_[i + 1]});
    out.push_back({"layer " + std::to_string(l) + " biases", bias_offset(l), sizes_[i + 1]});
  }
  return out;
}

Vector Mlp::forward(const Vector& input) const {
  require(!sizes_.empty() && input.size() == input_dim(), "MLP input has the wrong dimension");
  Vector a = input;
  for (int l = 0; l < layer_count(); ++l) {
    Vector z = weight(l) * a + bias(l);
    a = (l + 1 < layer_count()) ? Vector(z.array().tanh()) : z;
  }
  return a;
}

Mlp::Gradient Mlp::backward(const Vector& input, const Vector& cotangent) const {
  require(!sizes_.empty() && input.size() == input_dim(), "MLP input has the wrong dimension");
  require(cotangent.size() == output_dim(), "MLP cotangent has the wrong dimension");
  // Forward pass keeping every layer's input activation.
  std::vector<Vector> acts;
  acts.reserve(static_cast<std::size_t>(layer_count()) + 1);
  acts.push_back(input);
  for (int l = 0; l < layer_count(); ++l) {
    Vector z = weight(l) * acts.back() + bias(l);
    acts.push_back((l + 1 < layer_count()) ? Vector(z.array().tanh()) : z);
  }

  Gradient g{Vector::Zero(params_.size()), Vector()};
  Vector delta = cotangent;  // d<out, u>/dz for the current layer
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    const Vector& a_in = acts[i];
    Eigen::Map<Matrix>(g.parameters.data() + weight_offset(l), sizes_[i + 1], sizes_[i]) =
        delta * a_in.transpose();
    Eigen::Map<Vector>(g.parameters.data() + bias_offset(l), sizes_[i + 1]) = delta;
    Vector upstream = weight(l).transpose() * delta;
    if (l > 0) {
      // a_in = tanh(z_prev); dtanh = 1 - a^2
      delta = upstream.array() * (1.0 - a_in.array().square());
    } else {
      g.input = std::move(upstream);
    }
  }
  return g;
}

void to_json(nlohmann::json& j, const Mlp& net) {
  j = nlohmann::json{{"layer_sizes", net.layer_sizes()},
                     {"activation", "tanh"},
                     {"parameters", to_std(net.parameters())}};
}

void from_json(const nlohmann::json& j, Mlp& net) {
  Mlp out(j.at("layer_sizes").get<std::vector<int>>());
  const auto params = j.at("parameters").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(params.size()) == out.parameter_count(),
          "MLP JSON: parameter count does not match the layer sizes");
  out.parameters() = from_std(params);
  net = std::move(out);
}

Adam::Adam(Eigen::Index parameter_count, AdamConfig cfg, std::vector<ParameterBlock> blocks)
    : cfg_(cfg),
      blocks_(std::move(blocks)),
      m_(Vector::Zero(parameter_count)),
      v_(Vector::Zero(parameter_count)) {
  require(cfg_.learning_rate > 0.0, "ADAM learning rate must be positive");
  require(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0,
          "ADAM betas must lie in [0, 1)");
}

void Adam::step(Vector& params, const Vector& grads, Objective sense) {
  require(params.size() == m_.size() && grads.size() == m_.size(),
          "ADAM: parameter/gradient shape mismatch");
  if (!grads.allFinite()) {
    std::string where = "parameters";
    for (const auto& b : blocks_) {
      if (!grads.segment(b.offset, b.size).allFinite()) {
        where = b.name;
        break;
      }
    }
    throw NumericalFailure("ADAM: non-finite gradient in " + where);
  }
  ++steps_;
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grads;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  const double direction = sense == Objective::maximize ? 1.0 : -1.0;
  params.array() += direction * cfg_.learning_rate * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + cfg_.epsilon);
}

}  // namespace rtminv
