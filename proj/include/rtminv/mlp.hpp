#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtminv/types.hpp"

namespace rtminv {

/// Contiguous slice of a flat parameter vector, named for diagnostics.
struct ParameterBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector. Layer l stores its weight matrix
/// (out x in, column-major) followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(std::vector<int> layer_sizes);

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Mlp glorot_uniform(std::vector<int> layer_sizes, Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Vector> bias(int layer);
  Eigen::Map<const Vector> bias(int layer) const;

  std::vector<ParameterBlock> blocks() const;

  Vector forward(const Vector& input) const;

  struct Gradient {
    Vector parameters;
    Vector input;
  };

  /// Exact gradients of <forward(input), cotangent>.
  Gradient backward(const Vector& input, const Vector& cotangent) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  Eigen::Index bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<Eigen::Index>(sizes_[static_cast<std::size_t>(layer)]) *
                                      sizes_[static_cast<std::size_t>(layer) + 1];
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

void to_json(nlohmann::json& j, const Mlp& net);
void from_json(const nlohmann::json& j, Mlp& net);

enum class Objective { maximize, minimize };

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// ADAM with bias correction. Moment accumulators match the parameter shape.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index parameter_count, AdamConfig cfg, std::vector<ParameterBlock> blocks = {});

  /// One update in place. Throws NumericalFailure naming the parameter block
  /// that holds a non-finite gradient; parameters are left untouched then.
  void step(Vector& params, const Vector& grads, Objective sense = Objective::maximize);

  long step_count() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<ParameterBlock> blocks_;
  Vector m_;
  Vector v_;
  long steps_ = 0;
};

}  // namespace rtminv
