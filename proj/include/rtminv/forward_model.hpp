#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rtminv/types.hpp"

namespace rtminv {

/// Observation noise used by every built-in model unless overridden.
inline constexpr double kDefaultNoiseVariance = 1e-7;

/// Step of the central finite-difference Jacobian fallback.
inline constexpr double kFiniteDifferenceStep = 1e-6;

/// A deterministic simulator e = f(c) + eps, eps ~ N(0, noise_variance * I).
///
/// Values are immutable after construction and cheap to copy; the evaluator
/// and Jacobian are shared between copies and must be safe to call from
/// several threads.
class ForwardModel {
 public:
  using Evaluator = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;

  /// `jacobian` may be empty, in which case central differences are used.
  /// `cause_scale` is the natural magnitude of each cause coordinate; the
  /// engines use it to standardize causes.
  ForwardModel(std::string name, int cause_dim, int effect_dim, double noise_variance,
               Evaluator evaluator, JacobianFn jacobian = {}, Vector cause_scale = {});

  const std::string& name() const { return impl_->name; }
  int cause_dim() const { return impl_->cause_dim; }
  int effect_dim() const { return impl_->effect_dim; }
  double noise_variance() const { return impl_->noise_variance; }
  const Vector& cause_scale() const { return impl_->cause_scale; }
  bool has_analytic_jacobian() const { return static_cast<bool>(impl_->jacobian); }

  /// Noiseless f(c).
  Vector eval(const Vector& c) const;

  /// J[d][k] = df_d/dc_k. Throws NumericalFailure on non-finite entries.
  Matrix jacobian(const Vector& c) const;

  /// Central-difference Jacobian regardless of whether an analytic one exists.
  Matrix finite_difference_jacobian(const Vector& c, double h = kFiniteDifferenceStep) const;

  /// f(c) plus i.i.d. Gaussian noise.
  Vector simulate(const Vector& c, Rng& rng) const;

  ForwardModel with_noise_variance(double noise_variance) const;

 private:
  struct Impl {
    std::string name;
    int cause_dim;
    int effect_dim;
    double noise_variance;
    Evaluator evaluator;
    JacobianFn jacobian;
    Vector cause_scale;
  };

  void check_cause(const Vector& c) const;

  std::shared_ptr<const Impl> impl_;
};

/// Sets every negative coordinate to zero.
Vector truncate_negative(const Vector& c);

/// f(c) = [2 c1, 2 c2].
ForwardModel make_linear2d(double noise_variance = kDefaultNoiseVariance);

/// f(c) = [c1^2, c1 c2]; every effect with e1 > 0 has two preimages +-c.
ForwardModel make_bimodal(double noise_variance = kDefaultNoiseVariance);

/// Fixed coefficients of the surrogate radiative-transfer model.
struct SurrogateCoefficients {
  Matrix linear;     // 9x3, A
  Matrix quadratic;  // 9x3, B
};

/// Column scales of the surrogate causes (two mass contents in g/cm^2 and a
/// pigment content in ug/cm^2).
Vector surrogate_cause_scale();

/// Coefficients checked into data/surrogate_rtm_coefficients.txt, compiled in.
const SurrogateCoefficients& builtin_surrogate_coefficients();

/// Parses the coefficient file format: 18 rows of 3 whitespace-separated
/// numbers, the 9 rows of A followed by the 9 rows of B. '#' starts a comment.
SurrogateCoefficients parse_surrogate_coefficients(std::string_view text);
SurrogateCoefficients load_surrogate_coefficients(const std::string& path);

/// Regenerates the raw coefficients from the seeded stream (seed 42, uniform
/// on [0,1)), scaled by column. Used to verify the checked-in data file.
SurrogateCoefficients generate_surrogate_coefficients(std::uint64_t seed = 42);

/// f(c) = A t(c) + B (t(c) .* t(c)), t = truncate_negative. 3 causes, 9 bands.
ForwardModel make_surrogate_rtm(double noise_variance = kDefaultNoiseVariance,
                                const SurrogateCoefficients& coefficients =
                                    builtin_surrogate_coefficients());

/// Registry lookup: "linear2d", "bimodal", "surrogate_rtm".
ForwardModel make_model(std::string_view name, double noise_variance = kDefaultNoiseVariance);
std::vector<std::string> model_names();

}  // namespace rtminv
