// Prints the surrogate_rtm coefficient file regenerated from its seeded stream.
#include <cstdio>

#include "rtminv/forward_model.hpp"

int main() {
  const rtminv::SurrogateCoefficients c = rtminv::generate_surrogate_coefficients(42);
  std::printf("# surrogate_rtm coefficients: 9 rows of A, then 9 rows of B (3 columns each)\n");
  std::printf("# seed 42, uniform [0, 1], A column k divided by s_k, B column k by s_k^2,\n");
  std::printf("# s = (1e-2, 1e-2, 50)\n");
  for (const rtminv::Matrix* m : {&c.linear, &c.quadratic}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      std::printf("%.17g %.17g %.17g\n", (*m)(r, 0), (*m)(r, 1), (*m)(r, 2));
    }
  }
  return 0;
}
