#include "summint/rng.hpp"

#include <cmath>

namespace summint {

std::uint64_t Rng::uniform_int(std::uint64_t bound) {
  // Rejection below the largest multiple of bound; unbiased and
  // engine-order deterministic.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  for (;;) {
    std::uint64_t x = eng_();
    if (x < limit) return x % bound;
  }
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  for (;;) {
    double u = 2.0 * uniform() - 1.0;
    double v = 2.0 * uniform() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      double m = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * m;
      have_spare_ = true;
      return u * m;
    }
  }
}

}  // namespace summint
