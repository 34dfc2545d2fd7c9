#pragma once

#include <array>
#include <cstddef>

namespace rl {

/// Polynomial of degree <= 4, coefficients in ascending powers of z.
using Poly4 = std::array<double, 5>;

inline double poly_eval(const Poly4& c, double z) {
  double acc = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) acc = acc * z + c[k];
  return acc;
}

inline Poly4 poly_derivative(const Poly4& c) {
  Poly4 d{};
  for (std::size_t k = 1; k < c.size(); ++k) d[k - 1] = static_cast<double>(k) * c[k];
  return d;
}

/// Coefficients of p(z - shift) given the coefficients of p(u).
inline Poly4 poly_shift(const Poly4& c, double shift) {
  // binomial expansion of (z - s)^k
  static constexpr double binom[5][5] = {
      {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};
  Poly4 out{};
  for (std::size_t k = 0; k < 5; ++k) {
    double neg_pow = 1.0; // (-s)^(k-j)
    for (std::size_t j = k + 1; j-- > 0;) {
      out[j] += c[k] * binom[k][j] * neg_pow;
      neg_pow *= -shift;
    }
  }
  return out;
}

} // namespace rl
