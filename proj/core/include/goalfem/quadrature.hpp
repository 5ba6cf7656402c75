#pragma once

#include <vector>

namespace goalfem
{

/// n-point Gauss-Legendre rule on [-1, 1].
struct GaussRule1D
{
  std::vector<double> points;
  std::vector<double> weights;
};

/// Cached rule with n points (n >= 1). Exact for polynomials of degree 2n - 1.
[[nodiscard]] const GaussRule1D &gauss_legendre(int n);

} // namespace goalfem
