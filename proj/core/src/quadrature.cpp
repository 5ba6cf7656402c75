#include "goalfem/quadrature.hpp"

#include "goalfem/elasticity.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace goalfem
{

namespace
{

GaussRule1D compute_rule(int n)
{
  GaussRule1D rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  // Newton iteration on P_n from the Chebyshev-like initial guesses.
  for (int i = 0; i < (n + 1) / 2; ++i)
  {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter)
    {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k)
      {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1)
      {
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
      {
        break;
      }
    }
    if (n == 1)
    {
      x = 0.0;
      dp = 1.0;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.points[i] = -x;
    rule.points[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n == 1)
  {
    rule.points[0] = 0.0;
    rule.weights[0] = 2.0;
  }
  return rule;
}

} // namespace

const GaussRule1D &gauss_legendre(int n)
{
  if (n < 1 || n > 64)
  {
    throw Error("gauss_legendre: number of points must lie in [1, 64]");
  }
  static std::mutex mutex;
  static std::map<int, GaussRule1D> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end())
  {
    it = cache.emplace(n, compute_rule(n)).first;
  }
  return it->second;
}

} // namespace goalfem
