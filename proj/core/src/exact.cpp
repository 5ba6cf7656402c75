#include "goalfem/exact.hpp"

#include <cmath>

namespace goalfem
{

LameSolution::LameSolution(const MaterialModel &mat, double a, double b, double A, double B)
  : a_(a), b_(b), A_(A), B_(B), d_sum_(mat.D()(0, 0) + mat.D()(0, 1)),
    d_diff_(mat.D()(0, 0) - mat.D()(0, 1))
{
}

LameSolution LameSolution::pressures(const MaterialModel &mat, double a, double b,
                                     double p_inner, double p_outer)
{
  if (!(a > 0.0) || !(a < b))
  {
    throw Error("LameSolution: need 0 < a < b");
  }
  const double s = mat.D()(0, 0) + mat.D()(0, 1);
  const double d = mat.D()(0, 0) - mat.D()(0, 1);
  // sigma_r(r) = s A - d B / r^2
  Eigen::Matrix2d M;
  M << s, -d / (a * a), s, -d / (b * b);
  const Eigen::Vector2d x = M.lu().solve(Eigen::Vector2d(-p_inner, -p_outer));
  return LameSolution(mat, a, b, x[0], x[1]);
}

LameSolution LameSolution::inner_displacement(const MaterialModel &mat, double a, double b,
                                              double u_inner, double p_outer)
{
  if (!(a > 0.0) || !(a < b))
  {
    throw Error("LameSolution: need 0 < a < b");
  }
  const double s = mat.D()(0, 0) + mat.D()(0, 1);
  const double d = mat.D()(0, 0) - mat.D()(0, 1);
  Eigen::Matrix2d M;
  M << a, 1.0 / a, s, -d / (b * b);
  const Eigen::Vector2d x = M.lu().solve(Eigen::Vector2d(u_inner, -p_outer));
  return LameSolution(mat, a, b, x[0], x[1]);
}

void LameSolution::check_radius(double r) const
{
  if (r < a_ * (1.0 - 1e-9) || r > b_ * (1.0 + 1e-9))
  {
    throw Error("LameSolution: radius outside the cylinder wall");
  }
}

double LameSolution::radial_displacement(double r) const
{
  return A_ * r + B_ / r;
}

double LameSolution::radial_stress(double r) const
{
  return d_sum_ * A_ - d_diff_ * B_ / (r * r);
}

double LameSolution::hoop_stress(double r) const
{
  return d_sum_ * A_ + d_diff_ * B_ / (r * r);
}

Vec2 LameSolution::displacement(const Vec2 &x) const
{
  const double r = x.norm();
  check_radius(r);
  return radial_displacement(r) * x / r;
}

Vec3 LameSolution::stress(const Vec2 &x) const
{
  const double r = x.norm();
  check_radius(r);
  const double c = x.x() / r;
  const double s = x.y() / r;
  const double sr = radial_stress(r);
  const double sp = hoop_stress(r);
  return Vec3(sr * c * c + sp * s * s, sr * s * s + sp * c * c, (sr - sp) * s * c);
}

LShapeExact::LShapeExact(const MaterialModel &mat, double K_I, double K_II, CornerConfig corner)
  : corner_(corner), K_I_(K_I), K_II_(K_II),
    mode_I_(CornerEigenfield::singular(corner, FractureMode::I, mat)),
    mode_II_(CornerEigenfield::singular(corner, FractureMode::II, mat))
{
}

Vec2 LShapeExact::displacement(const Vec2 &x) const
{
  return K_I_ * mode_I_.displacement(x) + K_II_ * mode_II_.displacement(x);
}

Vec3 LShapeExact::stress(const Vec2 &x) const
{
  return K_I_ * mode_I_.stress(x) + K_II_ * mode_II_.stress(x);
}

DisplacementStress LShapeExact::sample(const Vec2 &x) const
{
  return {displacement(x), stress(x)};
}

} // namespace goalfem
