#pragma once

#include "goalfem/elasticity.hpp"
#include "goalfem/singular.hpp"

namespace goalfem
{

/// Axisymmetric solution of a hollow cylinder a <= r <= b: u_r = A r + B / r.
class LameSolution
{
public:
  /// sigma_r(a) = -p_inner, sigma_r(b) = -p_outer.
  static LameSolution pressures(const MaterialModel &mat, double a, double b, double p_inner,
                                double p_outer);
  /// u_r(a) = u_inner, sigma_r(b) = -p_outer.
  static LameSolution inner_displacement(const MaterialModel &mat, double a, double b,
                                         double u_inner, double p_outer);

  [[nodiscard]] double inner_radius() const { return a_; }
  [[nodiscard]] double outer_radius() const { return b_; }
  [[nodiscard]] double coefficient_A() const { return A_; }
  [[nodiscard]] double coefficient_B() const { return B_; }

  [[nodiscard]] double radial_displacement(double r) const;
  [[nodiscard]] double radial_stress(double r) const;
  [[nodiscard]] double hoop_stress(double r) const;

  /// Cartesian displacement; throws outside [a, b] (relative tolerance 1e-9).
  [[nodiscard]] Vec2 displacement(const Vec2 &x) const;
  /// Cartesian Voigt stress (in-plane components only); throws outside [a, b].
  [[nodiscard]] Vec3 stress(const Vec2 &x) const;

private:
  LameSolution(const MaterialModel &mat, double a, double b, double A, double B);
  void check_radius(double r) const;

  double a_ = 0.0;
  double b_ = 0.0;
  double A_ = 0.0;
  double B_ = 0.0;
  double d_sum_ = 0.0;  ///< D11 + D12
  double d_diff_ = 0.0; ///< D11 - D12
};

/// Superposition of the mode I and mode II corner fields of the L-shape.
class LShapeExact
{
public:
  LShapeExact(const MaterialModel &mat, double K_I, double K_II,
              CornerConfig corner = lshape_corner());

  [[nodiscard]] Vec2 displacement(const Vec2 &x) const;
  [[nodiscard]] Vec3 stress(const Vec2 &x) const;
  [[nodiscard]] DisplacementStress sample(const Vec2 &x) const;
  [[nodiscard]] const CornerConfig &corner() const { return corner_; }
  [[nodiscard]] double K_I() const { return K_I_; }
  [[nodiscard]] double K_II() const { return K_II_; }

private:
  CornerConfig corner_;
  double K_I_;
  double K_II_;
  CornerEigenfield mode_I_;
  CornerEigenfield mode_II_;
};

} // namespace goalfem
