#include "goalfem/elasticity.hpp"

#include <cmath>

namespace goalfem
{

MaterialModel::MaterialModel(double youngs_modulus, double poisson_ratio, PlaneMode mode)
  : E_(youngs_modulus), nu_(poisson_ratio), mode_(mode)
{
  if (!(E_ > 0.0) || !std::isfinite(E_))
  {
    throw Error("MaterialModel: Young's modulus must be positive and finite");
  }
  if (!(nu_ >= 0.0) || !(nu_ < 0.5))
  {
    throw Error("MaterialModel: Poisson ratio must satisfy 0 <= nu < 0.5 (incompressible "
                "limit rejected)");
  }
  D_ = elasticity_matrix(*this);
  Dinv_ = D_.inverse();
}

double MaterialModel::kolosov() const
{
  return mode_ == PlaneMode::plane_strain ? 3.0 - 4.0 * nu_ : (3.0 - nu_) / (1.0 + nu_);
}

double MaterialModel::compat_k() const
{
  return mode_ == PlaneMode::plane_strain ? (1.0 - nu_) * (1.0 - nu_) : 1.0;
}

double MaterialModel::compat_q() const
{
  return mode_ == PlaneMode::plane_strain ? 1.0 + nu_ : 1.0;
}

Mat3 elasticity_matrix(const MaterialModel &mat)
{
  const double E = mat.youngs_modulus();
  const double nu = mat.poisson_ratio();
  Mat3 D = Mat3::Zero();
  if (mat.mode() == PlaneMode::plane_strain)
  {
    const double f = E / ((1.0 + nu) * (1.0 - 2.0 * nu));
    D(0, 0) = D(1, 1) = f * (1.0 - nu);
    D(0, 1) = D(1, 0) = f * nu;
    D(2, 2) = f * (1.0 - 2.0 * nu) / 2.0;
  }
  else
  {
    const double f = E / (1.0 - nu * nu);
    D(0, 0) = D(1, 1) = f;
    D(0, 1) = D(1, 0) = f * nu;
    D(2, 2) = f * (1.0 - nu) / 2.0;
  }
  return D;
}

VoigtStress stress_from_strain(const MaterialModel &mat, const VoigtStrain &strain,
                               const VoigtStrain &eps0, const VoigtStress &sig0)
{
  return VoigtStress(mat.D() * (strain.vec() - eps0.vec()) + sig0.vec());
}

VoigtStrain strain_from_stress(const MaterialModel &mat, const VoigtStress &stress,
                               const VoigtStrain &eps0, const VoigtStress &sig0)
{
  return VoigtStrain(mat.Dinv() * (stress.vec() - sig0.vec()) + eps0.vec());
}

UnitNormal::UnitNormal(double nx, double ny)
{
  const double len = std::hypot(nx, ny);
  if (!(len > 0.0) || !std::isfinite(len))
  {
    throw Error("UnitNormal: zero or non-finite direction");
  }
  n_ = Vec2(nx / len, ny / len);
}

Eigen::Matrix<double, 2, 3> UnitNormal::G() const
{
  Eigen::Matrix<double, 2, 3> g;
  g << n_.x(), 0.0, n_.y(), 0.0, n_.y(), n_.x();
  return g;
}

Vec2 traction_projection(const VoigtStress &sigma, const UnitNormal &n)
{
  return {n.nx() * sigma.xx + n.ny() * sigma.xy, n.ny() * sigma.yy + n.nx() * sigma.xy};
}

Vec2 equilibrium_residual(const StressGradient &grad, const Vec2 &body_force)
{
  return {grad.d_dx[0] + grad.d_dy[2] + body_force.x(),
          grad.d_dx[2] + grad.d_dy[1] + body_force.y()};
}

} // namespace goalfem
