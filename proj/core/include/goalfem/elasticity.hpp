#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace goalfem
{

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Library-wide error type. Every contract violation detected at run time is reported
/// through this exception (or a subclass), carrying a human-readable reason.
class Error : public std::runtime_error
{
public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

/// Symmetric 2D stress in Voigt order (xx, yy, xy).
struct VoigtStress
{
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  VoigtStress() = default;
  VoigtStress(double sxx, double syy, double sxy) : xx(sxx), yy(syy), xy(sxy) {}
  explicit VoigtStress(const Vec3 &v) : xx(v[0]), yy(v[1]), xy(v[2]) {}

  [[nodiscard]] Vec3 vec() const { return {xx, yy, xy}; }
};

/// Symmetric 2D strain in Voigt order (xx, yy, gamma_xy) with engineering shear,
/// so that stress.vec().dot(strain.vec()) is the energy density pairing.
struct VoigtStrain
{
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  VoigtStrain() = default;
  VoigtStrain(double exx, double eyy, double gxy) : xx(exx), yy(eyy), xy(gxy) {}
  explicit VoigtStrain(const Vec3 &v) : xx(v[0]), yy(v[1]), xy(v[2]) {}

  [[nodiscard]] Vec3 vec() const { return {xx, yy, xy}; }
};

enum class PlaneMode
{
  plane_strain,
  plane_stress
};

/// Linear isotropic material. Construction validates E > 0 and 0 <= nu < 0.5.
class MaterialModel
{
public:
  MaterialModel(double youngs_modulus, double poisson_ratio,
                PlaneMode mode = PlaneMode::plane_strain);

  [[nodiscard]] double youngs_modulus() const { return E_; }
  [[nodiscard]] double poisson_ratio() const { return nu_; }
  [[nodiscard]] PlaneMode mode() const { return mode_; }
  [[nodiscard]] double shear_modulus() const { return E_ / (2.0 * (1.0 + nu_)); }
  /// Kolosov constant: 3 - 4 nu (plane strain) or (3 - nu) / (1 + nu) (plane stress).
  [[nodiscard]] double kolosov() const;

  /// Coefficients of the stress-form compatibility equation.
  [[nodiscard]] double compat_k() const;
  [[nodiscard]] double compat_q() const;

  [[nodiscard]] const Mat3 &D() const { return D_; }
  [[nodiscard]] const Mat3 &Dinv() const { return Dinv_; }

private:
  double E_;
  double nu_;
  PlaneMode mode_;
  Mat3 D_;
  Mat3 Dinv_;
};

/// Unit outward normal; construction normalizes and rejects the zero vector.
class UnitNormal
{
public:
  UnitNormal(double nx, double ny);
  explicit UnitNormal(const Vec2 &n) : UnitNormal(n.x(), n.y()) {}

  [[nodiscard]] double nx() const { return n_.x(); }
  [[nodiscard]] double ny() const { return n_.y(); }
  [[nodiscard]] const Vec2 &vec() const { return n_; }

  /// Projection operator G = [[nx, 0, ny], [0, ny, nx]].
  [[nodiscard]] Eigen::Matrix<double, 2, 3> G() const;

private:
  Vec2 n_;
};

/// First derivatives of a stress field at a point, one Voigt vector per direction.
struct StressGradient
{
  Vec3 d_dx = Vec3::Zero();
  Vec3 d_dy = Vec3::Zero();
};

[[nodiscard]] Mat3 elasticity_matrix(const MaterialModel &mat);

/// sigma = D (strain - eps0) + sig0.
[[nodiscard]] VoigtStress stress_from_strain(const MaterialModel &mat, const VoigtStrain &strain,
                                             const VoigtStrain &eps0 = {},
                                             const VoigtStress &sig0 = {});

/// strain = D^-1 (sigma - sig0) + eps0.
[[nodiscard]] VoigtStrain strain_from_stress(const MaterialModel &mat, const VoigtStress &stress,
                                             const VoigtStrain &eps0 = {},
                                             const VoigtStress &sig0 = {});

[[nodiscard]] Vec2 traction_projection(const VoigtStress &sigma, const UnitNormal &n);

/// Residual of L^T sigma + b at a point: (dsxx/dx + dsxy/dy + bx, dsxy/dx + dsyy/dy + by).
[[nodiscard]] Vec2 equilibrium_residual(const StressGradient &grad, const Vec2 &body_force);

/// Energy density pairing s1^T D^-1 s2.
[[nodiscard]] inline double energy_pairing(const MaterialModel &mat, const Vec3 &s1, const Vec3 &s2)
{
  return s1.dot(mat.Dinv() * s2);
}

} // namespace goalfem
