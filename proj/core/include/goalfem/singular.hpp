#pragma once

#include "goalfem/elasticity.hpp"
#include "goalfem/fem.hpp"

#include <functional>
#include <optional>

namespace goalfem
{

enum class FractureMode
{
  I,
  II
};

/// Corner of a traction-free wedge. The local frame has its x axis on the bisector of the
/// material wedge, so the corner faces sit at phi = +-opening_angle / 2.
struct CornerConfig
{
  Vec2 apex = Vec2::Zero();
  double opening_angle = 1.5 * 3.14159265358979323846;
  /// Angle of the local x axis measured from the global x axis.
  double rotation = 0.75 * 3.14159265358979323846;

  /// Local polar coordinates (r, phi) of a global point.
  [[nodiscard]] std::pair<double, double> polar(const Vec2 &x) const;
};

/// The L-shape corner at the origin: material occupies polar angles [0, 3 pi / 2].
[[nodiscard]] CornerConfig lshape_corner();

/// Characteristic function of the wedge: sin(l w) + l sin w (mode I) or sin(l w) - l sin w.
[[nodiscard]] double characteristic_function(double omega, FractureMode mode, double lambda);

/// Smallest root of the characteristic function in (0, 1], or nullopt when the corner is not
/// singular for that mode.
[[nodiscard]] std::optional<double> corner_eigenvalue(double omega, FractureMode mode);

/// Williams eigenfield of the wedge with a given exponent, unit amplitude.
///
/// The Airy function is r^(e+1) F(phi). Stresses scale as r^(e-1) and displacements as r^e.
/// Mode I is normalized by sigma_phiphi(r=1, phi=0) = e, mode II by sigma_rphi(r=1, phi=0) = e,
/// so that sigma = K e r^(e-1) Phi(phi) with Phi_phiphi(0) = 1 (resp. Phi_rphi(0) = 1).
class CornerEigenfield
{
public:
  CornerEigenfield(CornerConfig corner, FractureMode mode, double exponent,
                   MaterialModel material);

  /// Singular field (exponent lambda) of the corner.
  static CornerEigenfield singular(const CornerConfig &corner, FractureMode mode,
                                   const MaterialModel &material);
  /// Extraction (auxiliary) field with exponent -lambda.
  static CornerEigenfield auxiliary(const CornerConfig &corner, FractureMode mode,
                                    const MaterialModel &material);

  [[nodiscard]] const CornerConfig &corner() const { return corner_; }
  [[nodiscard]] FractureMode mode() const { return mode_; }
  [[nodiscard]] double exponent() const { return exponent_; }

  /// Polar components (sigma_rr, sigma_phiphi, sigma_rphi) at local (r, phi).
  [[nodiscard]] Vec3 polar_stress(double r, double phi) const;
  /// Global Voigt stress; throws at the apex.
  [[nodiscard]] Vec3 stress(const Vec2 &x) const;
  /// Global displacement; throws at the apex.
  [[nodiscard]] Vec2 displacement(const Vec2 &x) const;

private:
  CornerConfig corner_;
  FractureMode mode_;
  double exponent_;
  MaterialModel material_;
  double A_ = 0.0; ///< coefficient of the (e+1) harmonic
  double B_ = 0.0; ///< coefficient of the (e-1) harmonic
};

struct DisplacementStress
{
  Vec2 u = Vec2::Zero();
  Vec3 sigma = Vec3::Zero();
};

using DisplacementStressSampler = std::function<DisplacementStress(const Vec2 &)>;

/// Asymptotic corner field K * (mode eigenfield) at x.
[[nodiscard]] DisplacementStress asymptotic_fields(const CornerConfig &corner, FractureMode mode,
                                                   double K, const Vec2 &x,
                                                   const MaterialModel &material);

/// Radial plateau q(r): 1 for r <= r1, 0 for r >= r2, quartic C1 transition in between.
struct ExtractionDomain
{
  double r1 = 0.6;
  double r2 = 0.8;

  [[nodiscard]] double q(double r) const;
  [[nodiscard]] double dq_dr(double r) const;
  /// Global gradient of q at x for a plateau centred at `apex`.
  [[nodiscard]] Vec2 grad_q(const Vec2 &x, const Vec2 &apex) const;
  void validate() const;
};

/// Extraction constant C such that the domain integral returns 1 on the unit eigenfield.
[[nodiscard]] double extraction_constant(const CornerConfig &corner, FractureMode mode,
                                         const MaterialModel &material,
                                         const ExtractionDomain &domain = {});

/// GSIF of an arbitrary field by the domain integral, evaluated with a polar tensor rule on
/// the extraction annulus (no mesh).
[[nodiscard]] double extract_gsif(const DisplacementStressSampler &field,
                                  const CornerConfig &corner, FractureMode mode,
                                  const MaterialModel &material,
                                  const ExtractionDomain &domain = {});

/// GSIF of a finite element field by the domain integral over the mesh elements.
[[nodiscard]] double extract_gsif(const FEField &field, const CornerConfig &corner,
                                  FractureMode mode, const ExtractionDomain &domain = {},
                                  int order = 8);

/// Initial strain and body force of the dual problem whose right-hand side is the domain
/// integral, applied on the whole mesh; volume quadrature order 8.
[[nodiscard]] LoadSet dual_gsif_loads(const CornerConfig &corner, FractureMode mode,
                                      const MaterialModel &material,
                                      const ExtractionDomain &domain = {});

/// Singular part K_I * (mode I) + K_II * (mode II) used to split recovered stresses near the
/// corner. Only points with r < radius are affected.
struct SingularSplit
{
  CornerConfig corner;
  double K_I = 0.0;
  double K_II = 0.0;
  double radius = 0.0;

  [[nodiscard]] bool active_at(const Vec2 &x) const;
  [[nodiscard]] Vec3 stress(const Vec2 &x, const MaterialModel &material) const;
};

/// Smooth part of the FE stress: sigma^h minus the singular stress inside the split radius.
[[nodiscard]] ElementStressSampler split_singular_smooth(const FEField &field,
                                                         const SingularSplit &split);

} // namespace goalfem
