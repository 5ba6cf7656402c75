#pragma once

#include "goalfem/fem.hpp"
#include "goalfem/singular.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace goalfem
{

/// Complete 2D polynomial of degree 1 or 2 per stress component in patch coordinates
/// ((x - centre) / scale).
struct PatchPolynomial
{
  int degree = 1;
  Vec2 centre = Vec2::Zero();
  double scale = 1.0;
  Eigen::MatrixXd coeffs; ///< 3 x basis_size: rows xx, yy, xy
  /// Whether the singular part was subtracted before the fit (and must be added back).
  bool singular_split = false;

  [[nodiscard]] static int basis_size(int degree) { return (degree + 1) * (degree + 2) / 2; }
  [[nodiscard]] Eigen::VectorXd basis(const Vec2 &x) const;
  [[nodiscard]] Eigen::VectorXd basis_dx(const Vec2 &x) const;
  [[nodiscard]] Eigen::VectorXd basis_dy(const Vec2 &x) const;
  /// Second derivatives (xx, xy, yy) of the basis; constant for degree <= 2.
  [[nodiscard]] std::array<Eigen::VectorXd, 3> basis_second() const;

  [[nodiscard]] Vec3 value(const Vec2 &x) const;
  [[nodiscard]] StressGradient gradient(const Vec2 &x) const;
};

enum class RecoveryMode
{
  spr_cx, ///< constrained fit with side and singular splitting
  spr     ///< plain least squares
};

struct RecoveryOptions
{
  RecoveryMode mode = RecoveryMode::spr_cx;
  int degree = 1;
  bool internal_equilibrium = true;
  bool boundary_equilibrium = true;
  bool compatibility = true;
  bool interface_equilibrium = true;
  /// Singular part subtracted on patches whose vertex lies within split->radius of the corner.
  std::optional<SingularSplit> singular;
  /// Gauss points per direction for the least-squares samples.
  int sample_order = 2;

  [[nodiscard]] static RecoveryOptions plain_spr()
  {
    RecoveryOptions o;
    o.mode = RecoveryMode::spr;
    o.internal_equilibrium = false;
    o.boundary_equilibrium = false;
    o.compatibility = false;
    o.interface_equilibrium = false;
    return o;
  }
};

enum class ConstraintKind
{
  boundary,
  interface,
  internal,
  compatibility
};

/// One scalar constraint row on the stacked coefficients of both patch sides.
struct ConstraintRow
{
  ConstraintKind kind = ConstraintKind::internal;
  Eigen::VectorXd row;
  double rhs = 0.0;
  Vec2 point = Vec2::Zero();
};

struct PatchFit
{
  NodeId vertex = -1;
  /// Side 0: elements outside the loaded region (or all elements); side 1: inside.
  std::array<std::optional<PatchPolynomial>, 2> sides;
  std::vector<ConstraintRow> active_rows;
  int dropped_rows = 0;
  double kkt_residual = 0.0;
  double max_constraint_residual = 0.0;
  /// Number of least-squares samples used.
  int samples = 0;
};

/// Constrained least-squares fit on one patch.
[[nodiscard]] PatchFit fit_patch(const Patch &patch, const FEField &field,
                                 const DirichletSet &dirichlet, const RecoveryOptions &options);

/// Rows of L^T sigma + b_hat = 0 for one side at the given points. Throws when the points
/// needed to pin a linear b_hat are aligned.
[[nodiscard]] std::vector<ConstraintRow>
internal_equilibrium_rows(const PatchPolynomial &poly, std::span<const Vec2> points,
                          const std::function<Vec2(const Vec2 &)> &b_hat, int offset,
                          int total_unknowns);

/// Rows d . (G sigma) = d . t at a point, one per direction d.
[[nodiscard]] std::vector<ConstraintRow>
boundary_equilibrium_rows(const PatchPolynomial &poly, const Vec2 &point, const Vec2 &normal,
                          std::span<const Vec2> directions, const Vec2 &traction, int offset,
                          int total_unknowns);

/// Compatibility rows in terms of stresses; empty for degree 1.
[[nodiscard]] std::vector<ConstraintRow> compatibility_rows(const PatchPolynomial &poly,
                                                            std::span<const Vec2> points,
                                                            const MaterialModel &material,
                                                            int offset, int total_unknowns);

/// Recovered stress field of one FE solution.
class RecoveredField
{
public:
  RecoveredField(FEField field, std::vector<PatchFit> fits, std::vector<int> element_side,
                 RecoveryOptions options);

  [[nodiscard]] const FEField &fe() const { return field_; }
  [[nodiscard]] const QuadtreeMesh &mesh() const { return field_.mesh(); }
  [[nodiscard]] const RecoveryOptions &options() const { return options_; }
  [[nodiscard]] const std::vector<PatchFit> &fits() const { return fits_; }
  [[nodiscard]] int element_side(ElementId e) const { return element_side_[e]; }

  /// sigma* at a point of element e (sum of blended patch polynomials plus initial terms
  /// and any singular part).
  [[nodiscard]] Vec3 stress(ElementId e, const ShapeValues &sv) const;
  [[nodiscard]] Vec3 stress(ElementId e, const Vec2 &ref) const;
  /// sigma* - sigma^h.
  [[nodiscard]] Vec3 error(ElementId e, const ShapeValues &sv) const;

  [[nodiscard]] ElementStressSampler stress_sampler() const;
  [[nodiscard]] ElementStressSampler error_sampler() const;

  /// Blending-induced equilibrium defect sum_J grad N^(J) sigma^(J) at a point.
  [[nodiscard]] Vec2 blending_residual(ElementId e, const Vec2 &ref) const;

  /// Patch polynomial of a vertex for a side; throws when absent.
  [[nodiscard]] const PatchPolynomial &polynomial(NodeId vertex, int side) const;

  /// Plain-text dump: "patch vertex side degree cx cy scale split c..." per line.
  void write_text(std::ostream &os) const;

private:
  [[nodiscard]] const PatchFit &fit_of(NodeId vertex) const;

  FEField field_;
  std::vector<PatchFit> fits_;
  std::vector<int> fit_index_; ///< per node, index into fits_ or -1
  std::vector<int> element_side_;
  RecoveryOptions options_;
  std::function<Vec3(const Vec2 &)> singular_;
};

/// Runs the recovery on every vertex patch of the field's mesh.
[[nodiscard]] RecoveredField recover(const FEField &field, const DirichletSet &dirichlet,
                                     const RecoveryOptions &options = {});

} // namespace goalfem
