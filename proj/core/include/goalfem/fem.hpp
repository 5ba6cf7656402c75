#pragma once

#include "goalfem/elasticity.hpp"
#include "goalfem/mesh.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace goalfem
{

using VectorField = std::function<Vec2(const Vec2 &)>;
using StressField = std::function<VoigtStress(const Vec2 &)>;
using StrainField = std::function<VoigtStrain(const Vec2 &)>;
/// Traction as a function of position and outward unit normal.
using TractionField = std::function<Vec2(const Vec2 &, const Vec2 &)>;

/// Mechanical loads of one (primal or dual) problem. Empty functions mean zero.
///
/// When region_bit is set, the volumetric entries (body force, initial stress, initial strain)
/// act only on elements carrying that region bit; the boundary between the region and the rest
/// of the domain is then an internal interface for stress recovery.
struct LoadSet
{
  VectorField body_force;
  std::map<std::string, TractionField> tractions;
  StressField initial_stress;
  StrainField initial_strain;
  std::optional<int> region_bit;
  /// Gauss points per direction used to integrate volumetric loads.
  int quadrature_order = 2;

  [[nodiscard]] bool has_volume_loads() const
  {
    return static_cast<bool>(body_force) || static_cast<bool>(initial_stress) ||
           static_cast<bool>(initial_strain);
  }
  [[nodiscard]] bool has_initial_fields() const
  {
    return static_cast<bool>(initial_stress) || static_cast<bool>(initial_strain);
  }
  [[nodiscard]] bool acts_on(std::uint32_t element_regions) const
  {
    return !region_bit || (element_regions & (1u << *region_bit)) != 0;
  }

  [[nodiscard]] Vec2 body_at(const Vec2 &x, std::uint32_t regions) const;
  [[nodiscard]] Vec3 initial_stress_at(const Vec2 &x, std::uint32_t regions) const;
  [[nodiscard]] Vec3 initial_strain_at(const Vec2 &x, std::uint32_t regions) const;
  /// sigma_0 - D eps_0 at x (the quantity added back after recovery).
  [[nodiscard]] Vec3 initial_offset(const MaterialModel &mat, const Vec2 &x,
                                    std::uint32_t regions) const;
  /// Gradient of sigma_0 - D eps_0 by central differences (inside one side of any interface).
  [[nodiscard]] StressGradient initial_offset_gradient(const MaterialModel &mat, const Vec2 &x,
                                                       std::uint32_t regions,
                                                       double step) const;
};

/// Prescribed displacement on a tagged boundary piece.
///
/// In the global frame, fix_x / fix_y select components of value(x). With normal_frame set,
/// only the outward-normal component u.n = value(x).x() is prescribed; such rotated
/// constraints are imposed with Lagrange multipliers.
struct DirichletCondition
{
  std::string tag;
  VectorField value;
  bool fix_x = true;
  bool fix_y = true;
  bool normal_frame = false;
};

/// Prescribed displacement at the mesh node located at `point`.
struct PointConstraint
{
  Vec2 point;
  VectorField value;
  bool fix_x = true;
  bool fix_y = true;
};

struct DirichletSet
{
  std::vector<DirichletCondition> edges;
  std::vector<PointConstraint> points;

  [[nodiscard]] bool constrains(const std::string &tag) const;
};

/// Map from independent unknowns to all nodal dofs: u_all = T u_free + g.
struct DofMap
{
  Eigen::SparseMatrix<double> T;
  Eigen::VectorXd g;
  std::vector<int> prescribed; ///< per global dof: 1 when fixed by Dirichlet data
  int num_free = 0;
};

struct SystemMatrix
{
  std::shared_ptr<const QuadtreeMesh> mesh;
  DofMap dofs;
  Eigen::SparseMatrix<double> K_full; ///< unconstrained stiffness over all nodal dofs
  Eigen::VectorXd f_full;             ///< unconstrained load vector over all nodal dofs
  Eigen::SparseMatrix<double> K;      ///< reduced (and bordered with multiplier rows)
  Eigen::VectorXd rhs;
  int num_multipliers = 0;
};

struct AssemblyOptions
{
  /// Gauss points per direction for the stiffness; 0 selects 2 on affine geometry and 4 on
  /// curved (polar-mapped) elements.
  int stiffness_order = 0;
  int traction_order = 4;
};

class FEField;

[[nodiscard]] SystemMatrix assemble(std::shared_ptr<const QuadtreeMesh> mesh,
                                    const MaterialModel &material, const LoadSet &loads,
                                    const DirichletSet &dirichlet,
                                    const AssemblyOptions &options = {});

[[nodiscard]] FEField solve(const SystemMatrix &system, const MaterialModel &material,
                            const LoadSet &loads);

/// Convenience: assemble then solve.
[[nodiscard]] FEField solve_problem(std::shared_ptr<const QuadtreeMesh> mesh,
                                    const MaterialModel &material, const LoadSet &loads,
                                    const DirichletSet &dirichlet,
                                    const AssemblyOptions &options = {});

/// Displacement solution of one problem with its stress evaluator.
class FEField
{
public:
  FEField(std::shared_ptr<const QuadtreeMesh> mesh, MaterialModel material, LoadSet loads,
          Eigen::VectorXd nodal_displacements);

  [[nodiscard]] const QuadtreeMesh &mesh() const { return *mesh_; }
  [[nodiscard]] std::shared_ptr<const QuadtreeMesh> mesh_ptr() const { return mesh_; }
  [[nodiscard]] const MaterialModel &material() const { return material_; }
  [[nodiscard]] const LoadSet &loads() const { return loads_; }
  /// Two entries per node (x, y), hanging nodes included and consistent with constraints.
  [[nodiscard]] const Eigen::VectorXd &nodal() const { return u_; }

  [[nodiscard]] Vec2 displacement(ElementId e, const Vec2 &ref) const;
  [[nodiscard]] VoigtStrain strain(ElementId e, const Vec2 &ref) const;
  [[nodiscard]] VoigtStrain strain(ElementId e, const ShapeValues &sv) const;
  /// Stress without the initial stress / strain terms: D eps(u^h).
  [[nodiscard]] Vec3 elastic_stress(ElementId e, const ShapeValues &sv) const;

  /// Number of independent displacement dofs (two per non-hanging node).
  [[nodiscard]] std::size_t dof_count() const { return 2 * mesh_->num_vertex_nodes(); }

  void write_text(std::ostream &os) const;

private:
  std::shared_ptr<const QuadtreeMesh> mesh_;
  MaterialModel material_;
  LoadSet loads_;
  Eigen::VectorXd u_;
};

/// Finite element stress D (eps(u^h) - eps_0) + sigma_0 at reference point `ref` of `e`.
[[nodiscard]] VoigtStress fe_stress(const FEField &field, ElementId e, const Vec2 &ref);

/// Element-aware stress sampler: (element, shape data at the point) -> Voigt stress.
using ElementStressSampler = std::function<Vec3(ElementId, const ShapeValues &)>;

/// Integral of s1^T D^-1 s2 over the elements of `region` (all elements when empty).
[[nodiscard]] double energy_inner_product(const QuadtreeMesh &mesh, const MaterialModel &mat,
                                          const ElementStressSampler &s1,
                                          const ElementStressSampler &s2, int order = 4,
                                          std::span<const ElementId> region = {});

/// Internal force minus external load over all nodal dofs: K_full u - f_full. Entries at
/// Dirichlet dofs are the support reactions.
[[nodiscard]] Eigen::VectorXd nodal_residual(const SystemMatrix &system, const FEField &field);

/// Element stiffness (8x8, dof order x0 y0 x1 y1 ...).
[[nodiscard]] Eigen::Matrix<double, 8, 8> element_stiffness(const QuadtreeMesh &mesh,
                                                            ElementId e,
                                                            const MaterialModel &mat, int order);

/// Element load vector from volumetric loads (body force, initial stress / strain).
[[nodiscard]] Eigen::Matrix<double, 8, 1> element_volume_load(const QuadtreeMesh &mesh,
                                                              ElementId e,
                                                              const MaterialModel &mat,
                                                              const LoadSet &loads);

/// Strain-displacement matrix B (3x8) from shape data.
[[nodiscard]] Eigen::Matrix<double, 3, 8> strain_matrix(const ShapeValues &sv);

[[nodiscard]] int default_stiffness_order(const QuadtreeMesh &mesh);

} // namespace goalfem
