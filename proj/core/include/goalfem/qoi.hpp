#pragma once

#include "goalfem/fem.hpp"
#include "goalfem/singular.hpp"

#include <functional>
#include <memory>
#include <string>

namespace goalfem
{

enum class QoIKind
{
  mean_displacement_domain,
  mean_displacement_boundary,
  mean_strain_domain,
  mean_stress_domain,
  mean_traction_dirichlet,
  gsif
};

[[nodiscard]] std::string to_string(QoIKind kind);

/// Linear (or affine) functional of the displacement field.
///
/// Domain kinds average over the elements carrying `region_bit`; boundary kinds over the edges
/// tagged `boundary_tag`. With `normal_frame`, vector extractors are given in the local
/// (outward normal, tangent) frame of the boundary, tangent = (-n_y, n_x). The traction of the
/// Dirichlet kind is sigma n, the force per unit length exerted on the body by the support.
struct QuantityOfInterest
{
  QoIKind kind = QoIKind::mean_displacement_domain;
  Vec3 extractor = Vec3::Zero(); ///< c_u / c_R use the first two entries
  int region_bit = 0;
  std::string boundary_tag;
  bool normal_frame = false;
  FractureMode mode = FractureMode::I;
  CornerConfig corner;
  ExtractionDomain domain;

  static QuantityOfInterest mean_displacement_domain(const Vec2 &c_u, int region_bit);
  static QuantityOfInterest mean_displacement_boundary(const Vec2 &c_u, std::string tag,
                                                       bool normal_frame);
  static QuantityOfInterest mean_strain_domain(const Vec3 &c_eps, int region_bit);
  static QuantityOfInterest mean_stress_domain(const Vec3 &c_sigma, int region_bit);
  static QuantityOfInterest mean_traction_dirichlet(const Vec2 &c_R, std::string tag,
                                                    bool normal_frame);
  static QuantityOfInterest gsif(FractureMode mode, const CornerConfig &corner,
                                 const ExtractionDomain &domain);

  [[nodiscard]] bool is_domain() const;
  [[nodiscard]] bool is_boundary() const;
  void validate() const;
};

/// Point evaluation of a field inside an element: displacement, strain (engineering shear) and
/// stress. Empty members are allowed when the QoI does not need them.
struct FieldSampler
{
  std::function<Vec2(ElementId, const ShapeValues &)> displacement;
  std::function<Vec3(ElementId, const ShapeValues &)> strain;
  ElementStressSampler stress;
};

/// FE field sampler; with include_initial false the stress is D eps(u^h).
[[nodiscard]] FieldSampler fe_sampler(const FEField &field, bool include_initial = true);
/// Sampler of closed-form fields; the strain is D^-1 sigma.
[[nodiscard]] FieldSampler exact_sampler(std::function<Vec2(const Vec2 &)> displacement,
                                         std::function<Vec3(const Vec2 &)> stress,
                                         const MaterialModel &material);

/// |Omega_I| or |Gamma_I| on the mesh (1 for the GSIF kind). Throws when empty.
[[nodiscard]] double region_measure(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                                    int order = 4);

/// Direct quadrature of the defining functional.
[[nodiscard]] double evaluate_qoi(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                                  const MaterialModel &material, const FieldSampler &field,
                                  int order = 4);

/// Linearized functional Q~(v) of an FE displacement field (initial terms dropped). For the
/// Dirichlet traction kind this is a(v, delta).
[[nodiscard]] double linearized_qoi(const QuantityOfInterest &qoi, const FEField &v,
                                    int order = 4);

/// Nodal weights delta of the Dirichlet traction kind: c_R / |Gamma_I| (rotated to the global
/// frame) on the nodes of Gamma_I, zero elsewhere. Two entries per node.
[[nodiscard]] Eigen::VectorXd traction_weights(const QuantityOfInterest &qoi,
                                               const QuadtreeMesh &mesh);

/// Q(u^h) of the Dirichlet traction kind from the nodal reactions: delta . (K u - f).
[[nodiscard]] double reaction_qoi(const QuantityOfInterest &qoi, const SystemMatrix &system,
                                  const FEField &field);

/// Integral of delta_h . (sigma n) over Gamma_I for a closed-form stress: the exact value
/// consistent with reaction_qoi on the current mesh.
[[nodiscard]] double reaction_weighted_traction(const QuantityOfInterest &qoi,
                                                const QuadtreeMesh &mesh,
                                                const ElementStressSampler &stress,
                                                int order = 8);

struct DualProblem
{
  LoadSet loads;
  DirichletSet dirichlet;
};

/// Loads and Dirichlet data of the dual problem. The dual keeps the primal Dirichlet pieces
/// with homogeneous values, except Gamma_I of the traction kind, which carries -c_R / |Gamma_I|.
[[nodiscard]] DualProblem dual_loads(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                                     const MaterialModel &material,
                                     const DirichletSet &primal_dirichlet);

/// Dual right-hand side over all nodal dofs, f~ - K g~, so that f~ . v = Q~(v) for any v
/// vanishing on the Dirichlet boundary.
[[nodiscard]] Eigen::VectorXd dual_rhs(const SystemMatrix &dual_system);

[[nodiscard]] FEField dual_solve(const QuantityOfInterest &qoi,
                                 std::shared_ptr<const QuadtreeMesh> mesh,
                                 const MaterialModel &material,
                                 const DirichletSet &primal_dirichlet,
                                 const AssemblyOptions &options = {});

} // namespace goalfem
