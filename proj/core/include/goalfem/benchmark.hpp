#pragma once

#include "goalfem/adaptivity.hpp"
#include "goalfem/estimators.hpp"
#include "goalfem/exact.hpp"
#include "goalfem/qoi.hpp"
#include "goalfem/recovery.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace goalfem
{

enum class CaseId
{
  cyl_1a_mean_un_Gamma_o,
  cyl_1b_mean_ux_domain,
  cyl_1c_mean_sx_domain,
  cyl_2_mean_tn_dirichlet,
  lshape_KI,
  lshape_KII
};

[[nodiscard]] std::string to_string(CaseId id);
/// Throws on unknown names.
[[nodiscard]] CaseId parse_case(const std::string &name);
[[nodiscard]] const std::vector<CaseId> &all_cases();

struct CylinderData
{
  double a = 5.0;
  double b = 20.0;
  double P = 1.0;
  double E = 1000.0;
  double nu = 0.3;
};

/// Primal problem, QoI and closed-form fields of one benchmark.
struct BenchmarkCase
{
  CaseId id = CaseId::cyl_1a_mean_un_Gamma_o;
  MaterialModel material{1000.0, 0.3, PlaneMode::plane_strain};
  std::shared_ptr<const QuadtreeMesh> initial_mesh;
  LoadSet loads;
  DirichletSet dirichlet;
  QuantityOfInterest qoi;
  double exact_qoi = 0.0;
  std::function<Vec2(const Vec2 &)> exact_displacement;
  std::function<Vec3(const Vec2 &)> exact_stress;
  /// Empty when the dual solution has no closed form.
  std::function<Vec3(const Vec2 &)> exact_dual_stress;
  std::optional<CornerConfig> corner;
};

/// The cylinder quarter (a = 5, b = 20) with Omega_I = parameter cells [1/4, 3/4]^2 of the
/// 4 x 4 root grid, or the unit L-shape with a 4 x 4 root grid. `initial_refinement` uniform
/// refinements are applied to the root mesh.
[[nodiscard]] BenchmarkCase make_case(CaseId id, int initial_refinement = 0);

/// Lame solution of the cylinder under internal pressure.
[[nodiscard]] LameSolution cylinder_solution(const MaterialModel &material,
                                             const CylinderData &data = {});

enum class RefineMode
{
  uniform,
  adaptive
};

struct RunConfig
{
  CaseId case_id = CaseId::cyl_1a_mean_un_Gamma_o;
  RecoveryMode recovery = RecoveryMode::spr_cx;
  RefineMode refine = RefineMode::adaptive;
  AdaptConfig adapt;
  int initial_refinement = 0;
  int degree = 1;
  /// Radius of the singular split around the corner (L-shape only).
  double split_radius = 0.5;
  /// Extraction annulus for the dual singular amplitudes.
  ExtractionDomain dual_extraction{0.3, 0.5};
  int estimator_order = 4;
  /// Output directory; nothing is written when empty.
  std::filesystem::path out;

  void validate() const;
};

/// Everything measured on one mesh.
struct ErrorReport
{
  std::size_t dof = 0;
  std::size_t elements = 0;
  QoIEstimates estimates;
  double q_fe = 0.0;
  /// Exact value of the QoI functional used on this mesh.
  double q_exact = 0.0;
  std::optional<double> exact_error;
  Effectivities eff;
  std::optional<LocalEffectivityStats> local;
  double zz_primal = 0.0;
  double zz_dual = 0.0;
  std::optional<double> exact_energy_error;
};

/// Solve primal and dual, recover both, estimate and compare with the exact solution.
[[nodiscard]] ErrorReport analyse(const BenchmarkCase &bc, std::shared_ptr<const QuadtreeMesh> mesh,
                                  const RunConfig &config);

/// E1 with the exact primal and dual stresses in place of the recovered ones, next to Q(e).
struct ExactPairing
{
  double E1 = 0.0;
  double exact_error = 0.0;
};

/// Throws when the case has no closed-form dual stress.
[[nodiscard]] ExactPairing exact_pairing(const BenchmarkCase &bc,
                                         std::shared_ptr<const QuadtreeMesh> mesh, int order = 8);

struct RunReport
{
  RunConfig config;
  std::vector<ErrorReport> rows;
  std::vector<std::shared_ptr<const QuadtreeMesh>> meshes;
  bool converged = false;
};

[[nodiscard]] RunReport run(const RunConfig &config);

/// Report file stem: <case>_<recovery>_<refine>.
[[nodiscard]] std::string report_stem(const RunConfig &config);
/// CSV with columns dof,Qees,Qe,theta,thetaQoI,etaes,eta,E2,E3,E4,meanD,sigD.
void write_csv(std::ostream &os, const RunReport &report);
void write_summary(std::ostream &os, const RunReport &report);
/// CSV, summary and two-column plot files (dof vs theta, eta, etaes, meanD, sigD).
void write_report_files(const RunReport &report, const std::filesystem::path &dir);

/// Full-precision scientific formatting; "nan" for undefined values.
[[nodiscard]] std::string format_number(std::optional<double> v);

struct VerifyCheck
{
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
};

/// Residual checks of every closed-form field (equilibrium, boundary data, exact QoI values).
[[nodiscard]] std::vector<VerifyCheck> verify_exact_solutions();

/// Parses "key = value" lines (# comments) into a RunConfig; throws on unknown keys.
[[nodiscard]] RunConfig parse_config(std::istream &is, RunConfig base = {});
void apply_config_value(RunConfig &config, const std::string &key, const std::string &value);

} // namespace goalfem
