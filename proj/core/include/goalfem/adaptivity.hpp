#pragma once

#include "goalfem/mesh.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace goalfem
{

struct AdaptConfig
{
  /// Target relative estimated error |E| / |Q(u^h) + E|.
  double target = 0.01;
  int max_iterations = 10;
  int max_level = 16;
  /// Exponent r of the size formula in smooth regions: sqrt(|E1_e|) ~ h^(p+1) for bilinear
  /// elements once the element area is accounted for.
  double rate = 2.0;
  /// Exponent used on elements touching `singular_point` (0 keeps `rate`).
  double singular_rate = 0.0;
  std::optional<Vec2> singular_point;
  /// Largest number of halvings applied to one element in a single iteration.
  int max_halvings = 3;
  /// Stop before solving on a mesh with more dofs than this (0: unlimited).
  std::size_t max_dofs = 0;

  void validate() const;
};

/// h_new = h (e_target / e_e)^(1 / r_e) with e_e = sqrt(|E1_e|) and
/// e_target = sqrt(target_error / N) over the N current elements. Elements with zero
/// contribution keep their size.
[[nodiscard]] std::vector<double> size_map(std::span<const double> element_E1,
                                           std::span<const double> sizes, double target_error,
                                           std::span<const double> rates);

/// Number of halvings ceil(log2(h / h_new)), zero when h_new >= h.
[[nodiscard]] int halvings(double h, double h_new);

/// Refines each element the requested number of times (children inherit regions), with the
/// one-level closure applied after every pass.
[[nodiscard]] QuadtreeMesh refine_by_halvings(const QuadtreeMesh &mesh, std::span<const int> halvings,
                                              int max_level);

/// What the adaptive loop needs from one analysis on a mesh.
struct AdaptStep
{
  std::vector<double> element_E1;
  double estimated_relative_error = 0.0;
  double corrected_qoi = 0.0; ///< Q(u^h) + E
};

struct AdaptResult
{
  std::vector<std::shared_ptr<const QuadtreeMesh>> meshes;
  std::vector<AdaptStep> steps;
  bool converged = false;
};

/// Analysis hook: solve, recover and estimate on one mesh.
using AdaptAnalysis = std::function<AdaptStep(std::shared_ptr<const QuadtreeMesh>)>;

/// Solve-estimate-refine until the estimated relative error meets the target, the iteration
/// limit is reached, or the next mesh exceeds the dof budget. The result is partial
/// (converged == false) in the last two cases.
[[nodiscard]] AdaptResult adapt_loop(std::shared_ptr<const QuadtreeMesh> initial,
                                     const AdaptAnalysis &analyse, const AdaptConfig &config);

/// Per-element rates from the config.
[[nodiscard]] std::vector<double> element_rates(const QuadtreeMesh &mesh,
                                                const AdaptConfig &config);

} // namespace goalfem
