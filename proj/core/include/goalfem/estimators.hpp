#pragma once

#include "goalfem/recovery.hpp"

#include <optional>
#include <span>
#include <vector>

namespace goalfem
{

/// sqrt of the integral of (sigma* - sigma^h)^T D^-1 (sigma* - sigma^h).
[[nodiscard]] double zz_energy_estimate(const RecoveredField &recovered, int order = 4);

/// Per-element integrals of s1^T D^-1 s2, summed in element order.
[[nodiscard]] std::vector<double> element_pairings(const QuadtreeMesh &mesh,
                                                   const MaterialModel &material,
                                                   const ElementStressSampler &s1,
                                                   const ElementStressSampler &s2,
                                                   int order = 4);

struct QoIEstimates
{
  double E1 = 0.0;
  double E2 = 0.0;
  double E3 = 0.0;
  double E4 = 0.0;
  std::vector<double> element_E1;
  std::vector<double> primal_energy; ///< squared, per element
  std::vector<double> dual_energy;   ///< squared, per element
  double primal_energy_norm = 0.0;
  double dual_energy_norm = 0.0;
};

/// E1 = int e*^T D^-1 e~* with its element contributions, and the bounds E2, E3, E4.
[[nodiscard]] QoIEstimates qoi_estimates(const RecoveredField &primal,
                                         const RecoveredField &dual, int order = 4);

/// Same quantities from arbitrary primal and dual error samplers.
[[nodiscard]] QoIEstimates qoi_estimates(const QuadtreeMesh &mesh, const MaterialModel &material,
                                         const ElementStressSampler &primal_error,
                                         const ElementStressSampler &dual_error, int order = 4);

/// Undefined entries (division by zero) are left empty.
struct Effectivities
{
  std::optional<double> theta;
  std::optional<double> theta_qoi;
  std::optional<double> eta_exact;
  std::optional<double> eta_estimated;
};

[[nodiscard]] Effectivities effectivities(double E, std::optional<double> exact_error,
                                          double q_fe, std::optional<double> q_exact);

struct LocalEffectivityStats
{
  std::vector<double> D; ///< per element; NaN for excluded elements
  double mean_abs = 0.0;
  double std_dev = 0.0;
  int excluded = 0;
};

/// D = theta_e - 1 when theta_e >= 1, else 1 - 1 / theta_e, with theta_e = E_e / Q(e_e).
[[nodiscard]] double local_effectivity(double estimate, double exact);

[[nodiscard]] LocalEffectivityStats local_effectivity_stats(std::span<const double> estimates,
                                                            std::span<const double> exact,
                                                            double threshold = 1e-14);

} // namespace goalfem
