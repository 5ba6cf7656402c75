#include "goalfem/estimators.hpp"

#include <cmath>
#include <limits>

namespace goalfem
{

double zz_energy_estimate(const RecoveredField &recovered, int order)
{
  const auto err = recovered.error_sampler();
  double total = 0.0;
  for (double v : element_pairings(recovered.mesh(), recovered.fe().material(), err, err, order))
  {
    total += v;
  }
  return std::sqrt(std::max(total, 0.0));
}

std::vector<double> element_pairings(const QuadtreeMesh &mesh, const MaterialModel &material,
                                     const ElementStressSampler &s1,
                                     const ElementStressSampler &s2, int order)
{
  std::vector<double> out(mesh.num_elements(), 0.0);
  const Mat3 &Dinv = material.Dinv();
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    double local = 0.0;
    for (const auto &sv : mesh.element_shape_quadrature(e, order))
    {
      local += sv.weight * s1(e, sv).dot(Dinv * s2(e, sv));
    }
    out[e] = local;
  }
  return out;
}

QoIEstimates qoi_estimates(const QuadtreeMesh &mesh, const MaterialModel &material,
                           const ElementStressSampler &primal_error,
                           const ElementStressSampler &dual_error, int order)
{
  QoIEstimates q;
  const auto ne = mesh.num_elements();
  q.element_E1.assign(ne, 0.0);
  q.primal_energy.assign(ne, 0.0);
  q.dual_energy.assign(ne, 0.0);
  const Mat3 &Dinv = material.Dinv();
  for (ElementId e = 0; e < static_cast<ElementId>(ne); ++e)
  {
    double pd = 0.0;
    double pp = 0.0;
    double dd = 0.0;
    for (const auto &sv : mesh.element_shape_quadrature(e, order))
    {
      const Vec3 a = primal_error(e, sv);
      const Vec3 b = dual_error(e, sv);
      const Vec3 Da = Dinv * a;
      pd += sv.weight * b.dot(Da);
      pp += sv.weight * a.dot(Da);
      dd += sv.weight * b.dot(Dinv * b);
    }
    q.element_E1[e] = pd;
    q.primal_energy[e] = pp;
    q.dual_energy[e] = dd;
  }
  double P = 0.0;
  double Dsum = 0.0;
  for (std::size_t e = 0; e < ne; ++e)
  {
    q.E1 += q.element_E1[e];
    q.E2 += std::abs(q.element_E1[e]);
    q.E3 += std::sqrt(std::max(q.primal_energy[e], 0.0) * std::max(q.dual_energy[e], 0.0));
    P += q.primal_energy[e];
    Dsum += q.dual_energy[e];
  }
  q.primal_energy_norm = std::sqrt(std::max(P, 0.0));
  q.dual_energy_norm = std::sqrt(std::max(Dsum, 0.0));
  q.E4 = q.primal_energy_norm * q.dual_energy_norm;
  return q;
}

QoIEstimates qoi_estimates(const RecoveredField &primal, const RecoveredField &dual, int order)
{
  if (&primal.mesh() != &dual.mesh() &&
      (primal.mesh().num_elements() != dual.mesh().num_elements() ||
       primal.mesh().num_nodes() != dual.mesh().num_nodes()))
  {
    throw Error("qoi_estimates: primal and dual fields live on different meshes");
  }
  return qoi_estimates(primal.mesh(), primal.fe().material(), primal.error_sampler(),
                       dual.error_sampler(), order);
}

Effectivities effectivities(double E, std::optional<double> exact_error, double q_fe,
                            std::optional<double> q_exact)
{
  Effectivities r;
  if (exact_error && *exact_error != 0.0)
  {
    r.theta = E / *exact_error;
  }
  if (q_exact && *q_exact != 0.0)
  {
    r.theta_qoi = (q_fe + E) / *q_exact;
    if (exact_error)
    {
      r.eta_exact = std::abs(*exact_error) / std::abs(*q_exact);
    }
  }
  if (q_fe + E != 0.0)
  {
    r.eta_estimated = std::abs(E) / std::abs(q_fe + E);
  }
  return r;
}

double local_effectivity(double estimate, double exact)
{
  const double theta = estimate / exact;
  return theta >= 1.0 ? theta - 1.0 : 1.0 - 1.0 / theta;
}

LocalEffectivityStats local_effectivity_stats(std::span<const double> estimates,
                                              std::span<const double> exact, double threshold)
{
  if (estimates.size() != exact.size())
  {
    throw Error("local_effectivity_stats: size mismatch");
  }
  LocalEffectivityStats s;
  s.D.assign(estimates.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  double sum_abs = 0.0;
  int n = 0;
  for (std::size_t e = 0; e < estimates.size(); ++e)
  {
    if (std::abs(exact[e]) < threshold)
    {
      ++s.excluded;
      continue;
    }
    const double d = local_effectivity(estimates[e], exact[e]);
    s.D[e] = d;
    sum += d;
    sum_abs += std::abs(d);
    ++n;
  }
  if (n == 0)
  {
    return s;
  }
  s.mean_abs = sum_abs / n;
  const double mean = sum / n;
  double var = 0.0;
  for (double d : s.D)
  {
    if (!std::isnan(d))
    {
      var += (d - mean) * (d - mean);
    }
  }
  s.std_dev = std::sqrt(var / n);
  return s;
}

} // namespace goalfem
