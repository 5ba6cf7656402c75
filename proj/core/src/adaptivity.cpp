#include "goalfem/adaptivity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace goalfem
{

void AdaptConfig::validate() const
{
  if (!(target > 0.0))
  {
    throw Error("AdaptConfig: target must be positive");
  }
  if (max_iterations < 1)
  {
    throw Error("AdaptConfig: max_iterations must be at least 1");
  }
  if (max_level < 0 || max_level > QuadtreeMesh::max_level)
  {
    throw Error("AdaptConfig: max_level out of range");
  }
  if (!(rate > 0.0) || singular_rate < 0.0)
  {
    throw Error("AdaptConfig: rates must be positive");
  }
  if (max_halvings < 1)
  {
    throw Error("AdaptConfig: max_halvings must be at least 1");
  }
}

std::vector<double> size_map(std::span<const double> element_E1, std::span<const double> sizes,
                             double target_error, std::span<const double> rates)
{
  if (element_E1.size() != sizes.size() || rates.size() != sizes.size())
  {
    throw Error("size_map: input sizes differ");
  }
  if (!(target_error > 0.0))
  {
    throw Error("size_map: target error must be positive");
  }
  const double n = static_cast<double>(sizes.size());
  const double e_target = std::sqrt(target_error / n);
  std::vector<double> out(sizes.begin(), sizes.end());
  for (std::size_t e = 0; e < sizes.size(); ++e)
  {
    if (!std::isfinite(element_E1[e]))
    {
      throw Error("size_map: non-finite contribution");
    }
    const double e_el = std::sqrt(std::abs(element_E1[e]));
    if (e_el == 0.0)
    {
      continue;
    }
    out[e] = sizes[e] * std::pow(e_target / e_el, 1.0 / rates[e]);
  }
  return out;
}

int halvings(double h, double h_new)
{
  if (!(h_new < h))
  {
    return 0;
  }
  return static_cast<int>(std::ceil(std::log2(h / h_new) - 1e-12));
}

QuadtreeMesh refine_by_halvings(const QuadtreeMesh &mesh, std::span<const int> counts,
                                int max_level)
{
  if (counts.size() != mesh.num_elements())
  {
    throw Error("refine_by_halvings: one count per element expected");
  }
  using Key = std::tuple<int, std::int64_t, std::int64_t>;
  std::map<Key, int> wanted;
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    const auto &el = mesh.element(e);
    const int level = std::min(el.level + std::max(counts[e], 0), max_level);
    if (level > el.level)
    {
      wanted[{el.level, el.i, el.j}] = level;
    }
  }
  QuadtreeMesh current = mesh;
  while (true)
  {
    std::vector<ElementId> marked;
    for (ElementId e = 0; e < static_cast<ElementId>(current.num_elements()); ++e)
    {
      const auto &el = current.element(e);
      for (int l = el.level; l >= 0; --l)
      {
        const int shift = el.level - l;
        auto it = wanted.find({l, el.i >> shift, el.j >> shift});
        if (it != wanted.end())
        {
          if (el.level < it->second)
          {
            marked.push_back(e);
          }
          break;
        }
      }
    }
    if (marked.empty())
    {
      return current;
    }
    current = current.refine(marked);
  }
}

std::vector<double> element_rates(const QuadtreeMesh &mesh, const AdaptConfig &config)
{
  std::vector<double> rates(mesh.num_elements(), config.rate);
  if (!config.singular_point || config.singular_rate <= 0.0)
  {
    return rates;
  }
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    const double h = mesh.element_size(e);
    for (NodeId n : mesh.element(e).nodes)
    {
      if ((mesh.node(n) - *config.singular_point).norm() <= 1e-9 * h)
      {
        rates[e] = config.singular_rate;
        break;
      }
    }
  }
  return rates;
}

AdaptResult adapt_loop(std::shared_ptr<const QuadtreeMesh> mesh, const AdaptAnalysis &analyse,
                       const AdaptConfig &config)
{
  config.validate();
  if (!mesh)
  {
    throw Error("adapt_loop: null mesh");
  }
  AdaptResult result;
  for (int it = 0; it < config.max_iterations; ++it)
  {
    result.meshes.push_back(mesh);
    result.steps.push_back(analyse(mesh));
    const AdaptStep &step = result.steps.back();
    if (step.estimated_relative_error <= config.target)
    {
      result.converged = true;
      return result;
    }
    if (it + 1 == config.max_iterations)
    {
      break;
    }
    std::vector<double> sizes(mesh->num_elements());
    for (ElementId e = 0; e < static_cast<ElementId>(sizes.size()); ++e)
    {
      sizes[e] = mesh->element_size(e);
    }
    const double target_error = config.target * std::abs(step.corrected_qoi);
    if (!(target_error > 0.0))
    {
      break;
    }
    const auto rates = element_rates(*mesh, config);
    const auto h_new = size_map(step.element_E1, sizes, target_error, rates);
    std::vector<int> counts(sizes.size());
    for (std::size_t e = 0; e < sizes.size(); ++e)
    {
      counts[e] = std::min(halvings(sizes[e], h_new[e]), config.max_halvings);
    }
    auto next = std::make_shared<const QuadtreeMesh>(
      refine_by_halvings(*mesh, counts, config.max_level));
    if (next->num_elements() == mesh->num_elements())
    {
      break;
    }
    if (config.max_dofs > 0 && 2 * next->num_vertex_nodes() > config.max_dofs)
    {
      break;
    }
    mesh = std::move(next);
  }
  return result;
}

} // namespace goalfem
