#include "goalfem/benchmark.hpp"

#include <benchmark/benchmark.h>

using namespace goalfem;

namespace
{

std::shared_ptr<const QuadtreeMesh> cylinder_mesh(int refinements)
{
  return make_case(CaseId::cyl_1a_mean_un_Gamma_o, refinements).initial_mesh;
}

void BM_AssembleAndSolve(benchmark::State &state)
{
  const auto bc = make_case(CaseId::cyl_1a_mean_un_Gamma_o, static_cast<int>(state.range(0)));
  for (auto _ : state)
  {
    const FEField u = solve_problem(bc.initial_mesh, bc.material, bc.loads, bc.dirichlet);
    benchmark::DoNotOptimize(u.nodal().data());
  }
  state.counters["dof"] = static_cast<double>(2 * bc.initial_mesh->num_vertex_nodes());
}
BENCHMARK(BM_AssembleAndSolve)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_Recovery(benchmark::State &state)
{
  const auto bc = make_case(CaseId::cyl_1a_mean_un_Gamma_o, static_cast<int>(state.range(0)));
  const FEField u = solve_problem(bc.initial_mesh, bc.material, bc.loads, bc.dirichlet);
  const RecoveryOptions opt = state.range(1) == 0 ? RecoveryOptions{} : RecoveryOptions::plain_spr();
  for (auto _ : state)
  {
    const auto r = recover(u, bc.dirichlet, opt);
    benchmark::DoNotOptimize(&r);
  }
  state.SetLabel(state.range(1) == 0 ? "spr_cx" : "spr");
}
BENCHMARK(BM_Recovery)->ArgsProduct({{2, 3, 4}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_QoIEstimates(benchmark::State &state)
{
  const auto bc = make_case(CaseId::cyl_1a_mean_un_Gamma_o, static_cast<int>(state.range(0)));
  const FEField u = solve_problem(bc.initial_mesh, bc.material, bc.loads, bc.dirichlet);
  const DualProblem dp = dual_loads(bc.qoi, *bc.initial_mesh, bc.material, bc.dirichlet);
  const FEField z = solve_problem(bc.initial_mesh, bc.material, dp.loads, dp.dirichlet);
  const auto pr = recover(u, bc.dirichlet);
  const auto dr = recover(z, dp.dirichlet);
  for (auto _ : state)
  {
    const auto q = qoi_estimates(pr, dr);
    benchmark::DoNotOptimize(q.E1);
  }
}
BENCHMARK(BM_QoIEstimates)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

void BM_UniformRefinement(benchmark::State &state)
{
  const auto mesh = cylinder_mesh(static_cast<int>(state.range(0)));
  for (auto _ : state)
  {
    const QuadtreeMesh fine = mesh->refine_uniform();
    benchmark::DoNotOptimize(fine.num_elements());
  }
}
BENCHMARK(BM_UniformRefinement)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_LShapeAnalysis(benchmark::State &state)
{
  const auto bc = make_case(CaseId::lshape_KI, static_cast<int>(state.range(0)));
  RunConfig c;
  c.case_id = CaseId::lshape_KI;
  for (auto _ : state)
  {
    const ErrorReport r = analyse(bc, bc.initial_mesh, c);
    benchmark::DoNotOptimize(r.estimates.E1);
  }
}
BENCHMARK(BM_LShapeAnalysis)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
