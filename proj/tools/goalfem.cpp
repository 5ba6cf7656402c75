#include "goalfem/benchmark.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace
{

int do_verify()
{
  int failed = 0;
  for (const auto &c : goalfem::verify_exact_solutions())
  {
    std::printf("%-4s %-48s %24s (tol %.1e)\n", c.passed ? "ok" : "FAIL", c.name.c_str(),
                goalfem::format_number(c.value).c_str(), c.tolerance);
    failed += c.passed ? 0 : 1;
  }
  std::printf("%d check(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}

int do_run(goalfem::RunConfig config)
{
  const auto report = goalfem::run(config);
  goalfem::write_summary(std::cout, report);
  if (!config.out.empty())
  {
    std::cout << "\nreport files written to " << config.out.string() << " as "
              << goalfem::report_stem(config) << "*\n";
  }
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Goal-oriented error estimation benchmarks for 2D elasticity"};
  app.require_subcommand(1);

  std::string config_file;
  std::string case_name;
  std::string recovery;
  std::string refine;
  double target = -1.0;
  int max_iter = -1;
  int max_dofs = -1;
  int initial = -1;
  double split_radius = -1.0;
  std::string out;

  auto *run = app.add_subcommand("run", "Run one benchmark sequence and write its report");
  run->add_option("--config", config_file, "File of key = value lines");
  std::vector<std::string> case_names;
  for (auto id : goalfem::all_cases())
  {
    case_names.push_back(goalfem::to_string(id));
  }
  run->add_option("--case", case_name, "Benchmark id")->check(CLI::IsMember(case_names));
  run->add_option("--recovery", recovery, "spr-cx or spr")
    ->check(CLI::IsMember({"spr-cx", "spr"}));
  run->add_option("--refine", refine, "uniform or adaptive")
    ->check(CLI::IsMember({"uniform", "adaptive"}));
  run->add_option("--target", target, "Target estimated relative error in percent")
    ->check(CLI::PositiveNumber);
  run->add_option("--max-iter", max_iter, "Maximum number of meshes")->check(CLI::PositiveNumber);
  run->add_option("--max-dofs", max_dofs, "Dof budget (0: unlimited)")
    ->check(CLI::NonNegativeNumber);
  run->add_option("--initial-refinement", initial, "Uniform refinements of the root mesh")
    ->check(CLI::NonNegativeNumber);
  run->add_option("--split-radius", split_radius, "Singular split radius (L-shape)")
    ->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "Output directory for the report files");

  auto *verify = app.add_subcommand("verify", "Check the closed-form benchmark solutions");

  CLI11_PARSE(app, argc, argv);

  try
  {
    if (verify->parsed())
    {
      return do_verify();
    }
    goalfem::RunConfig config;
    if (!config_file.empty())
    {
      std::ifstream is(config_file);
      if (!is)
      {
        std::cerr << "cannot open " << config_file << '\n';
        return 2;
      }
      config = goalfem::parse_config(is);
    }
    auto set = [&](const char *key, const std::string &value) {
      goalfem::apply_config_value(config, key, value);
    };
    if (!case_name.empty())
    {
      set("case", case_name);
    }
    if (!recovery.empty())
    {
      set("recovery", recovery);
    }
    if (!refine.empty())
    {
      set("refine", refine);
    }
    if (target > 0.0)
    {
      config.adapt.target = target / 100.0;
    }
    if (max_iter > 0)
    {
      config.adapt.max_iterations = max_iter;
    }
    if (max_dofs >= 0)
    {
      config.adapt.max_dofs = static_cast<std::size_t>(max_dofs);
    }
    if (initial >= 0)
    {
      config.initial_refinement = initial;
    }
    if (split_radius >= 0.0)
    {
      config.split_radius = split_radius;
    }
    if (!out.empty())
    {
      config.out = out;
    }
    config.validate();
    return do_run(config);
  }
  catch (const goalfem::Error &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
