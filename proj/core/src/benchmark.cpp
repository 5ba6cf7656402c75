#include "goalfem/benchmark.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace goalfem
{

namespace
{

constexpr double pi = std::numbers::pi;
constexpr int region_bit = 0;

struct CaseName
{
  CaseId id;
  const char *name;
};

constexpr std::array<CaseName, 6> case_names{{
  {CaseId::cyl_1a_mean_un_Gamma_o, "cyl_1a_mean_un_Gamma_o"},
  {CaseId::cyl_1b_mean_ux_domain, "cyl_1b_mean_ux_domain"},
  {CaseId::cyl_1c_mean_sx_domain, "cyl_1c_mean_sx_domain"},
  {CaseId::cyl_2_mean_tn_dirichlet, "cyl_2_mean_tn_dirichlet"},
  {CaseId::lshape_KI, "lshape_KI"},
  {CaseId::lshape_KII, "lshape_KII"},
}};

bool is_cylinder(CaseId id)
{
  return id != CaseId::lshape_KI && id != CaseId::lshape_KII;
}

std::shared_ptr<const QuadtreeMesh> refined(QuadtreeMesh m, int levels)
{
  for (int k = 0; k < levels; ++k)
  {
    m = m.refine_uniform();
  }
  return std::make_shared<const QuadtreeMesh>(std::move(m));
}

DirichletSet cylinder_symmetry()
{
  DirichletSet d;
  d.edges.push_back({"sym_y0", nullptr, false, true, false});
  d.edges.push_back({"sym_x0", nullptr, true, false, false});
  return d;
}

// Mean of u_x = u_r(r) cos(theta) over r1 <= r <= r2, t1 <= theta <= t2.
double mean_ux_over_sector(const LameSolution &s, double r1, double r2, double t1, double t2)
{
  const double A = s.coefficient_A();
  const double B = s.coefficient_B();
  const double radial = A * (r2 * r2 * r2 - r1 * r1 * r1) / 3.0 + B * (r2 - r1);
  const double area = 0.5 * (r2 * r2 - r1 * r1) * (t2 - t1);
  return radial * (std::sin(t2) - std::sin(t1)) / area;
}

ElementStressSampler fe_total_stress(const FEField &f)
{
  return [&f](ElementId e, const ShapeValues &sv) {
    return Vec3(f.elastic_stress(e, sv) +
                f.loads().initial_offset(f.material(), sv.x, f.mesh().element(e).regions));
  };
}

std::string fmt(double v)
{
  if (!std::isfinite(v))
  {
    return "nan";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

std::string lower(std::string s)
{
  for (auto &c : s)
  {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

std::string trim(const std::string &s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
  {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string &key, const std::string &v)
{
  try
  {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size())
    {
      throw std::invalid_argument(v);
    }
    return d;
  }
  catch (const std::exception &)
  {
    throw Error("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

int to_int(const std::string &key, const std::string &v)
{
  const double d = to_double(key, v);
  if (d != std::floor(d))
  {
    throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<int>(d);
}

} // namespace

std::string to_string(CaseId id)
{
  for (const auto &c : case_names)
  {
    if (c.id == id)
    {
      return c.name;
    }
  }
  return "unknown";
}

CaseId parse_case(const std::string &name)
{
  for (const auto &c : case_names)
  {
    if (name == c.name)
    {
      return c.id;
    }
  }
  throw Error("unknown benchmark case '" + name + "'");
}

const std::vector<CaseId> &all_cases()
{
  static const std::vector<CaseId> ids = [] {
    std::vector<CaseId> v;
    for (const auto &c : case_names)
    {
      v.push_back(c.id);
    }
    return v;
  }();
  return ids;
}

LameSolution cylinder_solution(const MaterialModel &material, const CylinderData &data)
{
  return LameSolution::pressures(material, data.a, data.b, data.P, 0.0);
}

BenchmarkCase make_case(CaseId id, int initial_refinement)
{
  if (initial_refinement < 0)
  {
    throw Error("make_case: negative initial refinement");
  }
  BenchmarkCase bc;
  bc.id = id;
  const MaterialModel &mat = bc.material;
  if (is_cylinder(id))
  {
    const CylinderData cd;
    auto g = std::make_shared<const GeometryMap>(GeometryMap::annulus_quarter(cd.a, cd.b));
    QuadtreeMesh m(g, 4, 4);
    m = m.with_parameter_region(0.25, 0.25, 0.75, 0.75, region_bit);
    bc.initial_mesh = refined(std::move(m), initial_refinement);
    bc.dirichlet = cylinder_symmetry();
    const auto lame = std::make_shared<const LameSolution>(cylinder_solution(mat, cd));
    bc.exact_displacement = [lame](const Vec2 &x) { return lame->displacement(x); };
    bc.exact_stress = [lame](const Vec2 &x) { return lame->stress(x); };
    if (id != CaseId::cyl_2_mean_tn_dirichlet)
    {
      bc.loads.tractions["inner"] = [P = cd.P](const Vec2 &, const Vec2 &n) {
        return Vec2(-P * n);
      };
    }
    const double r1 = cd.a + 0.25 * (cd.b - cd.a);
    const double r2 = cd.a + 0.75 * (cd.b - cd.a);
    switch (id)
    {
    case CaseId::cyl_1a_mean_un_Gamma_o: {
      bc.qoi = QuantityOfInterest::mean_displacement_boundary({1.0, 0.0}, "outer", true);
      bc.exact_qoi = lame->radial_displacement(cd.b);
      // Dual: unit mean pull on the outer arc, i.e. an external pressure -1/|Gamma_o|.
      const auto dual = std::make_shared<const LameSolution>(
        LameSolution::pressures(mat, cd.a, cd.b, 0.0, -1.0 / (0.5 * pi * cd.b)));
      bc.exact_dual_stress = [dual](const Vec2 &x) { return dual->stress(x); };
      break;
    }
    case CaseId::cyl_1b_mean_ux_domain:
      bc.qoi = QuantityOfInterest::mean_displacement_domain({1.0, 0.0}, region_bit);
      bc.exact_qoi = mean_ux_over_sector(*lame, r1, r2, 0.125 * pi, 0.375 * pi);
      break;
    case CaseId::cyl_1c_mean_sx_domain:
      bc.qoi = QuantityOfInterest::mean_stress_domain({1.0, 0.0, 0.0}, region_bit);
      bc.exact_qoi = cd.P * cd.a * cd.a / (cd.b * cd.b - cd.a * cd.a);
      break;
    case CaseId::cyl_2_mean_tn_dirichlet: {
      bc.dirichlet.edges.insert(
        bc.dirichlet.edges.begin(),
        {"inner", [lame](const Vec2 &x) { return lame->displacement(x); }, true, true, false});
      bc.qoi = QuantityOfInterest::mean_traction_dirichlet({-1.0, 0.0}, "inner", true);
      bc.exact_qoi = cd.P;
      const auto dual = std::make_shared<const LameSolution>(
        LameSolution::inner_displacement(mat, cd.a, cd.b, -1.0 / (0.5 * pi * cd.a), 0.0));
      bc.exact_dual_stress = [dual](const Vec2 &x) { return dual->stress(x); };
      break;
    }
    default:
      break;
    }
    return bc;
  }

  auto g = std::make_shared<const GeometryMap>(GeometryMap::lshape(1.0));
  bc.initial_mesh = refined(QuadtreeMesh(g, 4, 4), initial_refinement);
  const auto exact = std::make_shared<const LShapeExact>(mat, 1.0, 1.0);
  bc.corner = exact->corner();
  bc.exact_displacement = [exact](const Vec2 &x) { return exact->displacement(x); };
  bc.exact_stress = [exact](const Vec2 &x) { return exact->stress(x); };
  bc.loads.tractions["outer"] = [exact](const Vec2 &x, const Vec2 &n) {
    return Vec2(UnitNormal(n).G() * exact->stress(x));
  };
  auto pin_value = [exact](const Vec2 &x) { return exact->displacement(x); };
  bc.dirichlet.points.push_back({Vec2(-1.0, -1.0), pin_value, true, true});
  bc.dirichlet.points.push_back({Vec2(-1.0, 1.0), pin_value, true, false});
  const FractureMode mode = id == CaseId::lshape_KI ? FractureMode::I : FractureMode::II;
  bc.qoi = QuantityOfInterest::gsif(mode, *bc.corner, {0.6, 0.8});
  bc.exact_qoi = 1.0;
  return bc;
}

void RunConfig::validate() const
{
  adapt.validate();
  if (degree < 1 || degree > 2)
  {
    throw Error("RunConfig: degree must be 1 or 2");
  }
  if (!(split_radius >= 0.0))
  {
    throw Error("RunConfig: split radius must be nonnegative");
  }
  dual_extraction.validate();
  if (estimator_order < 1)
  {
    throw Error("RunConfig: estimator order must be positive");
  }
  if (initial_refinement < 0)
  {
    throw Error("RunConfig: initial refinement must be nonnegative");
  }
}

ErrorReport analyse(const BenchmarkCase &bc, std::shared_ptr<const QuadtreeMesh> mesh,
                    const RunConfig &config)
{
  const MaterialModel &mat = bc.material;
  const SystemMatrix sys = assemble(mesh, mat, bc.loads, bc.dirichlet);
  const FEField u = solve(sys, mat, bc.loads);
  const DualProblem dp = dual_loads(bc.qoi, *mesh, mat, bc.dirichlet);
  const FEField z = solve_problem(mesh, mat, dp.loads, dp.dirichlet);

  RecoveryOptions opt =
    config.recovery == RecoveryMode::spr ? RecoveryOptions::plain_spr() : RecoveryOptions{};
  opt.degree = config.degree;
  RecoveryOptions dopt = opt;
  if (bc.corner && config.recovery == RecoveryMode::spr_cx && config.split_radius > 0.0)
  {
    const ExtractionDomain primal_domain = bc.qoi.domain;
    opt.singular = SingularSplit{*bc.corner, extract_gsif(u, *bc.corner, FractureMode::I, primal_domain),
                                 extract_gsif(u, *bc.corner, FractureMode::II, primal_domain),
                                 config.split_radius};
    dopt.singular =
      SingularSplit{*bc.corner, extract_gsif(z, *bc.corner, FractureMode::I, config.dual_extraction),
                    extract_gsif(z, *bc.corner, FractureMode::II, config.dual_extraction),
                    config.split_radius};
  }
  const RecoveredField pr = recover(u, bc.dirichlet, opt);
  const RecoveredField dr = recover(z, dp.dirichlet, dopt);

  ErrorReport rep;
  rep.dof = u.dof_count();
  rep.elements = mesh->num_elements();
  rep.estimates = qoi_estimates(pr, dr, config.estimator_order);
  rep.zz_primal = rep.estimates.primal_energy_norm;
  rep.zz_dual = rep.estimates.dual_energy_norm;

  const FieldSampler exact = exact_sampler(bc.exact_displacement, bc.exact_stress, mat);
  if (bc.qoi.kind == QoIKind::mean_traction_dirichlet)
  {
    rep.q_fe = reaction_qoi(bc.qoi, sys, u);
    rep.q_exact = reaction_weighted_traction(bc.qoi, *mesh, exact.stress);
  }
  else
  {
    rep.q_fe = evaluate_qoi(bc.qoi, *mesh, mat, fe_sampler(u), 8);
    rep.q_exact = evaluate_qoi(bc.qoi, *mesh, mat, exact, 8);
  }
  rep.exact_error = rep.q_exact - rep.q_fe;
  rep.eff = effectivities(rep.estimates.E1, rep.exact_error, rep.q_fe, rep.q_exact);

  const ElementStressSampler sh = fe_total_stress(u);
  const ElementStressSampler primal_err = [&](ElementId e, const ShapeValues &sv) {
    return Vec3(bc.exact_stress(sv.x) - sh(e, sv));
  };
  double ee = 0.0;
  for (double v : element_pairings(*mesh, mat, primal_err, primal_err, config.estimator_order))
  {
    ee += v;
  }
  rep.exact_energy_error = std::sqrt(std::max(ee, 0.0));
  if (bc.exact_dual_stress)
  {
    const ElementStressSampler zh = fe_total_stress(z);
    const ElementStressSampler dual_err = [&](ElementId e, const ShapeValues &sv) {
      return Vec3(bc.exact_dual_stress(sv.x) - zh(e, sv));
    };
    const auto exact_local =
      element_pairings(*mesh, mat, primal_err, dual_err, config.estimator_order);
    rep.local = local_effectivity_stats(rep.estimates.element_E1, exact_local);
  }
  return rep;
}

ExactPairing exact_pairing(const BenchmarkCase &bc, std::shared_ptr<const QuadtreeMesh> mesh,
                           int order)
{
  if (!bc.exact_dual_stress)
  {
    throw Error("exact_pairing: case " + to_string(bc.id) + " has no closed-form dual");
  }
  const MaterialModel &mat = bc.material;
  const SystemMatrix sys = assemble(mesh, mat, bc.loads, bc.dirichlet);
  const FEField u = solve(sys, mat, bc.loads);
  const DualProblem dp = dual_loads(bc.qoi, *mesh, mat, bc.dirichlet);
  const FEField z = solve_problem(mesh, mat, dp.loads, dp.dirichlet);
  const ElementStressSampler uh = fe_total_stress(u);
  const ElementStressSampler zh = fe_total_stress(z);
  const ElementStressSampler primal_err = [&](ElementId e, const ShapeValues &sv) {
    return Vec3(bc.exact_stress(sv.x) - uh(e, sv));
  };
  const ElementStressSampler dual_err = [&](ElementId e, const ShapeValues &sv) {
    return Vec3(bc.exact_dual_stress(sv.x) - zh(e, sv));
  };
  ExactPairing out;
  for (double v : element_pairings(*mesh, mat, primal_err, dual_err, order))
  {
    out.E1 += v;
  }
  const FieldSampler exact = exact_sampler(bc.exact_displacement, bc.exact_stress, mat);
  if (bc.qoi.kind == QoIKind::mean_traction_dirichlet)
  {
    out.exact_error =
      reaction_weighted_traction(bc.qoi, *mesh, exact.stress) - reaction_qoi(bc.qoi, sys, u);
  }
  else
  {
    out.exact_error = evaluate_qoi(bc.qoi, *mesh, mat, exact, order) -
                      evaluate_qoi(bc.qoi, *mesh, mat, fe_sampler(u), order);
  }
  return out;
}

RunReport run(const RunConfig &config)
{
  config.validate();
  RunReport report;
  report.config = config;
  const BenchmarkCase bc = make_case(config.case_id, config.initial_refinement);
  if (config.refine == RefineMode::uniform)
  {
    auto mesh = bc.initial_mesh;
    for (int it = 0; it < config.adapt.max_iterations; ++it)
    {
      if (it > 0)
      {
        auto next = std::make_shared<const QuadtreeMesh>(mesh->refine_uniform());
        if (config.adapt.max_dofs > 0 && 2 * next->num_vertex_nodes() > config.adapt.max_dofs)
        {
          break;
        }
        mesh = std::move(next);
      }
      report.meshes.push_back(mesh);
      report.rows.push_back(analyse(bc, mesh, config));
      const auto &eta = report.rows.back().eff.eta_estimated;
      if (eta && *eta <= config.adapt.target)
      {
        report.converged = true;
        break;
      }
    }
  }
  else
  {
    AdaptConfig ac = config.adapt;
    if (bc.corner && !ac.singular_point)
    {
      ac.singular_point = bc.corner->apex;
      if (ac.singular_rate == 0.0)
      {
        const auto lI = corner_eigenvalue(bc.corner->opening_angle, FractureMode::I);
        const auto lII = corner_eigenvalue(bc.corner->opening_angle, FractureMode::II);
        ac.singular_rate = std::min(lI.value_or(1.0), lII.value_or(1.0));
      }
    }
    const AdaptResult res = adapt_loop(
      bc.initial_mesh,
      [&](std::shared_ptr<const QuadtreeMesh> mesh) {
        report.rows.push_back(analyse(bc, mesh, config));
        const ErrorReport &r = report.rows.back();
        AdaptStep step;
        step.element_E1 = r.estimates.element_E1;
        step.estimated_relative_error = r.eff.eta_estimated.value_or(0.0);
        step.corrected_qoi = r.q_fe + r.estimates.E1;
        return step;
      },
      ac);
    report.meshes = res.meshes;
    report.converged = res.converged;
  }
  if (!config.out.empty())
  {
    write_report_files(report, config.out);
  }
  return report;
}

std::string report_stem(const RunConfig &config)
{
  return to_string(config.case_id) + "_" +
         (config.recovery == RecoveryMode::spr_cx ? "sprcx" : "spr") + "_" +
         (config.refine == RefineMode::uniform ? "uniform" : "adaptive");
}

std::string format_number(std::optional<double> v)
{
  return v ? fmt(*v) : std::string("nan");
}

void write_csv(std::ostream &os, const RunReport &report)
{
  os << "dof,Qees,Qe,theta,thetaQoI,etaes,eta,E2,E3,E4,meanD,sigD\n";
  for (const auto &r : report.rows)
  {
    std::optional<double> meanD;
    std::optional<double> sigD;
    if (r.local)
    {
      meanD = r.local->mean_abs;
      sigD = r.local->std_dev;
    }
    os << r.dof << ',' << fmt(r.estimates.E1) << ',' << format_number(r.exact_error) << ','
       << format_number(r.eff.theta) << ',' << format_number(r.eff.theta_qoi) << ','
       << format_number(r.eff.eta_estimated) << ',' << format_number(r.eff.eta_exact) << ','
       << fmt(r.estimates.E2) << ',' << fmt(r.estimates.E3) << ',' << fmt(r.estimates.E4) << ','
       << format_number(meanD) << ',' << format_number(sigD) << '\n';
  }
}

void write_summary(std::ostream &os, const RunReport &report)
{
  const auto &c = report.config;
  os << "case        " << to_string(c.case_id) << '\n'
     << "recovery    " << (c.recovery == RecoveryMode::spr_cx ? "spr-cx" : "spr") << '\n'
     << "refinement  " << (c.refine == RefineMode::uniform ? "uniform" : "adaptive") << '\n'
     << "target      " << fmt(c.adapt.target) << '\n'
     << "meshes      " << report.rows.size() << '\n'
     << "converged   " << (report.converged ? "yes" : "no") << "\n\n";
  char line[512];
  std::snprintf(line, sizeof(line), "%8s %10s %24s %24s %24s %24s %24s %24s\n", "dof", "elements",
                "E1", "Q(e)", "theta", "theta_QoI", "eta_es", "eta");
  os << line;
  for (const auto &r : report.rows)
  {
    std::snprintf(line, sizeof(line), "%8zu %10zu %24s %24s %24s %24s %24s %24s\n", r.dof,
                  r.elements, fmt(r.estimates.E1).c_str(), format_number(r.exact_error).c_str(),
                  format_number(r.eff.theta).c_str(), format_number(r.eff.theta_qoi).c_str(),
                  format_number(r.eff.eta_estimated).c_str(),
                  format_number(r.eff.eta_exact).c_str());
    os << line;
  }
}

void write_report_files(const RunReport &report, const std::filesystem::path &dir)
{
  std::filesystem::create_directories(dir);
  const std::string stem = report_stem(report.config);
  auto open = [&](const std::string &suffix) {
    std::ofstream f(dir / (stem + suffix));
    if (!f)
    {
      throw Error("cannot write " + (dir / (stem + suffix)).string());
    }
    return f;
  };
  {
    auto f = open(".csv");
    write_csv(f, report);
  }
  {
    auto f = open("_summary.txt");
    write_summary(f, report);
  }
  auto plot = [&](const std::string &name, const std::function<std::optional<double>(
                                             const ErrorReport &)> &y) {
    auto f = open("_" + name + ".dat");
    f << "# dof " << name << '\n';
    for (const auto &r : report.rows)
    {
      f << r.dof << ' ' << format_number(y(r)) << '\n';
    }
  };
  plot("theta", [](const ErrorReport &r) { return r.eff.theta; });
  plot("eta", [](const ErrorReport &r) { return r.eff.eta_exact; });
  plot("etaes", [](const ErrorReport &r) { return r.eff.eta_estimated; });
  plot("meanD", [](const ErrorReport &r) {
    return r.local ? std::optional<double>(r.local->mean_abs) : std::nullopt;
  });
  plot("sigD", [](const ErrorReport &r) {
    return r.local ? std::optional<double>(r.local->std_dev) : std::nullopt;
  });
}

void apply_config_value(RunConfig &c, const std::string &key_in, const std::string &value_in)
{
  const std::string key = lower(trim(key_in));
  const std::string value = trim(value_in);
  if (key == "case")
  {
    c.case_id = parse_case(value);
  }
  else if (key == "recovery")
  {
    const std::string v = lower(value);
    if (v == "spr-cx" || v == "spr_cx" || v == "sprcx")
    {
      c.recovery = RecoveryMode::spr_cx;
    }
    else if (v == "spr")
    {
      c.recovery = RecoveryMode::spr;
    }
    else
    {
      throw Error("config: recovery must be spr-cx or spr, got '" + value + "'");
    }
  }
  else if (key == "refine")
  {
    const std::string v = lower(value);
    if (v == "uniform")
    {
      c.refine = RefineMode::uniform;
    }
    else if (v == "adaptive")
    {
      c.refine = RefineMode::adaptive;
    }
    else
    {
      throw Error("config: refine must be uniform or adaptive, got '" + value + "'");
    }
  }
  else if (key == "target")
  {
    c.adapt.target = to_double(key, value) / 100.0;
  }
  else if (key == "max_iter")
  {
    c.adapt.max_iterations = to_int(key, value);
  }
  else if (key == "max_dofs")
  {
    c.adapt.max_dofs = static_cast<std::size_t>(to_int(key, value));
  }
  else if (key == "max_level")
  {
    c.adapt.max_level = to_int(key, value);
  }
  else if (key == "max_halvings")
  {
    c.adapt.max_halvings = to_int(key, value);
  }
  else if (key == "rate")
  {
    c.adapt.rate = to_double(key, value);
  }
  else if (key == "singular_rate")
  {
    c.adapt.singular_rate = to_double(key, value);
  }
  else if (key == "initial_refinement")
  {
    c.initial_refinement = to_int(key, value);
  }
  else if (key == "degree")
  {
    c.degree = to_int(key, value);
  }
  else if (key == "split_radius")
  {
    c.split_radius = to_double(key, value);
  }
  else if (key == "dual_r1")
  {
    c.dual_extraction.r1 = to_double(key, value);
  }
  else if (key == "dual_r2")
  {
    c.dual_extraction.r2 = to_double(key, value);
  }
  else if (key == "estimator_order")
  {
    c.estimator_order = to_int(key, value);
  }
  else if (key == "out")
  {
    c.out = value;
  }
  else
  {
    throw Error("config: unknown key '" + key + "'");
  }
}

RunConfig parse_config(std::istream &is, RunConfig base)
{
  std::string line;
  int lineno = 0;
  while (std::getline(is, line))
  {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos)
    {
      line.erase(hash);
    }
    if (trim(line).empty())
    {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
    {
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_value(base, line.substr(0, eq), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------------------------
// Pre-flight checks

namespace
{

// Fourth-order central differences of a stress field.
StressGradient stress_gradient(const std::function<Vec3(const Vec2 &)> &s, const Vec2 &x, double h)
{
  auto d = [&](const Vec2 &dir) {
    return Vec3((-s(x + 2.0 * h * dir) + 8.0 * s(x + h * dir) - 8.0 * s(x - h * dir) +
                 s(x - 2.0 * h * dir)) /
                (12.0 * h));
  };
  return {d(Vec2(1.0, 0.0)), d(Vec2(0.0, 1.0))};
}

Mat2 displacement_gradient(const std::function<Vec2(const Vec2 &)> &u, const Vec2 &x, double h)
{
  auto d = [&](const Vec2 &dir) {
    return Vec2((-u(x + 2.0 * h * dir) + 8.0 * u(x + h * dir) - 8.0 * u(x - h * dir) +
                 u(x - 2.0 * h * dir)) /
                (12.0 * h));
  };
  Mat2 g;
  g.col(0) = d(Vec2(1.0, 0.0));
  g.col(1) = d(Vec2(0.0, 1.0));
  return g;
}

VerifyCheck make_check(std::string name, double value, double tol)
{
  return {std::move(name), std::isfinite(value) && std::abs(value) <= tol, value, tol};
}

} // namespace

std::vector<VerifyCheck> verify_exact_solutions()
{
  std::vector<VerifyCheck> out;
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const MaterialModel mat(1000.0, 0.3, PlaneMode::plane_strain);
  const CylinderData cd;

  // Cylinder fields: primal, dual under external pressure, dual with imposed inner radius.
  const auto primal = cylinder_solution(mat, cd);
  const double gamma_o = 0.5 * pi * cd.b;
  const double gamma_i = 0.5 * pi * cd.a;
  const auto dual_out = LameSolution::pressures(mat, cd.a, cd.b, 0.0, -1.0 / gamma_o);
  const auto dual_in = LameSolution::inner_displacement(mat, cd.a, cd.b, -1.0 / gamma_i, 0.0);
  const std::array<std::pair<const char *, const LameSolution *>, 3> lames{
    {{"cylinder", &primal}, {"cylinder_dual_outer", &dual_out}, {"cylinder_dual_inner", &dual_in}}};
  for (const auto &[name, s] : lames)
  {
    double eq = 0.0;
    double cons = 0.0;
    for (int k = 0; k < 20; ++k)
    {
      const double r = cd.a + (cd.b - cd.a) * (0.05 + 0.9 * unit(rng));
      const double th = 0.5 * pi * unit(rng);
      const Vec2 x = r * Vec2(std::cos(th), std::sin(th));
      const double h = 1e-3 * r;
      auto sig = [s](const Vec2 &p) { return s->stress(p); };
      auto disp = [s](const Vec2 &p) { return s->displacement(p); };
      const double scale = s->stress(x).norm() + std::abs(s->radial_stress(cd.a)) +
                           std::abs(s->radial_stress(cd.b));
      eq = std::max(eq, equilibrium_residual(stress_gradient(sig, x, h), Vec2::Zero()).norm() *
                          r / scale);
      const Mat2 g = displacement_gradient(disp, x, h);
      const Vec3 eps(g(0, 0), g(1, 1), g(0, 1) + g(1, 0));
      cons = std::max(cons, (mat.D() * eps - s->stress(x)).norm() / scale);
    }
    out.push_back(make_check(std::string(name) + ": equilibrium", eq, 1e-8));
    out.push_back(make_check(std::string(name) + ": stress from displacement", cons, 1e-8));
    double sym = 0.0;
    for (double r : {cd.a, 0.5 * (cd.a + cd.b), cd.b})
    {
      sym = std::max(sym, std::abs(s->displacement(Vec2(r, 0.0)).y()));
      sym = std::max(sym, std::abs(s->displacement(Vec2(0.0, r)).x()));
    }
    out.push_back(make_check(std::string(name) + ": symmetry planes", sym, 1e-14));
  }
  out.push_back(make_check("cylinder: sigma_r(a) = -P", primal.radial_stress(cd.a) + cd.P, 1e-12));
  out.push_back(make_check("cylinder: sigma_r(b) = 0", primal.radial_stress(cd.b), 1e-12));
  out.push_back(make_check("cylinder_dual_outer: sigma_r(b) = 1/|Gamma_o|",
                           dual_out.radial_stress(cd.b) - 1.0 / gamma_o, 1e-12));
  out.push_back(make_check("cylinder_dual_outer: sigma_r(a) = 0", dual_out.radial_stress(cd.a),
                           1e-12));
  out.push_back(make_check("cylinder_dual_inner: u_r(a) = -1/|Gamma_i|",
                           dual_in.radial_displacement(cd.a) + 1.0 / gamma_i, 1e-14));
  out.push_back(make_check("cylinder_dual_inner: sigma_r(b) = 0", dual_in.radial_stress(cd.b),
                           1e-12));
  // Traction data along the arcs in Cartesian form.
  double arc = 0.0;
  for (int k = 0; k <= 8; ++k)
  {
    const double th = 0.5 * pi * k / 8.0;
    const Vec2 er(std::cos(th), std::sin(th));
    const Vec2 ti = traction_projection(VoigtStress(primal.stress(cd.a * er)), UnitNormal(-er));
    const Vec2 to = traction_projection(VoigtStress(primal.stress(cd.b * er)), UnitNormal(er));
    arc = std::max({arc, (ti - cd.P * er).norm(), to.norm()});
  }
  out.push_back(make_check("cylinder: arc tractions", arc, 1e-12));

  // Exact QoI values on the benchmark meshes.
  for (CaseId id : all_cases())
  {
    const BenchmarkCase bc = make_case(id, is_cylinder(id) ? 1 : 3);
    const FieldSampler ex = exact_sampler(bc.exact_displacement, bc.exact_stress, bc.material);
    const double q = evaluate_qoi(bc.qoi, *bc.initial_mesh, bc.material, ex, 8);
    const double tol = is_cylinder(id) ? 1e-8 * std::abs(bc.exact_qoi) : 1e-3;
    out.push_back(make_check(to_string(id) + ": exact QoI", q - bc.exact_qoi, tol));
  }
  out.push_back(make_check("cyl_1a: u_r(b) = 2.42666e-3",
                           primal.radial_displacement(cd.b) - 2.42666e-3, 1e-8));

  // L-shape.
  const LShapeExact ls(mat, 1.0, 1.0);
  double eq = 0.0;
  double cons = 0.0;
  for (int k = 0; k < 20; ++k)
  {
    const double r = 0.05 + 0.9 * unit(rng);
    const double th = 0.75 * pi + (unit(rng) - 0.5) * 1.45 * pi;
    const Vec2 x = r * Vec2(std::cos(th), std::sin(th));
    const double h = 1e-3 * r;
    auto sig = [&ls](const Vec2 &p) { return ls.stress(p); };
    auto disp = [&ls](const Vec2 &p) { return ls.displacement(p); };
    const double scale = ls.stress(x).norm();
    eq = std::max(eq, equilibrium_residual(stress_gradient(sig, x, h), Vec2::Zero()).norm() * r /
                        scale);
    const Mat2 g = displacement_gradient(disp, x, h);
    const Vec3 eps(g(0, 0), g(1, 1), g(0, 1) + g(1, 0));
    cons = std::max(cons, (mat.D() * eps - ls.stress(x)).norm() / scale);
  }
  out.push_back(make_check("lshape: equilibrium", eq, 1e-8));
  out.push_back(make_check("lshape: stress from displacement", cons, 1e-8));
  double faces = 0.0;
  for (double r : {0.01, 0.3, 1.0})
  {
    const double scale = ls.stress(Vec2(-r, r)).norm();
    faces = std::max(faces, traction_projection(VoigtStress(ls.stress(Vec2(r, 0.0))),
                                                UnitNormal(0.0, -1.0))
                                .norm() /
                              scale);
    faces = std::max(faces, traction_projection(VoigtStress(ls.stress(Vec2(0.0, -r))),
                                                UnitNormal(1.0, 0.0))
                                .norm() /
                              scale);
  }
  out.push_back(make_check("lshape: traction-free faces", faces, 1e-10));
  auto sampler = [&ls](const Vec2 &x) { return ls.sample(x); };
  for (auto mode : {FractureMode::I, FractureMode::II})
  {
    const std::string m = mode == FractureMode::I ? "K_I" : "K_II";
    const double k1 = extract_gsif(sampler, ls.corner(), mode, mat, {0.6, 0.8});
    const double k2 = extract_gsif(sampler, ls.corner(), mode, mat, {0.3, 0.9});
    out.push_back(make_check("lshape: extracted " + m, k1 - 1.0, 1e-3));
    out.push_back(make_check("lshape: " + m + " contour independence", k1 - k2, 1e-3));
  }
  return out;
}

} // namespace goalfem
