#include "goalfem/exact.hpp"
#include "goalfem/recovery.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace goalfem;

namespace
{

const MaterialModel mat(1000.0, 0.3, PlaneMode::plane_strain);

std::shared_ptr<const QuadtreeMesh> rect_mesh(int nx, int ny, bool with_hanging)
{
  auto g = std::make_shared<const GeometryMap>(GeometryMap::rectangle({0.0, 0.0}, {2.0, 1.0}));
  QuadtreeMesh m(g, nx, ny);
  if (with_hanging)
  {
    const std::array<ElementId, 2> marked{0, static_cast<ElementId>(m.num_elements() / 2)};
    m = m.refine(marked);
  }
  return std::make_shared<const QuadtreeMesh>(std::move(m));
}

std::shared_ptr<const QuadtreeMesh> annulus_mesh(int levels)
{
  auto g = std::make_shared<const GeometryMap>(GeometryMap::annulus_quarter(5.0, 20.0));
  QuadtreeMesh m(g, 2, 2);
  for (int k = 0; k < levels; ++k)
  {
    m = m.refine_uniform();
  }
  return std::make_shared<const QuadtreeMesh>(std::move(m));
}

LoadSet cylinder_loads()
{
  LoadSet loads;
  loads.tractions["inner"] = [](const Vec2 &, const Vec2 &n) { return Vec2(-1.0 * n); };
  return loads;
}

DirichletSet symmetry_conditions()
{
  DirichletSet d;
  d.edges.push_back({"sym_y0", nullptr, false, true, false});
  d.edges.push_back({"sym_x0", nullptr, true, false, false});
  return d;
}

// Bilinear displacement u = (a x y + c x, b x y + d y): linear stress, exactly representable.
Vec2 bilinear_u(const Vec2 &x)
{
  return {0.3 * x.x() * x.y() + 0.01 * x.x(), -0.2 * x.x() * x.y() + 0.02 * x.y()};
}

Vec3 bilinear_stress(const Vec2 &x)
{
  const Vec3 eps(0.3 * x.y() + 0.01, -0.2 * x.x() + 0.02, 0.3 * x.x() - 0.2 * x.y());
  return mat.D() * eps;
}

FEField interpolate(std::shared_ptr<const QuadtreeMesh> mesh, LoadSet loads,
                    const std::function<Vec2(const Vec2 &)> &u)
{
  Eigen::VectorXd v(2 * mesh->num_nodes());
  for (NodeId n = 0; n < static_cast<NodeId>(mesh->num_nodes()); ++n)
  {
    v.segment<2>(2 * n) = u(mesh->node(n));
  }
  return FEField(mesh, mat, std::move(loads), v);
}

LoadSet loads_for_bilinear()
{
  LoadSet loads;
  // b = -L^T sigma for the linear stress above (constant).
  const Mat3 &D = mat.D();
  const Vec3 dsdx = D * Vec3(0.0, -0.2, 0.3);
  const Vec3 dsdy = D * Vec3(0.3, 0.0, -0.2);
  const Vec2 b(-(dsdx[0] + dsdy[2]), -(dsdx[2] + dsdy[1]));
  loads.body_force = [b](const Vec2 &) { return b; };
  for (const char *tag : {"bottom", "right", "top", "left"})
  {
    loads.tractions[tag] = [](const Vec2 &x, const Vec2 &n) {
      return Vec2(UnitNormal(n).G() * bilinear_stress(x));
    };
  }
  return loads;
}

double traction_error_on(const QuadtreeMesh &mesh, const std::string &tag,
                         const ElementStressSampler &s, const TractionField &t)
{
  double err = 0.0;
  for (const auto &be : mesh.boundary_edges())
  {
    if (be.tag != tag)
    {
      continue;
    }
    for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, 4))
    {
      const Vec2 ref = QuadtreeMesh::edge_reference_point(be.local_edge, ep.s);
      const ShapeValues sv = mesh.shape_values(be.element, ref);
      const Vec2 r = UnitNormal(ep.normal).G() * s(be.element, sv) - t(ep.x, ep.normal);
      err += ep.weight * r.squaredNorm();
    }
  }
  return std::sqrt(err);
}

} // namespace

TEST(Recovery, BasisDerivativesMatchFiniteDifferences)
{
  for (int p : {0, 1, 2})
  {
    PatchPolynomial poly;
    poly.degree = p;
    poly.centre = Vec2(0.3, -0.1);
    poly.scale = 0.7;
    const Vec2 x(0.5, 0.2);
    const double h = 1e-6;
    const Eigen::VectorXd fdx =
      (poly.basis(x + Vec2(h, 0.0)) - poly.basis(x - Vec2(h, 0.0))) / (2.0 * h);
    const Eigen::VectorXd fdy =
      (poly.basis(x + Vec2(0.0, h)) - poly.basis(x - Vec2(0.0, h))) / (2.0 * h);
    EXPECT_LT((fdx - poly.basis_dx(x)).norm(), 1e-8);
    EXPECT_LT((fdy - poly.basis_dy(x)).norm(), 1e-8);
    EXPECT_EQ(poly.basis(x).size(), PatchPolynomial::basis_size(p));
  }
  EXPECT_EQ(PatchPolynomial::basis_size(1), 3);
  EXPECT_EQ(PatchPolynomial::basis_size(2), 6);
}

TEST(Recovery, ReproducesLinearStressExactly)
{
  for (bool hanging : {false, true})
  {
    const auto mesh = rect_mesh(4, 2, hanging);
    const FEField u = interpolate(mesh, loads_for_bilinear(), bilinear_u);
    const DirichletSet none;
    for (const auto &opts : {RecoveryOptions{}, RecoveryOptions::plain_spr()})
    {
      const RecoveredField rec = recover(u, none, opts);
      std::mt19937 rng(3);
      std::uniform_real_distribution<double> U(-1.0, 1.0);
      const double scale = bilinear_stress(Vec2(2.0, 1.0)).norm();
      for (ElementId e = 0; e < static_cast<ElementId>(mesh->num_elements()); ++e)
      {
        const Vec2 ref(U(rng), U(rng));
        const Vec2 x = mesh->map_point(e, ref);
        EXPECT_LT((rec.stress(e, ref) - bilinear_stress(x)).norm(), 1e-10 * scale);
      }
      for (const auto &f : rec.fits())
      {
        EXPECT_LE(f.max_constraint_residual, 1e-9 * scale);
      }
    }
  }
}

TEST(Recovery, InteriorPatchIsDivergenceFree)
{
  const auto mesh = annulus_mesh(2);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  const RecoveredField rec = recover(u, symmetry_conditions());
  int interior = 0;
  for (const auto &f : rec.fits())
  {
    const auto &poly = *f.sides[0];
    const Vec2 x = poly.centre + 0.3 * poly.scale * Vec2(1.0, -0.5);
    const Vec2 div = equilibrium_residual(poly.gradient(x), Vec2::Zero());
    EXPECT_LT(div.norm(), 1e-10 * poly.coeffs.norm() / poly.scale);
    interior += 1;
  }
  EXPECT_GT(interior, 0);
}

TEST(Recovery, TractionFreeCollocationIsExact)
{
  const auto mesh = annulus_mesh(2);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  const RecoveredField rec = recover(u, symmetry_conditions());
  int checked = 0;
  for (const auto &f : rec.fits())
  {
    EXPECT_LE(f.max_constraint_residual, 1e-10);
    for (const auto &r : f.active_rows)
    {
      if (r.kind != ConstraintKind::boundary)
      {
        continue;
      }
      const double radius = r.point.norm();
      const Vec3 s = f.sides[0]->value(r.point);
      if (std::abs(radius - 20.0) < 1e-9)
      {
        const Vec2 t = UnitNormal(r.point / radius).G() * s;
        EXPECT_LT(t.norm(), 1e-10);
        ++checked;
      }
      else if (std::abs(radius - 5.0) < 1e-9)
      {
        const Vec2 n = -r.point / radius;
        const Vec2 t = UnitNormal(n).G() * s;
        EXPECT_LT((t + n).norm(), 1e-10);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Recovery, OneCurvePerCornerPatch)
{
  const auto mesh = annulus_mesh(1);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  const auto patches = build_patches(*mesh);
  for (const auto &p : patches)
  {
    const Vec2 v = mesh->node(p.vertex);
    if ((v - Vec2(5.0, 0.0)).norm() > 1e-12)
    {
      continue;
    }
    const PatchFit f = fit_patch(p, u, symmetry_conditions(), {});
    // Corner of the loaded inner arc and the symmetry plane: only the Neumann arc is used.
    int boundary = 0;
    for (const auto &r : f.active_rows)
    {
      if (r.kind == ConstraintKind::boundary)
      {
        ++boundary;
        EXPECT_NEAR(r.point.norm(), 5.0, 1e-9);
      }
    }
    EXPECT_EQ(boundary, 4);
  }
}

TEST(Recovery, KktStationarity)
{
  const auto mesh = annulus_mesh(2);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  for (int p : {1, 2})
  {
    RecoveryOptions o;
    o.degree = p;
    const RecoveredField rec = recover(u, symmetry_conditions(), o);
    for (const auto &f : rec.fits())
    {
      EXPECT_LE(f.kkt_residual, 1e-9);
    }
  }
}

TEST(Recovery, BlendedFieldIsContinuous)
{
  const auto mesh = rect_mesh(4, 2, true);
  LoadSet loads;
  loads.tractions["right"] = [](const Vec2 &x, const Vec2 &) { return Vec2(1.0, 0.5 * x.y()); };
  DirichletSet d;
  d.edges.push_back({"left", nullptr, true, true, false});
  const FEField u = solve_problem(mesh, mat, loads, d);
  const RecoveredField rec = recover(u, d);
  // Physical point -> reference coordinates of an element (affine rectangle geometry).
  auto to_ref = [&](ElementId e, const Vec2 &x) {
    const Vec2 lo = mesh->map_point(e, Vec2(-1.0, -1.0));
    const Vec2 hi = mesh->map_point(e, Vec2(1.0, 1.0));
    return Vec2(2.0 * (x.x() - lo.x()) / (hi.x() - lo.x()) - 1.0,
                2.0 * (x.y() - lo.y()) / (hi.y() - lo.y()) - 1.0);
  };
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int checked = 0;
  while (checked < 1000)
  {
    const ElementId e = static_cast<ElementId>(rng() % mesh->num_elements());
    const int k = static_cast<int>(rng() % 4);
    const auto nbrs = mesh->edge_neighbours(e, k);
    if (nbrs.size() != 1 || mesh->element(nbrs[0]).level > mesh->element(e).level)
    {
      continue;
    }
    const Vec2 x = mesh->map_point(e, QuadtreeMesh::edge_reference_point(k, U(rng)));
    const Vec3 a = rec.stress(e, to_ref(e, x));
    const Vec3 b = rec.stress(nbrs[0], to_ref(nbrs[0], x));
    EXPECT_LT((a - b).norm(), 1e-12 * std::max(1.0, a.norm()));
    ++checked;
  }
}

TEST(Recovery, ConstraintsImproveBoundaryTractions)
{
  const auto mesh = annulus_mesh(2);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  const RecoveredField cx = recover(u, symmetry_conditions());
  const RecoveredField spr = recover(u, symmetry_conditions(), RecoveryOptions::plain_spr());
  const TractionField t_in = [](const Vec2 &, const Vec2 &n) { return Vec2(-1.0 * n); };
  const double e_cx = traction_error_on(*mesh, "inner", cx.stress_sampler(), t_in);
  const double e_spr = traction_error_on(*mesh, "inner", spr.stress_sampler(), t_in);
  EXPECT_LT(e_cx, e_spr);
  for (const auto &f : spr.fits())
  {
    EXPECT_TRUE(f.active_rows.empty());
  }
}

TEST(Recovery, EnergyEffectivityTendsToOne)
{
  const auto exact = LameSolution::pressures(mat, 5.0, 20.0, 1.0, 0.0);
  double prev = 1e300;
  double last_theta = 0.0;
  for (int level = 1; level <= 4; ++level)
  {
    const auto mesh = annulus_mesh(level);
    const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
    const RecoveredField rec = recover(u, symmetry_conditions());
    auto err = [&](ElementId e, const ShapeValues &sv) -> Vec3 {
      return exact.stress(sv.x) - u.elastic_stress(e, sv);
    };
    const auto est = rec.error_sampler();
    const double exact_err = std::sqrt(energy_inner_product(*mesh, mat, err, err, 6));
    const double est_err = std::sqrt(energy_inner_product(*mesh, mat, est, est, 6));
    const double theta = est_err / exact_err;
    EXPECT_LT(std::abs(theta - 1.0), prev + 1e-3) << "level " << level;
    prev = std::abs(theta - 1.0);
    last_theta = theta;
  }
  EXPECT_NEAR(last_theta, 1.0, 0.05);
}

TEST(Recovery, CompatibilityRows)
{
  PatchPolynomial p1;
  p1.degree = 1;
  const std::array<Vec2, 1> pts{Vec2(0.1, 0.2)};
  EXPECT_TRUE(compatibility_rows(p1, pts, mat, 0, 9).empty());

  PatchPolynomial p2;
  p2.degree = 2;
  p2.centre = Vec2(0.2, 0.1);
  p2.scale = 0.5;
  // Quadratic stress from the cubic displacement u = (x^2 y, x y^2): compatible.
  // eps = (2xy, 2xy, x^2 + y^2); express D eps in the scaled basis.
  const Vec2 c = p2.centre;
  const double s = p2.scale;
  Eigen::MatrixXd E(3, 6);
  // monomials in t = (x - c)/s: 1, tx, ty, tx^2, tx ty, ty^2
  // x = c.x + s tx, y = c.y + s ty
  // x y = cx cy + cy s tx + cx s ty + s^2 tx ty
  // x^2 + y^2 = cx^2 + cy^2 + 2 cx s tx + 2 cy s ty + s^2 tx^2 + s^2 ty^2
  Eigen::RowVectorXd xy(6);
  xy << c.x() * c.y(), c.y() * s, c.x() * s, 0.0, s * s, 0.0;
  Eigen::RowVectorXd r2(6);
  r2 << c.squaredNorm(), 2.0 * c.x() * s, 2.0 * c.y() * s, s * s, 0.0, s * s;
  E.row(0) = 2.0 * xy;
  E.row(1) = 2.0 * xy;
  E.row(2) = r2;
  p2.coeffs = mat.D() * E;
  Eigen::VectorXd A(18);
  for (int k = 0; k < 3; ++k)
  {
    A.segment(6 * k, 6) = p2.coeffs.row(k).transpose();
  }
  const auto rows = compatibility_rows(p2, pts, mat, 0, 18);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_LT(std::abs(rows[0].row.dot(A)), 1e-10 * rows[0].row.norm() * A.norm());

  // Plane stress: the row is the stress form with k = q = 1, scaled by 1 / E.
  const MaterialModel ps(1000.0, 0.3, PlaneMode::plane_stress);
  const auto row = compatibility_rows(p2, pts, ps, 0, 18)[0].row;
  const double nu = 0.3;
  const double f = 1.0;
  // Coefficient of the ty^2 monomial of sigma_xx is d2/dy2 -> 2 / s^2.
  EXPECT_NEAR(row[5], f * 2.0, 1e-12);
  EXPECT_NEAR(row[6 + 5], -nu * f * 2.0, 1e-12);
  EXPECT_NEAR(row[6 + 3], f * 2.0, 1e-12);
  EXPECT_NEAR(row[12 + 4], -2.0 * (1.0 + nu) * f, 1e-12);
}

TEST(Recovery, InternalEquilibriumRowsRejectAlignedPoints)
{
  PatchPolynomial p2;
  p2.degree = 2;
  const std::array<Vec2, 3> line{Vec2(0.0, 0.0), Vec2(0.1, 0.1), Vec2(0.3, 0.3)};
  EXPECT_THROW((void)internal_equilibrium_rows(p2, line, nullptr, 0, 18), Error);
  const std::array<Vec2, 3> tri{Vec2(0.0, 0.0), Vec2(0.1, 0.0), Vec2(0.0, 0.1)};
  EXPECT_EQ(internal_equilibrium_rows(p2, tri, nullptr, 0, 18).size(), 6u);
  // A field with known divergence is accepted exactly when b = -div.
  p2.coeffs = Eigen::MatrixXd::Zero(3, 6);
  p2.coeffs(0, 1) = 2.0; // sxx = 2 tx -> d/dx = 2
  p2.coeffs(2, 2) = 3.0; // sxy = 3 ty -> d/dy = 3
  const auto rows = internal_equilibrium_rows(
    p2, tri, [](const Vec2 &) { return Vec2(-5.0, 0.0); }, 0, 18);
  Eigen::VectorXd A(18);
  for (int k = 0; k < 3; ++k)
  {
    A.segment(6 * k, 6) = p2.coeffs.row(k).transpose();
  }
  for (const auto &r : rows)
  {
    EXPECT_NEAR(r.row.dot(A), r.rhs, 1e-12);
  }
}

TEST(Recovery, InterfaceTractionContinuity)
{
  auto g = std::make_shared<const GeometryMap>(GeometryMap::rectangle({0.0, 0.0}, {2.0, 1.0}));
  auto mesh = std::make_shared<const QuadtreeMesh>(
    QuadtreeMesh(g, 4, 2).with_parameter_region(0.25, 0.0, 0.75, 0.5, 0));
  LoadSet loads;
  loads.region_bit = 0;
  loads.initial_strain = [](const Vec2 &) { return VoigtStrain(1e-3, -2e-3, 5e-4); };
  DirichletSet d;
  d.edges.push_back({"left", nullptr, true, true, false});
  const FEField u = solve_problem(mesh, mat, loads, d);
  const RecoveredField rec = recover(u, d);
  int interface_rows = 0;
  for (const auto &f : rec.fits())
  {
    EXPECT_LE(f.max_constraint_residual, 1e-10);
    if (!(f.sides[0] && f.sides[1]))
    {
      continue;
    }
    for (const auto &r : f.active_rows)
    {
      if (r.kind == ConstraintKind::interface)
      {
        ++interface_rows;
      }
    }
  }
  EXPECT_GT(interface_rows, 0);
  // Total recovered traction continuous across the region boundary at x = 0.5, 0 < y < 0.5.
  const Vec2 x(0.5, 0.2);
  ElementId left = -1;
  ElementId right = -1;
  for (ElementId e = 0; e < static_cast<ElementId>(mesh->num_elements()); ++e)
  {
    const Vec2 lo = mesh->map_point(e, Vec2(-1.0, -1.0));
    const Vec2 hi = mesh->map_point(e, Vec2(1.0, 1.0));
    if (x.y() > lo.y() && x.y() < hi.y())
    {
      if (std::abs(hi.x() - 0.5) < 1e-12)
      {
        left = e;
      }
      if (std::abs(lo.x() - 0.5) < 1e-12)
      {
        right = e;
      }
    }
  }
  ASSERT_GE(left, 0);
  ASSERT_GE(right, 0);
  EXPECT_NE(rec.element_side(left), rec.element_side(right));
}

TEST(Recovery, SingularSplitImprovesLShapeRecovery)
{
  auto g = std::make_shared<const GeometryMap>(GeometryMap::lshape(1.0));
  QuadtreeMesh m(g, 4, 4);
  m = m.refine_uniform().refine_uniform();
  auto mesh = std::make_shared<const QuadtreeMesh>(std::move(m));
  const LShapeExact exact(mat, 1.0, 0.5);
  LoadSet loads;
  loads.tractions["outer"] = [&exact](const Vec2 &x, const Vec2 &n) {
    return Vec2(UnitNormal(n).G() * exact.stress(x));
  };
  const FEField u = interpolate(mesh, loads, [&](const Vec2 &x) {
    return x.norm() == 0.0 ? Vec2(Vec2::Zero()) : exact.displacement(x);
  });
  const DirichletSet none;
  RecoveryOptions with_split;
  with_split.singular = SingularSplit{lshape_corner(), 1.0, 0.5, 0.5};
  const RecoveredField plain = recover(u, none);
  const RecoveredField split = recover(u, none, with_split);
  auto err_of = [&](const RecoveredField &r) {
    auto e = [&](ElementId el, const ShapeValues &sv) -> Vec3 {
      return r.stress(el, sv) - exact.stress(sv.x);
    };
    return std::sqrt(energy_inner_product(*mesh, mat, e, e, 4));
  };
  EXPECT_LT(err_of(split), 0.5 * err_of(plain));
  int split_patches = 0;
  for (const auto &f : split.fits())
  {
    split_patches += f.sides[0]->singular_split ? 1 : 0;
  }
  EXPECT_GT(split_patches, 0);
}

TEST(Recovery, BlendingResidualIsReported)
{
  const auto mesh = annulus_mesh(1);
  const FEField u = solve_problem(mesh, mat, cylinder_loads(), symmetry_conditions());
  const RecoveredField rec = recover(u, symmetry_conditions());
  const Vec2 s = rec.blending_residual(0, Vec2(0.1, -0.2));
  EXPECT_TRUE(std::isfinite(s.norm()));
  std::ostringstream os;
  rec.write_text(os);
  EXPECT_NE(os.str().find("patch "), std::string::npos);
}
