#include "goalfem/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace goalfem;

namespace
{

std::shared_ptr<const GeometryMap> annulus()
{
  return std::make_shared<const GeometryMap>(GeometryMap::annulus_quarter(5.0, 20.0));
}

std::shared_ptr<const GeometryMap> lshape()
{
  return std::make_shared<const GeometryMap>(GeometryMap::lshape(1.0));
}

std::shared_ptr<const GeometryMap> unit_square()
{
  return std::make_shared<const GeometryMap>(GeometryMap::rectangle({0.0, 0.0}, {1.0, 1.0}));
}

// Every edge-adjacent pair differs by at most one level.
void expect_one_level_rule(const QuadtreeMesh &mesh)
{
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    for (int k = 0; k < 4; ++k)
    {
      for (ElementId n : mesh.edge_neighbours(e, k))
      {
        EXPECT_LE(std::abs(mesh.element(e).level - mesh.element(n).level), 1);
      }
    }
  }
}

double total_area(const QuadtreeMesh &mesh)
{
  double a = 0.0;
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    a += mesh.element_area(e, 6);
  }
  return a;
}

QuadtreeMesh random_refinement(QuadtreeMesh mesh, unsigned seed, int steps)
{
  std::mt19937 rng(seed);
  for (int s = 0; s < steps; ++s)
  {
    std::vector<ElementId> marked;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(mesh.num_elements()) - 1);
    for (int k = 0; k < 3; ++k)
    {
      marked.push_back(pick(rng));
    }
    mesh = mesh.refine(marked);
  }
  return mesh;
}

} // namespace

TEST(Mesh, InitialAnnulusCounts)
{
  const QuadtreeMesh mesh(annulus(), 2, 2);
  EXPECT_EQ(mesh.num_elements(), 4u);
  EXPECT_EQ(mesh.num_nodes(), 9u);
  EXPECT_TRUE(mesh.hanging_constraints().empty());
}

TEST(Mesh, RejectsDegenerateAnnulus)
{
  EXPECT_THROW(GeometryMap::annulus_quarter(5.0, 5.0), Error);
  EXPECT_THROW(GeometryMap::annulus_quarter(20.0, 5.0), Error);
  EXPECT_THROW(QuadtreeMesh(annulus(), 0, 1), Error);
}

TEST(Mesh, AnnulusCornersOnCircles)
{
  const QuadtreeMesh mesh(annulus(), 1, 1);
  const auto &el = mesh.element(0);
  EXPECT_NEAR(mesh.node(el.nodes[0]).norm(), 5.0, 1e-14);
  EXPECT_NEAR(mesh.node(el.nodes[3]).norm(), 5.0, 1e-14);
  EXPECT_NEAR(mesh.node(el.nodes[1]).norm(), 20.0, 1e-14);
  EXPECT_NEAR(mesh.node(el.nodes[2]).norm(), 20.0, 1e-14);
}

TEST(Mesh, LShapePositiveJacobians)
{
  const QuadtreeMesh mesh(lshape(), 4, 4);
  EXPECT_EQ(mesh.num_elements(), 12u);
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    for (const auto &qp : mesh.element_quadrature(e, 3))
    {
      EXPECT_GT(qp.weight, 0.0);
    }
  }
  EXPECT_NEAR(total_area(mesh), 3.0, 1e-13);
}

TEST(Mesh, RefineOneElementOfTwoByTwo)
{
  const QuadtreeMesh mesh(unit_square(), 2, 2);
  const std::vector<ElementId> marked{0};
  const auto fine = mesh.refine(marked);
  EXPECT_EQ(fine.num_elements(), 7u);
  EXPECT_EQ(fine.hanging_constraints().size(), 2u);
  for (const auto &hc : fine.hanging_constraints())
  {
    EXPECT_DOUBLE_EQ(hc.weight_a, 0.5);
    EXPECT_DOUBLE_EQ(hc.weight_b, 0.5);
    const Vec2 mid = 0.5 * (fine.node(hc.master_a) + fine.node(hc.master_b));
    EXPECT_LT((fine.node(hc.slave) - mid).norm(), 1e-15);
  }
  EXPECT_EQ(fine.num_vertex_nodes(), fine.num_nodes() - 2);
}

TEST(Mesh, UniformRefinementIsConforming)
{
  QuadtreeMesh mesh(annulus(), 2, 3);
  mesh = mesh.refine_uniform().refine_uniform();
  EXPECT_EQ(mesh.num_elements(), 6u * 16u);
  EXPECT_TRUE(mesh.hanging_constraints().empty());
  EXPECT_EQ(mesh.num_nodes(), 9u * 13u);
}

TEST(Mesh, ClosureCascades)
{
  QuadtreeMesh mesh(unit_square(), 4, 4);
  // Drive one corner element deep; the closure must cascade outwards.
  for (int k = 0; k < 5; ++k)
  {
    const std::vector<ElementId> marked{0};
    mesh = mesh.refine(marked);
  }
  int max_level = 0;
  for (const auto &el : mesh.elements())
  {
    max_level = std::max(max_level, el.level);
  }
  EXPECT_EQ(max_level, 5);
  expect_one_level_rule(mesh);
  EXPECT_NEAR(total_area(mesh), 1.0, 1e-13);
}

TEST(Mesh, RandomRefinementInvariants)
{
  for (unsigned seed = 1; seed <= 4; ++seed)
  {
    const auto mesh = random_refinement(QuadtreeMesh(annulus(), 2, 2), seed, 6);
    expect_one_level_rule(mesh);
    EXPECT_NEAR(total_area(mesh) / mesh.geometry().area(), 1.0, 1e-8);
    // Every hanging node has exactly one constraint.
    std::set<NodeId> slaves;
    for (const auto &hc : mesh.hanging_constraints())
    {
      EXPECT_TRUE(slaves.insert(hc.slave).second);
      EXPECT_TRUE(mesh.is_hanging(hc.slave));
    }
    // Expansions resolve to non-hanging nodes with weights summing to 1.
    for (NodeId n = 0; n < static_cast<NodeId>(mesh.num_nodes()); ++n)
    {
      double w = 0.0;
      for (const auto &[m, wm] : mesh.node_expansion(n))
      {
        EXPECT_FALSE(mesh.is_hanging(m));
        w += wm;
      }
      EXPECT_NEAR(w, 1.0, 1e-14);
    }
    // New boundary nodes lie exactly on the curved boundary.
    for (const auto &be : mesh.boundary_edges())
    {
      const auto &el = mesh.element(be.element);
      for (int k = 0; k < 2; ++k)
      {
        const double r = mesh.node(el.nodes[(be.local_edge + k) % 4]).norm();
        if (be.tag == "inner")
        {
          EXPECT_NEAR(r, 5.0, 1e-12);
        }
        if (be.tag == "outer")
        {
          EXPECT_NEAR(r, 20.0, 1e-12);
        }
      }
    }
  }
}

TEST(Mesh, LShapeRandomRefinement)
{
  const auto mesh = random_refinement(QuadtreeMesh(lshape(), 4, 4), 9, 6);
  expect_one_level_rule(mesh);
  EXPECT_NEAR(total_area(mesh), 3.0, 1e-12);
  double face = 0.0;
  double outer = 0.0;
  for (const auto &be : mesh.boundary_edges())
  {
    double len = 0.0;
    for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, 2))
    {
      len += ep.weight;
    }
    (be.tag == "face" ? face : outer) += len;
  }
  EXPECT_NEAR(face, 2.0, 1e-13);
  EXPECT_NEAR(outer, 6.0, 1e-13);
}

TEST(Mesh, QuadratureWeights)
{
  const QuadtreeMesh square(unit_square(), 1, 1);
  const auto qp = square.element_quadrature(0, 2);
  ASSERT_EQ(qp.size(), 4u);
  double w = 0.0;
  double lin = 0.0;
  for (const auto &p : qp)
  {
    w += p.weight;
  }
  for (const auto &p : square.element_quadrature(0, 1))
  {
    lin += p.weight * (3.0 * p.x.x() - 2.0 * p.x.y() + 1.0);
  }
  EXPECT_NEAR(w, 1.0, 1e-15);
  EXPECT_NEAR(lin, 1.5, 1e-15);

  // Sector-annulus cell: (pi/2)(r2^2 - r1^2) * d_eta / 2 ... here 2x2 root cells.
  const QuadtreeMesh ann(annulus(), 2, 2);
  const double r1 = 5.0;
  const double r2 = 12.5;
  const double exact = 0.5 * (r2 * r2 - r1 * r1) * (0.5 * std::numbers::pi / 2.0);
  double s = 0.0;
  for (const auto &p : ann.element_quadrature(0, 8))
  {
    s += p.weight;
  }
  EXPECT_NEAR(s, exact, 1e-6 * exact);
}

TEST(Mesh, EdgeQuadratureNormalsPointOutward)
{
  const QuadtreeMesh mesh(annulus(), 3, 3);
  for (const auto &be : mesh.boundary_edges())
  {
    for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, 3))
    {
      const Vec2 er = ep.x.normalized();
      if (be.tag == "inner")
      {
        EXPECT_NEAR(ep.normal.dot(er), -1.0, 1e-12);
      }
      else if (be.tag == "outer")
      {
        EXPECT_NEAR(ep.normal.dot(er), 1.0, 1e-12);
      }
      else if (be.tag == "sym_y0")
      {
        EXPECT_NEAR(ep.normal.y(), -1.0, 1e-12);
      }
      else
      {
        EXPECT_NEAR(ep.normal.x(), -1.0, 1e-12);
      }
    }
  }
}

TEST(Mesh, PatchesOnUniformMesh)
{
  const QuadtreeMesh mesh(unit_square(), 4, 4);
  const auto patches = build_patches(mesh);
  EXPECT_EQ(patches.size(), 25u);
  for (const auto &p : patches)
  {
    const Vec2 x = mesh.node(p.vertex);
    const bool corner = (x.x() == 0.0 || x.x() == 1.0) && (x.y() == 0.0 || x.y() == 1.0);
    const bool interior = x.x() > 0.0 && x.x() < 1.0 && x.y() > 0.0 && x.y() < 1.0;
    if (corner)
    {
      EXPECT_EQ(p.elements.size(), 1u);
    }
    if (interior)
    {
      EXPECT_EQ(p.elements.size(), 4u);
      EXPECT_TRUE(p.boundary_pieces.empty());
    }
    EXPECT_FALSE(p.elements.empty());
  }
}

TEST(Mesh, PatchesCoverRefinedMesh)
{
  const auto mesh = random_refinement(QuadtreeMesh(unit_square(), 3, 3), 5, 4);
  const auto patches = build_patches(mesh);
  EXPECT_EQ(patches.size(), mesh.num_vertex_nodes());
  std::vector<int> count(mesh.num_elements(), 0);
  for (const auto &p : patches)
  {
    EXPECT_FALSE(mesh.is_hanging(p.vertex));
    std::set<ElementId> unique(p.elements.begin(), p.elements.end());
    EXPECT_EQ(unique.size(), p.elements.size());
    for (ElementId e : p.elements)
    {
      ++count[e];
    }
  }
  for (int c : count)
  {
    EXPECT_GE(c, 3);
  }
}

TEST(Mesh, RegionsInheritedByChildren)
{
  auto mesh = QuadtreeMesh(annulus(), 4, 4).with_parameter_region(0.25, 0.25, 0.75, 0.75, 1);
  int marked = 0;
  for (const auto &el : mesh.elements())
  {
    marked += (el.regions & 2u) ? 1 : 0;
  }
  EXPECT_EQ(marked, 4);
  mesh = mesh.refine_uniform();
  marked = 0;
  for (const auto &el : mesh.elements())
  {
    marked += (el.regions & 2u) ? 1 : 0;
  }
  EXPECT_EQ(marked, 16);
}

TEST(Mesh, TextExport)
{
  const QuadtreeMesh mesh(unit_square(), 2, 2);
  const std::vector<ElementId> marked{3};
  std::ostringstream os;
  mesh.refine(marked).write_text(os);
  const std::string s = os.str();
  EXPECT_NE(s.find("node 0 "), std::string::npos);
  EXPECT_NE(s.find("element 0 "), std::string::npos);
  EXPECT_NE(s.find("constraint "), std::string::npos);
  EXPECT_NE(s.find("boundary "), std::string::npos);
}
