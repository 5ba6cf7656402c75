#pragma once

#include "goalfem/elasticity.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace goalfem
{

using NodeId = std::int32_t;
using ElementId = std::int32_t;

/// Parametric map from the unit square (xi, eta) onto the physical domain.
///
/// Two kinds are supported. The quarter annulus maps xi to the radius in [a, b] and eta to
/// the polar angle in [0, pi/2]. The identity kind maps the unit square affinely onto the
/// bounding box of an axis-aligned polygon; root cells whose centre lies outside the polygon
/// are inactive, which is how non-convex domains such as the L-shape are represented.
class GeometryMap
{
public:
  enum class Kind
  {
    annulus_quarter,
    polygon_identity
  };

  static GeometryMap annulus_quarter(double inner_radius, double outer_radius);
  /// Axis-aligned polygon, vertices counter-clockwise. Edge k runs from vertex k to k+1 and is
  /// tagged with edge_tags[k].
  static GeometryMap polygon_identity(std::vector<Vec2> vertices,
                                      std::vector<std::string> edge_tags);
  static GeometryMap rectangle(const Vec2 &lo, const Vec2 &hi);
  /// [-leg, leg]^2 with the quadrant x > 0, y < 0 removed; re-entrant corner at the origin.
  /// The two corner faces are tagged "face", the rest "outer".
  static GeometryMap lshape(double leg);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] bool is_affine() const { return kind_ == Kind::polygon_identity; }
  [[nodiscard]] double inner_radius() const { return a_; }
  [[nodiscard]] double outer_radius() const { return b_; }
  [[nodiscard]] const std::vector<Vec2> &vertices() const { return vertices_; }

  [[nodiscard]] Vec2 map(double xi, double eta) const;
  /// d(x, y) / d(xi, eta).
  [[nodiscard]] Mat2 jacobian(double xi, double eta) const;

  /// Whether a point of the parameter square lies inside the domain.
  [[nodiscard]] bool parameter_point_inside(double xi, double eta) const;
  /// Whether a physical point lies in the closed domain (within `tol`).
  [[nodiscard]] bool contains(const Vec2 &x, double tol = 1e-12) const;

  /// Tag of the boundary piece containing the parameter point (which lies on the boundary).
  [[nodiscard]] std::string boundary_tag(double xi, double eta) const;

  /// Exact domain area.
  [[nodiscard]] double area() const;

private:
  Kind kind_ = Kind::polygon_identity;
  double a_ = 0.0;
  double b_ = 0.0;
  Vec2 lo_ = Vec2::Zero();
  Vec2 hi_ = Vec2::Ones();
  std::vector<Vec2> vertices_;
  std::vector<std::string> tags_;
};

struct HangingConstraint
{
  NodeId slave = -1;
  NodeId master_a = -1;
  NodeId master_b = -1;
  double weight_a = 0.5;
  double weight_b = 0.5;
};

/// Leaf cell of the quadtree. Nodes are ordered counter-clockwise starting at the
/// (xi_lo, eta_lo) corner; local edge k joins nodes k and k+1 (mod 4).
struct Element
{
  int level = 0;
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::array<NodeId, 4> nodes{};
  std::uint32_t regions = 0;
};

struct BoundaryEdge
{
  ElementId element = -1;
  int local_edge = 0;
  std::string tag;
};

/// Quadrature point in physical coordinates with the Jacobian folded into the weight.
struct QuadPoint
{
  Vec2 x;
  double weight = 0.0;
  Vec2 ref; ///< reference coordinates (s, t) in [-1, 1]^2
};

/// Shape function data of a bilinear element at one point.
struct ShapeValues
{
  Vec2 x;
  double weight = 0.0; ///< quadrature weight times |J| (1 when evaluated outside a rule)
  std::array<double, 4> N{};
  std::array<Vec2, 4> dN; ///< physical gradients
};

struct EdgePoint
{
  Vec2 x;
  double weight = 0.0; ///< quadrature weight times arc-length Jacobian
  Vec2 normal;         ///< outward unit normal of the element at x
  double s = 0.0;      ///< reference coordinate along the edge in [-1, 1]
};

/// Quadtree-refined mesh of mapped bilinear quadrilaterals with hanging-node constraints.
/// Immutable: refine() returns a new mesh.
class QuadtreeMesh
{
public:
  static constexpr int max_level = 24;

  QuadtreeMesh(std::shared_ptr<const GeometryMap> geometry, int nx, int ny);

  [[nodiscard]] const GeometryMap &geometry() const { return *geometry_; }
  [[nodiscard]] std::shared_ptr<const GeometryMap> geometry_ptr() const { return geometry_; }
  [[nodiscard]] int root_nx() const { return nx_; }
  [[nodiscard]] int root_ny() const { return ny_; }

  [[nodiscard]] std::size_t num_nodes() const { return coords_.size(); }
  [[nodiscard]] std::size_t num_elements() const { return elements_.size(); }
  [[nodiscard]] const Vec2 &node(NodeId n) const { return coords_[n]; }
  [[nodiscard]] const std::vector<Vec2> &nodes() const { return coords_; }
  [[nodiscard]] const Element &element(ElementId e) const { return elements_[e]; }
  [[nodiscard]] const std::vector<Element> &elements() const { return elements_; }
  [[nodiscard]] const std::vector<HangingConstraint> &hanging_constraints() const
  {
    return hanging_;
  }
  [[nodiscard]] const std::vector<BoundaryEdge> &boundary_edges() const { return boundary_; }
  [[nodiscard]] bool is_hanging(NodeId n) const { return hanging_index_[n] >= 0; }
  /// Number of nodes carrying independent degrees of freedom.
  [[nodiscard]] std::size_t num_vertex_nodes() const;

  /// Expansion of a node value in terms of non-hanging nodes (recursively resolved).
  [[nodiscard]] const std::vector<std::pair<NodeId, double>> &node_expansion(NodeId n) const
  {
    return expansion_[n];
  }

  /// Parameter-space rectangle of an element: (xi_lo, eta_lo, xi_hi, eta_hi).
  [[nodiscard]] std::array<double, 4> parameter_box(ElementId e) const;
  /// Physical point of reference coordinates (s, t) in [-1, 1]^2.
  [[nodiscard]] Vec2 map_point(ElementId e, const Vec2 &ref) const;
  /// d(x, y) / d(s, t).
  [[nodiscard]] Mat2 element_jacobian(ElementId e, const Vec2 &ref) const;
  [[nodiscard]] ShapeValues shape_values(ElementId e, const Vec2 &ref) const;

  /// Tensor Gauss rule with `order` points per direction; throws on nonpositive Jacobian.
  [[nodiscard]] std::vector<QuadPoint> element_quadrature(ElementId e, int order) const;
  [[nodiscard]] std::vector<ShapeValues> element_shape_quadrature(ElementId e, int order) const;
  [[nodiscard]] std::vector<EdgePoint> edge_quadrature(ElementId e, int local_edge,
                                                       int order) const;
  /// Reference coordinates of a point on a local edge, s in [-1, 1].
  [[nodiscard]] static Vec2 edge_reference_point(int local_edge, double s);

  [[nodiscard]] double element_area(ElementId e, int order = 4) const;
  /// Characteristic size sqrt(area).
  [[nodiscard]] double element_size(ElementId e) const;

  /// Refines every marked element once, then applies closure refinement until adjacent
  /// elements differ by at most one level. Region flags are inherited by children.
  [[nodiscard]] QuadtreeMesh refine(std::span<const ElementId> marked) const;
  [[nodiscard]] QuadtreeMesh refine_uniform() const;

  /// Marks a region bit on the given elements (applied to the returned copy).
  [[nodiscard]] QuadtreeMesh with_region(std::span<const ElementId> elements, int bit) const;
  /// Marks a region bit on every element whose parameter box lies inside the given box.
  [[nodiscard]] QuadtreeMesh with_parameter_region(double xi_lo, double eta_lo, double xi_hi,
                                                   double eta_hi, int bit) const;

  /// Leaf edge-neighbour covering the cell across local edge k, or -1 on the boundary.
  /// When the neighbour side is finer, returns one of the finer elements.
  [[nodiscard]] std::vector<ElementId> edge_neighbours(ElementId e, int local_edge) const;

  /// Plain-text tables: "node id x y", "element id level n0 n1 n2 n3 regions",
  /// "constraint slave master_a master_b wa wb", "boundary element edge tag".
  void write_text(std::ostream &os) const;

private:
  QuadtreeMesh() = default;
  void build_from_leaves(std::vector<Element> leaves);

  std::shared_ptr<const GeometryMap> geometry_;
  int nx_ = 1;
  int ny_ = 1;
  std::vector<Vec2> coords_;
  std::vector<std::pair<std::int64_t, std::int64_t>> lattice_;
  std::vector<Element> elements_;
  std::vector<HangingConstraint> hanging_;
  std::vector<int> hanging_index_;
  std::vector<std::vector<std::pair<NodeId, double>>> expansion_;
  std::vector<BoundaryEdge> boundary_;
};

/// Set of elements sharing a vertex node, used for stress recovery.
struct Patch
{
  NodeId vertex = -1;
  /// Elements with the vertex as a corner, followed by elements whose blended field
  /// depends on the vertex through a hanging-node corner.
  std::vector<ElementId> elements;
  /// Boundary edges of those elements that touch the patch vertex's element set.
  std::vector<BoundaryEdge> boundary_pieces;
  Vec2 centre;
  double half_width = 1.0;
};

[[nodiscard]] std::vector<Patch> build_patches(const QuadtreeMesh &mesh);

} // namespace goalfem
