#include "goalfem/mesh.hpp"

#include "goalfem/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

namespace goalfem
{

// ---------------------------------------------------------------------------------------------
// GeometryMap

GeometryMap GeometryMap::annulus_quarter(double inner_radius, double outer_radius)
{
  if (!(inner_radius > 0.0) || !(inner_radius < outer_radius))
  {
    throw Error("GeometryMap::annulus_quarter: need 0 < a < b");
  }
  GeometryMap g;
  g.kind_ = Kind::annulus_quarter;
  g.a_ = inner_radius;
  g.b_ = outer_radius;
  return g;
}

GeometryMap GeometryMap::polygon_identity(std::vector<Vec2> vertices,
                                          std::vector<std::string> edge_tags)
{
  if (vertices.size() < 3 || edge_tags.size() != vertices.size())
  {
    throw Error("GeometryMap::polygon_identity: need >= 3 vertices and one tag per edge");
  }
  GeometryMap g;
  g.kind_ = Kind::polygon_identity;
  g.lo_ = vertices.front();
  g.hi_ = vertices.front();
  for (const auto &v : vertices)
  {
    g.lo_ = g.lo_.cwiseMin(v);
    g.hi_ = g.hi_.cwiseMax(v);
  }
  if (!((g.hi_ - g.lo_).minCoeff() > 0.0))
  {
    throw Error("GeometryMap::polygon_identity: degenerate bounding box");
  }
  g.vertices_ = std::move(vertices);
  g.tags_ = std::move(edge_tags);
  if (!(g.area() > 0.0))
  {
    throw Error("GeometryMap::polygon_identity: vertices must be counter-clockwise");
  }
  return g;
}

GeometryMap GeometryMap::rectangle(const Vec2 &lo, const Vec2 &hi)
{
  return polygon_identity({lo, {hi.x(), lo.y()}, hi, {lo.x(), hi.y()}},
                          {"bottom", "right", "top", "left"});
}

GeometryMap GeometryMap::lshape(double leg)
{
  if (!(leg > 0.0))
  {
    throw Error("GeometryMap::lshape: leg length must be positive");
  }
  const double L = leg;
  return polygon_identity({{0.0, 0.0}, {L, 0.0}, {L, L}, {-L, L}, {-L, -L}, {0.0, -L}},
                          {"face", "outer", "outer", "outer", "outer", "face"});
}

Vec2 GeometryMap::map(double xi, double eta) const
{
  if (kind_ == Kind::annulus_quarter)
  {
    const double r = a_ + (b_ - a_) * xi;
    const double th = 0.5 * std::numbers::pi * eta;
    return {r * std::cos(th), r * std::sin(th)};
  }
  return {lo_.x() + (hi_.x() - lo_.x()) * xi, lo_.y() + (hi_.y() - lo_.y()) * eta};
}

Mat2 GeometryMap::jacobian(double xi, double eta) const
{
  Mat2 J;
  if (kind_ == Kind::annulus_quarter)
  {
    const double r = a_ + (b_ - a_) * xi;
    const double th = 0.5 * std::numbers::pi * eta;
    const double dth = 0.5 * std::numbers::pi;
    J << (b_ - a_) * std::cos(th), -r * std::sin(th) * dth, (b_ - a_) * std::sin(th),
      r * std::cos(th) * dth;
    return J;
  }
  J << hi_.x() - lo_.x(), 0.0, 0.0, hi_.y() - lo_.y();
  return J;
}

namespace
{

bool point_in_polygon(const std::vector<Vec2> &poly, const Vec2 &p)
{
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
  {
    const Vec2 &a = poly[i];
    const Vec2 &b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()))
    {
      const double xc = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < xc)
      {
        inside = !inside;
      }
    }
  }
  return inside;
}

double distance_to_segment(const Vec2 &p, const Vec2 &a, const Vec2 &b)
{
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

} // namespace

bool GeometryMap::parameter_point_inside(double xi, double eta) const
{
  if (xi < 0.0 || xi > 1.0 || eta < 0.0 || eta > 1.0)
  {
    return false;
  }
  if (kind_ == Kind::annulus_quarter)
  {
    return true;
  }
  return point_in_polygon(vertices_, map(xi, eta));
}

bool GeometryMap::contains(const Vec2 &x, double tol) const
{
  if (kind_ == Kind::annulus_quarter)
  {
    const double r = x.norm();
    return r >= a_ - tol && r <= b_ + tol && x.x() >= -tol && x.y() >= -tol;
  }
  if (point_in_polygon(vertices_, x))
  {
    return true;
  }
  for (std::size_t k = 0; k < vertices_.size(); ++k)
  {
    if (distance_to_segment(x, vertices_[k], vertices_[(k + 1) % vertices_.size()]) <= tol)
    {
      return true;
    }
  }
  return false;
}

std::string GeometryMap::boundary_tag(double xi, double eta) const
{
  constexpr double tol = 1e-12;
  if (kind_ == Kind::annulus_quarter)
  {
    if (std::abs(xi) < tol)
    {
      return "inner";
    }
    if (std::abs(xi - 1.0) < tol)
    {
      return "outer";
    }
    if (std::abs(eta) < tol)
    {
      return "sym_y0";
    }
    if (std::abs(eta - 1.0) < tol)
    {
      return "sym_x0";
    }
    throw Error("GeometryMap::boundary_tag: point is not on the annulus boundary");
  }
  const Vec2 p = map(xi, eta);
  const double scale = (hi_ - lo_).maxCoeff();
  for (std::size_t k = 0; k < vertices_.size(); ++k)
  {
    const Vec2 &a = vertices_[k];
    const Vec2 &b = vertices_[(k + 1) % vertices_.size()];
    if (distance_to_segment(p, a, b) < 1e-10 * scale)
    {
      return tags_[k];
    }
  }
  throw Error("GeometryMap::boundary_tag: point is not on the polygon boundary");
}

double GeometryMap::area() const
{
  if (kind_ == Kind::annulus_quarter)
  {
    return 0.25 * std::numbers::pi * (b_ * b_ - a_ * a_);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < vertices_.size(); ++k)
  {
    const Vec2 &a = vertices_[k];
    const Vec2 &b = vertices_[(k + 1) % vertices_.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

// ---------------------------------------------------------------------------------------------
// Quadtree bookkeeping

namespace
{

struct CellKey
{
  int level;
  std::int64_t i;
  std::int64_t j;
  bool operator==(const CellKey &) const = default;
};

struct CellKeyHash
{
  std::size_t operator()(const CellKey &k) const noexcept
  {
    std::size_t h = std::hash<std::int64_t>{}(k.i);
    h ^= std::hash<std::int64_t>{}(k.j) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<int>{}(k.level) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

struct LatticeHash
{
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t> &p) const noexcept
  {
    return std::hash<std::int64_t>{}(p.first * 0x100000001b3LL ^ p.second);
  }
};

constexpr std::array<std::array<int, 2>, 4> kCornerOffsets{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
// Neighbour direction across local edge k.
constexpr std::array<std::array<int, 2>, 4> kEdgeDirs{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

class CellIndex
{
public:
  CellIndex(const GeometryMap &geom, int nx, int ny) : geom_(geom), nx_(nx), ny_(ny)
  {
    active_.resize(static_cast<std::size_t>(nx) * ny);
    for (int cj = 0; cj < ny; ++cj)
    {
      for (int ci = 0; ci < nx; ++ci)
      {
        active_[cj * nx + ci] =
          geom.parameter_point_inside((ci + 0.5) / nx, (cj + 0.5) / ny);
      }
    }
  }

  [[nodiscard]] bool cell_in_domain(int level, std::int64_t i, std::int64_t j) const
  {
    const std::int64_t n = std::int64_t{1} << level;
    if (i < 0 || j < 0 || i >= nx_ * n || j >= ny_ * n)
    {
      return false;
    }
    return active_[(j >> level) * nx_ + (i >> level)];
  }

  [[nodiscard]] bool root_active(int ci, int cj) const { return active_[cj * nx_ + ci]; }

private:
  const GeometryMap &geom_;
  int nx_;
  int ny_;
  std::vector<bool> active_;
};

// Finds the leaf covering cell (level, i, j), returning its level, or -1 if the cell is
// subdivided further (or not present).
int covering_level(const std::unordered_map<CellKey, int, CellKeyHash> &leaves, int level,
                   std::int64_t i, std::int64_t j)
{
  for (int l = level; l >= 0; --l)
  {
    const int shift = level - l;
    if (leaves.count({l, i >> shift, j >> shift}))
    {
      return l;
    }
  }
  return -1;
}

} // namespace

QuadtreeMesh::QuadtreeMesh(std::shared_ptr<const GeometryMap> geometry, int nx, int ny)
  : geometry_(std::move(geometry)), nx_(nx), ny_(ny)
{
  if (!geometry_)
  {
    throw Error("QuadtreeMesh: null geometry");
  }
  if (nx < 1 || ny < 1)
  {
    throw Error("QuadtreeMesh: nx and ny must be >= 1");
  }
  CellIndex index(*geometry_, nx, ny);
  std::vector<Element> leaves;
  for (int cj = 0; cj < ny; ++cj)
  {
    for (int ci = 0; ci < nx; ++ci)
    {
      if (index.root_active(ci, cj))
      {
        Element e;
        e.level = 0;
        e.i = ci;
        e.j = cj;
        leaves.push_back(e);
      }
    }
  }
  if (leaves.empty())
  {
    throw Error("QuadtreeMesh: geometry contains no active root cells");
  }
  build_from_leaves(std::move(leaves));
}

void QuadtreeMesh::build_from_leaves(std::vector<Element> leaves)
{
  elements_ = std::move(leaves);
  CellIndex index(*geometry_, nx_, ny_);

  // Collect corner lattice points in a deterministic order.
  std::vector<std::pair<std::int64_t, std::int64_t>> lattice;
  lattice.reserve(elements_.size() * 4);
  for (const auto &e : elements_)
  {
    const int shift = max_level - e.level;
    for (const auto &off : kCornerOffsets)
    {
      lattice.emplace_back((e.i + off[0]) << shift, (e.j + off[1]) << shift);
    }
  }
  std::sort(lattice.begin(), lattice.end(), [](const auto &a, const auto &b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  lattice.erase(std::unique(lattice.begin(), lattice.end()), lattice.end());
  lattice_ = lattice;

  std::unordered_map<std::pair<std::int64_t, std::int64_t>, NodeId, LatticeHash> node_of;
  node_of.reserve(lattice.size() * 2);
  coords_.resize(lattice.size());
  const double sx = static_cast<double>(nx_) * static_cast<double>(std::int64_t{1} << max_level);
  const double sy = static_cast<double>(ny_) * static_cast<double>(std::int64_t{1} << max_level);
  for (std::size_t n = 0; n < lattice.size(); ++n)
  {
    node_of[lattice[n]] = static_cast<NodeId>(n);
    coords_[n] = geometry_->map(lattice[n].first / sx, lattice[n].second / sy);
  }

  for (auto &e : elements_)
  {
    const int shift = max_level - e.level;
    for (int c = 0; c < 4; ++c)
    {
      e.nodes[c] =
        node_of.at({(e.i + kCornerOffsets[c][0]) << shift, (e.j + kCornerOffsets[c][1]) << shift});
    }
  }

  // Hanging nodes sit at the midpoint of a coarser element's edge.
  hanging_.clear();
  hanging_index_.assign(coords_.size(), -1);
  for (const auto &e : elements_)
  {
    if (e.level >= max_level)
    {
      continue;
    }
    const int shift = max_level - e.level - 1;
    for (int k = 0; k < 4; ++k)
    {
      const auto &c0 = kCornerOffsets[k];
      const auto &c1 = kCornerOffsets[(k + 1) % 4];
      const std::int64_t mx = (2 * e.i + c0[0] + c1[0]) << shift;
      const std::int64_t my = (2 * e.j + c0[1] + c1[1]) << shift;
      auto it = node_of.find({mx, my});
      if (it != node_of.end() && hanging_index_[it->second] < 0)
      {
        HangingConstraint hc;
        hc.slave = it->second;
        hc.master_a = e.nodes[k];
        hc.master_b = e.nodes[(k + 1) % 4];
        hanging_index_[hc.slave] = static_cast<int>(hanging_.size());
        hanging_.push_back(hc);
      }
    }
  }
  std::sort(hanging_.begin(), hanging_.end(),
            [](const auto &a, const auto &b) { return a.slave < b.slave; });
  for (std::size_t h = 0; h < hanging_.size(); ++h)
  {
    hanging_index_[hanging_[h].slave] = static_cast<int>(h);
  }

  // Recursive expansion of every node in terms of independent nodes.
  expansion_.assign(coords_.size(), {});
  std::vector<int> state(coords_.size(), 0);
  std::function<void(NodeId)> expand = [&](NodeId n) {
    if (state[n] == 2)
    {
      return;
    }
    if (state[n] == 1)
    {
      throw Error("QuadtreeMesh: cyclic hanging-node constraints");
    }
    state[n] = 1;
    const int h = hanging_index_[n];
    if (h < 0)
    {
      expansion_[n] = {{n, 1.0}};
    }
    else
    {
      const auto &hc = hanging_[h];
      expand(hc.master_a);
      expand(hc.master_b);
      std::map<NodeId, double> acc;
      for (const auto &[m, w] : expansion_[hc.master_a])
      {
        acc[m] += hc.weight_a * w;
      }
      for (const auto &[m, w] : expansion_[hc.master_b])
      {
        acc[m] += hc.weight_b * w;
      }
      expansion_[n].assign(acc.begin(), acc.end());
    }
    state[n] = 2;
  };
  for (NodeId n = 0; n < static_cast<NodeId>(coords_.size()); ++n)
  {
    expand(n);
  }

  // Boundary edges: neighbour cell outside the domain.
  boundary_.clear();
  for (ElementId id = 0; id < static_cast<ElementId>(elements_.size()); ++id)
  {
    const auto &e = elements_[id];
    for (int k = 0; k < 4; ++k)
    {
      if (!index.cell_in_domain(e.level, e.i + kEdgeDirs[k][0], e.j + kEdgeDirs[k][1]))
      {
        const auto box = parameter_box(id);
        const Vec2 ref = edge_reference_point(k, 0.0);
        const double xi = box[0] + 0.5 * (ref.x() + 1.0) * (box[2] - box[0]);
        const double eta = box[1] + 0.5 * (ref.y() + 1.0) * (box[3] - box[1]);
        boundary_.push_back({id, k, geometry_->boundary_tag(xi, eta)});
      }
    }
  }
}

std::size_t QuadtreeMesh::num_vertex_nodes() const
{
  return coords_.size() - hanging_.size();
}

std::array<double, 4> QuadtreeMesh::parameter_box(ElementId id) const
{
  const auto &e = elements_[id];
  const double n = static_cast<double>(std::int64_t{1} << e.level);
  return {e.i / (nx_ * n), e.j / (ny_ * n), (e.i + 1) / (nx_ * n), (e.j + 1) / (ny_ * n)};
}

Vec2 QuadtreeMesh::map_point(ElementId id, const Vec2 &ref) const
{
  const auto box = parameter_box(id);
  return geometry_->map(box[0] + 0.5 * (ref.x() + 1.0) * (box[2] - box[0]),
                        box[1] + 0.5 * (ref.y() + 1.0) * (box[3] - box[1]));
}

Mat2 QuadtreeMesh::element_jacobian(ElementId id, const Vec2 &ref) const
{
  const auto box = parameter_box(id);
  Mat2 J = geometry_->jacobian(box[0] + 0.5 * (ref.x() + 1.0) * (box[2] - box[0]),
                               box[1] + 0.5 * (ref.y() + 1.0) * (box[3] - box[1]));
  J.col(0) *= 0.5 * (box[2] - box[0]);
  J.col(1) *= 0.5 * (box[3] - box[1]);
  return J;
}

ShapeValues QuadtreeMesh::shape_values(ElementId id, const Vec2 &ref) const
{
  static constexpr std::array<double, 4> sa{-1.0, 1.0, 1.0, -1.0};
  static constexpr std::array<double, 4> ta{-1.0, -1.0, 1.0, 1.0};
  ShapeValues v;
  v.x = map_point(id, ref);
  v.weight = 1.0;
  const Mat2 J = element_jacobian(id, ref);
  const double det = J.determinant();
  if (!(det > 0.0))
  {
    throw Error("QuadtreeMesh: nonpositive Jacobian in element " + std::to_string(id));
  }
  const Mat2 JinvT = J.inverse().transpose();
  for (int a = 0; a < 4; ++a)
  {
    v.N[a] = 0.25 * (1.0 + sa[a] * ref.x()) * (1.0 + ta[a] * ref.y());
    const Vec2 dref(0.25 * sa[a] * (1.0 + ta[a] * ref.y()), 0.25 * ta[a] * (1.0 + sa[a] * ref.x()));
    v.dN[a] = JinvT * dref;
  }
  return v;
}

std::vector<QuadPoint> QuadtreeMesh::element_quadrature(ElementId id, int order) const
{
  if (order < 1)
  {
    throw Error("element_quadrature: order must be >= 1");
  }
  const auto &rule = gauss_legendre(order);
  std::vector<QuadPoint> pts;
  pts.reserve(static_cast<std::size_t>(order) * order);
  for (int b = 0; b < order; ++b)
  {
    for (int a = 0; a < order; ++a)
    {
      const Vec2 ref(rule.points[a], rule.points[b]);
      const double det = element_jacobian(id, ref).determinant();
      if (!(det > 0.0))
      {
        throw Error("element_quadrature: nonpositive Jacobian in element " +
                    std::to_string(id));
      }
      pts.push_back({map_point(id, ref), rule.weights[a] * rule.weights[b] * det, ref});
    }
  }
  return pts;
}

std::vector<ShapeValues> QuadtreeMesh::element_shape_quadrature(ElementId id, int order) const
{
  const auto &rule = gauss_legendre(order);
  std::vector<ShapeValues> pts;
  pts.reserve(static_cast<std::size_t>(order) * order);
  for (int b = 0; b < order; ++b)
  {
    for (int a = 0; a < order; ++a)
    {
      const Vec2 ref(rule.points[a], rule.points[b]);
      ShapeValues v = shape_values(id, ref);
      v.weight = rule.weights[a] * rule.weights[b] * element_jacobian(id, ref).determinant();
      pts.push_back(v);
    }
  }
  return pts;
}

Vec2 QuadtreeMesh::edge_reference_point(int local_edge, double s)
{
  switch (local_edge)
  {
  case 0:
    return {s, -1.0};
  case 1:
    return {1.0, s};
  case 2:
    return {-s, 1.0};
  case 3:
    return {-1.0, -s};
  default:
    throw Error("edge_reference_point: local edge must be 0..3");
  }
}

std::vector<EdgePoint> QuadtreeMesh::edge_quadrature(ElementId id, int local_edge,
                                                     int order) const
{
  static constexpr std::array<std::array<double, 2>, 4> dref{
    {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};
  const auto &rule = gauss_legendre(order);
  std::vector<EdgePoint> pts;
  pts.reserve(order);
  for (int a = 0; a < order; ++a)
  {
    const double s = rule.points[a];
    const Vec2 ref = edge_reference_point(local_edge, s);
    const Vec2 tangent =
      element_jacobian(id, ref) * Vec2(dref[local_edge][0], dref[local_edge][1]);
    const double len = tangent.norm();
    pts.push_back({map_point(id, ref), rule.weights[a] * len,
                   Vec2(tangent.y(), -tangent.x()) / len, s});
  }
  return pts;
}

double QuadtreeMesh::element_area(ElementId id, int order) const
{
  double a = 0.0;
  for (const auto &q : element_quadrature(id, order))
  {
    a += q.weight;
  }
  return a;
}

double QuadtreeMesh::element_size(ElementId id) const
{
  return std::sqrt(element_area(id, 2));
}

QuadtreeMesh QuadtreeMesh::refine(std::span<const ElementId> marked) const
{
  CellIndex index(*geometry_, nx_, ny_);
  std::unordered_map<CellKey, int, CellKeyHash> leaves;
  leaves.reserve(elements_.size() * 4);
  for (const auto &e : elements_)
  {
    leaves[{e.level, e.i, e.j}] = 1;
  }

  std::vector<CellKey> work;
  auto split = [&](const CellKey &k) {
    if (k.level >= max_level)
    {
      throw Error("QuadtreeMesh::refine: maximum quadtree depth exceeded");
    }
    if (leaves.erase(k) == 0)
    {
      return;
    }
    for (const auto &off : kCornerOffsets)
    {
      const CellKey c{k.level + 1, 2 * k.i + off[0], 2 * k.j + off[1]};
      leaves[c] = 1;
      work.push_back(c);
    }
  };

  for (ElementId id : marked)
  {
    if (id < 0 || id >= static_cast<ElementId>(elements_.size()))
    {
      throw Error("QuadtreeMesh::refine: marked element out of range");
    }
    const auto &e = elements_[id];
    split({e.level, e.i, e.j});
  }

  // Closure: any edge neighbour more than one level coarser is split.
  while (!work.empty())
  {
    const CellKey c = work.back();
    work.pop_back();
    if (!leaves.count(c))
    {
      continue;
    }
    for (const auto &dir : kEdgeDirs)
    {
      const std::int64_t ni = c.i + dir[0];
      const std::int64_t nj = c.j + dir[1];
      if (!index.cell_in_domain(c.level, ni, nj))
      {
        continue;
      }
      const int l = covering_level(leaves, c.level, ni, nj);
      if (l >= 0 && l < c.level - 1)
      {
        const int shift = c.level - l;
        split({l, ni >> shift, nj >> shift});
        work.push_back(c);
      }
    }
  }

  // Deterministic order: each old element is replaced by its descendant leaves (Morton).
  std::vector<Element> out;
  out.reserve(leaves.size());
  std::function<void(const CellKey &, std::uint32_t)> emit = [&](const CellKey &k,
                                                                  std::uint32_t regions) {
    if (leaves.count(k))
    {
      Element e;
      e.level = k.level;
      e.i = k.i;
      e.j = k.j;
      e.regions = regions;
      out.push_back(e);
      return;
    }
    for (const auto &off : kCornerOffsets)
    {
      emit({k.level + 1, 2 * k.i + off[0], 2 * k.j + off[1]}, regions);
    }
  };
  for (const auto &e : elements_)
  {
    emit({e.level, e.i, e.j}, e.regions);
  }

  QuadtreeMesh m;
  m.geometry_ = geometry_;
  m.nx_ = nx_;
  m.ny_ = ny_;
  m.build_from_leaves(std::move(out));
  return m;
}

QuadtreeMesh QuadtreeMesh::refine_uniform() const
{
  std::vector<ElementId> all(elements_.size());
  for (std::size_t e = 0; e < all.size(); ++e)
  {
    all[e] = static_cast<ElementId>(e);
  }
  return refine(all);
}

QuadtreeMesh QuadtreeMesh::with_region(std::span<const ElementId> elements, int bit) const
{
  if (bit < 0 || bit >= 32)
  {
    throw Error("with_region: bit must be in [0, 32)");
  }
  QuadtreeMesh m = *this;
  for (ElementId e : elements)
  {
    m.elements_.at(e).regions |= (1u << bit);
  }
  return m;
}

QuadtreeMesh QuadtreeMesh::with_parameter_region(double xi_lo, double eta_lo, double xi_hi,
                                                 double eta_hi, int bit) const
{
  std::vector<ElementId> sel;
  constexpr double tol = 1e-12;
  for (ElementId e = 0; e < static_cast<ElementId>(elements_.size()); ++e)
  {
    const auto b = parameter_box(e);
    if (b[0] >= xi_lo - tol && b[1] >= eta_lo - tol && b[2] <= xi_hi + tol &&
        b[3] <= eta_hi + tol)
    {
      sel.push_back(e);
    }
  }
  if (sel.empty())
  {
    throw Error("with_parameter_region: region contains no elements");
  }
  return with_region(sel, bit);
}

std::vector<ElementId> QuadtreeMesh::edge_neighbours(ElementId id, int local_edge) const
{
  // Linear scan over a lattice lookup would need state; build a small map on demand.
  std::unordered_map<CellKey, int, CellKeyHash> leaves;
  leaves.reserve(elements_.size());
  for (ElementId k = 0; k < static_cast<ElementId>(elements_.size()); ++k)
  {
    leaves[{elements_[k].level, elements_[k].i, elements_[k].j}] = k;
  }
  const auto &e = elements_[id];
  const std::int64_t ni = e.i + kEdgeDirs[local_edge][0];
  const std::int64_t nj = e.j + kEdgeDirs[local_edge][1];
  CellIndex index(*geometry_, nx_, ny_);
  if (!index.cell_in_domain(e.level, ni, nj))
  {
    return {};
  }
  const int l = covering_level(leaves, e.level, ni, nj);
  if (l >= 0)
  {
    const int shift = e.level - l;
    return {leaves.at({l, ni >> shift, nj >> shift})};
  }
  // Finer side: collect descendants adjacent to the shared edge.
  std::vector<ElementId> out;
  std::function<void(const CellKey &)> descend = [&](const CellKey &k) {
    auto it = leaves.find(k);
    if (it != leaves.end())
    {
      out.push_back(it->second);
      return;
    }
    if (k.level >= max_level)
    {
      return;
    }
    const int opposite = (local_edge + 2) % 4;
    for (const auto &off : kCornerOffsets)
    {
      const CellKey c{k.level + 1, 2 * k.i + off[0], 2 * k.j + off[1]};
      // Keep children touching the edge facing the original element.
      const bool touches = (opposite == 0 && off[1] == 0) || (opposite == 1 && off[0] == 1) ||
                           (opposite == 2 && off[1] == 1) || (opposite == 3 && off[0] == 0);
      if (touches)
      {
        descend(c);
      }
    }
  };
  descend({e.level, ni, nj});
  return out;
}

void QuadtreeMesh::write_text(std::ostream &os) const
{
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os.setf(std::ios::scientific);
  os.precision(17);
  os << "# nodes: id x y\n";
  for (std::size_t n = 0; n < coords_.size(); ++n)
  {
    os << "node " << n << ' ' << coords_[n].x() << ' ' << coords_[n].y() << '\n';
  }
  os << "# elements: id level n0 n1 n2 n3 regions\n";
  for (std::size_t e = 0; e < elements_.size(); ++e)
  {
    const auto &el = elements_[e];
    os << "element " << e << ' ' << el.level << ' ' << el.nodes[0] << ' ' << el.nodes[1] << ' '
       << el.nodes[2] << ' ' << el.nodes[3] << ' ' << el.regions << '\n';
  }
  os << "# constraints: id slave master_a master_b weight_a weight_b\n";
  for (std::size_t h = 0; h < hanging_.size(); ++h)
  {
    const auto &hc = hanging_[h];
    os << "constraint " << h << ' ' << hc.slave << ' ' << hc.master_a << ' ' << hc.master_b
       << ' ' << hc.weight_a << ' ' << hc.weight_b << '\n';
  }
  os << "# boundary: id element local_edge tag\n";
  for (std::size_t b = 0; b < boundary_.size(); ++b)
  {
    os << "boundary " << b << ' ' << boundary_[b].element << ' ' << boundary_[b].local_edge
       << ' ' << boundary_[b].tag << '\n';
  }
  os.flags(old_flags);
  os.precision(old_prec);
}

// ---------------------------------------------------------------------------------------------
// Patches

std::vector<Patch> build_patches(const QuadtreeMesh &mesh)
{
  const std::size_t nn = mesh.num_nodes();
  std::vector<std::vector<ElementId>> direct(nn);
  std::vector<std::vector<ElementId>> indirect(nn);
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    for (NodeId n : mesh.element(e).nodes)
    {
      if (!mesh.is_hanging(n))
      {
        direct[n].push_back(e);
      }
      else
      {
        for (const auto &[m, w] : mesh.node_expansion(n))
        {
          indirect[m].push_back(e);
        }
      }
    }
  }

  // Boundary edges indexed by element.
  std::vector<std::vector<const BoundaryEdge *>> edges_of(mesh.num_elements());
  for (const auto &be : mesh.boundary_edges())
  {
    edges_of[be.element].push_back(&be);
  }

  std::vector<Patch> patches;
  for (NodeId n = 0; n < static_cast<NodeId>(nn); ++n)
  {
    if (mesh.is_hanging(n) || direct[n].empty())
    {
      continue;
    }
    Patch p;
    p.vertex = n;
    p.centre = mesh.node(n);
    p.elements = direct[n];
    for (ElementId e : indirect[n])
    {
      if (std::find(p.elements.begin(), p.elements.end(), e) == p.elements.end())
      {
        p.elements.push_back(e);
      }
    }
    double hw = 0.0;
    for (ElementId e : p.elements)
    {
      const auto &el = mesh.element(e);
      for (NodeId m : el.nodes)
      {
        hw = std::max(hw, (mesh.node(m) - p.centre).cwiseAbs().maxCoeff());
      }
      for (const BoundaryEdge *be : edges_of[e])
      {
        const NodeId a = el.nodes[be->local_edge];
        const NodeId b = el.nodes[(be->local_edge + 1) % 4];
        auto touches = [&](NodeId x) {
          if (x == n)
          {
            return true;
          }
          if (!mesh.is_hanging(x))
          {
            return false;
          }
          for (const auto &[m, w] : mesh.node_expansion(x))
          {
            if (m == n)
            {
              return true;
            }
          }
          return false;
        };
        if (touches(a) || touches(b))
        {
          p.boundary_pieces.push_back(*be);
        }
      }
    }
    p.half_width = hw > 0.0 ? hw : 1.0;
    patches.push_back(std::move(p));
  }
  return patches;
}

} // namespace goalfem
