#include "goalfem/recovery.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace goalfem
{

// ---------------------------------------------------------------------------------------------
// PatchPolynomial

Eigen::VectorXd PatchPolynomial::basis(const Vec2 &x) const
{
  const Vec2 t = (x - centre) / scale;
  Eigen::VectorXd b(basis_size(degree));
  b[0] = 1.0;
  if (degree >= 1)
  {
    b[1] = t.x();
    b[2] = t.y();
  }
  if (degree >= 2)
  {
    b[3] = t.x() * t.x();
    b[4] = t.x() * t.y();
    b[5] = t.y() * t.y();
  }
  return b;
}

Eigen::VectorXd PatchPolynomial::basis_dx(const Vec2 &x) const
{
  const Vec2 t = (x - centre) / scale;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(basis_size(degree));
  if (degree >= 1)
  {
    b[1] = 1.0 / scale;
  }
  if (degree >= 2)
  {
    b[3] = 2.0 * t.x() / scale;
    b[4] = t.y() / scale;
  }
  return b;
}

Eigen::VectorXd PatchPolynomial::basis_dy(const Vec2 &x) const
{
  const Vec2 t = (x - centre) / scale;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(basis_size(degree));
  if (degree >= 1)
  {
    b[2] = 1.0 / scale;
  }
  if (degree >= 2)
  {
    b[4] = t.x() / scale;
    b[5] = 2.0 * t.y() / scale;
  }
  return b;
}

std::array<Eigen::VectorXd, 3> PatchPolynomial::basis_second() const
{
  const int n = basis_size(degree);
  std::array<Eigen::VectorXd, 3> d{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                                   Eigen::VectorXd::Zero(n)};
  if (degree >= 2)
  {
    const double s2 = scale * scale;
    d[0][3] = 2.0 / s2;
    d[1][4] = 1.0 / s2;
    d[2][5] = 2.0 / s2;
  }
  return d;
}

Vec3 PatchPolynomial::value(const Vec2 &x) const
{
  return coeffs * basis(x);
}

StressGradient PatchPolynomial::gradient(const Vec2 &x) const
{
  return {coeffs * basis_dx(x), coeffs * basis_dy(x)};
}

// ---------------------------------------------------------------------------------------------
// Constraint rows

namespace
{

ConstraintRow make_row(ConstraintKind kind, int total, const Vec2 &x)
{
  ConstraintRow r;
  r.kind = kind;
  r.row = Eigen::VectorXd::Zero(total);
  r.point = x;
  return r;
}

bool aligned(std::span<const Vec2> pts, double tol)
{
  for (std::size_t k = 2; k < pts.size(); ++k)
  {
    const Vec2 a = pts[1] - pts[0];
    const Vec2 b = pts[k] - pts[0];
    if (std::abs(a.x() * b.y() - a.y() * b.x()) > tol)
    {
      return false;
    }
  }
  return true;
}

} // namespace

std::vector<ConstraintRow>
internal_equilibrium_rows(const PatchPolynomial &poly, std::span<const Vec2> points,
                          const std::function<Vec2(const Vec2 &)> &b_hat, int offset,
                          int total_unknowns)
{
  const int nb = PatchPolynomial::basis_size(poly.degree);
  const std::size_t needed = poly.degree >= 2 ? 3 : 1;
  if (points.size() < needed)
  {
    throw Error("internal_equilibrium_rows: not enough collocation points");
  }
  if (poly.degree >= 2 && aligned(points, 1e-10 * poly.scale * poly.scale))
  {
    throw Error("internal_equilibrium_rows: collocation points are aligned");
  }
  std::vector<ConstraintRow> rows;
  for (const Vec2 &x : points)
  {
    const Eigen::VectorXd bx = poly.basis_dx(x) * poly.scale;
    const Eigen::VectorXd by = poly.basis_dy(x) * poly.scale;
    const Vec2 b = b_hat ? b_hat(x) : Vec2::Zero();
    // d sxx/dx + d sxy/dy + bx = 0
    auto rx = make_row(ConstraintKind::internal, total_unknowns, x);
    rx.row.segment(offset, nb) = bx;
    rx.row.segment(offset + 2 * nb, nb) = by;
    rx.rhs = -b.x() * poly.scale;
    // d sxy/dx + d syy/dy + by = 0
    auto ry = make_row(ConstraintKind::internal, total_unknowns, x);
    ry.row.segment(offset + 2 * nb, nb) = bx;
    ry.row.segment(offset + nb, nb) = by;
    ry.rhs = -b.y() * poly.scale;
    rows.push_back(std::move(rx));
    rows.push_back(std::move(ry));
  }
  return rows;
}

std::vector<ConstraintRow>
boundary_equilibrium_rows(const PatchPolynomial &poly, const Vec2 &point, const Vec2 &normal,
                          std::span<const Vec2> directions, const Vec2 &traction, int offset,
                          int total_unknowns)
{
  const int nb = PatchPolynomial::basis_size(poly.degree);
  const Eigen::Matrix<double, 2, 3> G = UnitNormal(normal).G();
  const Eigen::VectorXd p = poly.basis(point);
  std::vector<ConstraintRow> rows;
  for (const Vec2 &d : directions)
  {
    const Eigen::RowVector3d w = d.transpose() * G;
    auto r = make_row(ConstraintKind::boundary, total_unknowns, point);
    for (int c = 0; c < 3; ++c)
    {
      r.row.segment(offset + c * nb, nb) = w[c] * p;
    }
    r.rhs = d.dot(traction);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ConstraintRow> compatibility_rows(const PatchPolynomial &poly,
                                              std::span<const Vec2> points,
                                              const MaterialModel &material, int offset,
                                              int total_unknowns)
{
  std::vector<ConstraintRow> rows;
  if (poly.degree < 2)
  {
    return rows;
  }
  const int nb = PatchPolynomial::basis_size(poly.degree);
  const auto d2 = poly.basis_second();
  // d2/dy2 eps_xx + d2/dx2 eps_yy - d2/dxdy gamma_xy = 0 with eps = D^-1 sigma.
  const Mat3 &C = material.Dinv();
  const double s = material.youngs_modulus() * poly.scale * poly.scale;
  for (const Vec2 &x : points)
  {
    auto r = make_row(ConstraintKind::compatibility, total_unknowns, x);
    for (int c = 0; c < 3; ++c)
    {
      r.row.segment(offset + c * nb, nb) =
        s * (C(0, c) * d2[2] + C(1, c) * d2[0] - C(2, c) * d2[1]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------------------------
// Patch fit

namespace
{

struct EdgeSample
{
  Vec2 x;
  Vec2 normal;
};

EdgeSample edge_point(const QuadtreeMesh &mesh, ElementId e, int k, double s)
{
  static constexpr std::array<std::array<double, 2>, 4> dref{
    {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};
  const Vec2 ref = QuadtreeMesh::edge_reference_point(k, s);
  const Vec2 t = mesh.element_jacobian(e, ref) * Vec2(dref[k][0], dref[k][1]);
  return {mesh.map_point(e, ref), Vec2(t.y(), -t.x()).normalized()};
}

struct Segment
{
  ElementId element = -1;
  int edge = 0;
  NodeId n0 = -1;
  NodeId n1 = -1;
  double length = 0.0;
};

Segment make_segment(const QuadtreeMesh &mesh, ElementId e, int k)
{
  Segment s{e, k, mesh.element(e).nodes[k], mesh.element(e).nodes[(k + 1) % 4], 0.0};
  for (const auto &q : mesh.edge_quadrature(e, k, 4))
  {
    s.length += q.weight;
  }
  return s;
}

struct ChainPoint
{
  ElementId element;
  int edge;
  double s;
};

/// Points at arclength fractions (k + 1/2) / count along the chain formed by the segments.
std::vector<ChainPoint> chain_points(std::vector<Segment> segs, int count)
{
  // Order into a chain by endpoint matching, starting from an end when there is one.
  std::map<NodeId, int> degree;
  for (const auto &s : segs)
  {
    ++degree[s.n0];
    ++degree[s.n1];
  }
  std::vector<std::pair<Segment, bool>> ordered; // (segment, traversed forward)
  std::vector<bool> used(segs.size(), false);
  while (ordered.size() < segs.size())
  {
    int start = -1;
    NodeId at = -1;
    for (std::size_t i = 0; i < segs.size() && start < 0; ++i)
    {
      if (!used[i] && (degree[segs[i].n0] == 1 || degree[segs[i].n1] == 1))
      {
        start = static_cast<int>(i);
        at = degree[segs[i].n0] == 1 ? segs[i].n0 : segs[i].n1;
      }
    }
    if (start < 0)
    {
      for (std::size_t i = 0; i < segs.size(); ++i)
      {
        if (!used[i])
        {
          start = static_cast<int>(i);
          at = segs[i].n0;
          break;
        }
      }
    }
    int cur = start;
    while (cur >= 0)
    {
      used[cur] = true;
      const bool fwd = segs[cur].n0 == at;
      ordered.emplace_back(segs[cur], fwd);
      at = fwd ? segs[cur].n1 : segs[cur].n0;
      cur = -1;
      for (std::size_t i = 0; i < segs.size(); ++i)
      {
        if (!used[i] && (segs[i].n0 == at || segs[i].n1 == at))
        {
          cur = static_cast<int>(i);
          break;
        }
      }
    }
  }
  double total = 0.0;
  for (const auto &[s, f] : ordered)
  {
    total += s.length;
  }
  std::vector<ChainPoint> pts;
  for (int k = 0; k < count; ++k)
  {
    double target = (k + 0.5) / count * total;
    for (std::size_t i = 0; i < ordered.size(); ++i)
    {
      const auto &[s, fwd] = ordered[i];
      if (target <= s.length || i + 1 == ordered.size())
      {
        const double f = std::clamp(target / s.length, 0.0, 1.0);
        pts.push_back({s.element, s.edge, fwd ? -1.0 + 2.0 * f : 1.0 - 2.0 * f});
        break;
      }
      target -= s.length;
    }
  }
  return pts;
}

/// Traction directions left free by the Dirichlet data of a tag: empty when fully fixed.
enum class FreeKind
{
  full,
  free_x,
  free_y,
  tangential,
  none
};

FreeKind classify_tag(const DirichletSet &dirichlet, const std::string &tag)
{
  bool fx = false;
  bool fy = false;
  bool fn = false;
  for (const auto &c : dirichlet.edges)
  {
    if (c.tag != tag)
    {
      continue;
    }
    if (c.normal_frame)
    {
      fn = true;
    }
    else
    {
      fx = fx || c.fix_x;
      fy = fy || c.fix_y;
    }
  }
  if ((fx && fy) || (fn && (fx || fy)))
  {
    return FreeKind::none;
  }
  if (fn)
  {
    return FreeKind::tangential;
  }
  if (fx)
  {
    return FreeKind::free_y;
  }
  if (fy)
  {
    return FreeKind::free_x;
  }
  return FreeKind::full;
}

std::vector<Vec2> free_directions(FreeKind k, const Vec2 &n)
{
  switch (k)
  {
  case FreeKind::full:
    return {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  case FreeKind::free_x:
    return {Vec2(1.0, 0.0)};
  case FreeKind::free_y:
    return {Vec2(0.0, 1.0)};
  case FreeKind::tangential:
    return {Vec2(-n.y(), n.x())};
  case FreeKind::none:
    break;
  }
  return {};
}

bool in_closed_box(const std::array<double, 4> &box, double u, double v, double tol)
{
  return u >= box[0] - tol && u <= box[2] + tol && v >= box[1] - tol && v <= box[3] + tol;
}

/// Parameter-space endpoints of a local edge.
std::array<double, 4> edge_param(const std::array<double, 4> &b, int k)
{
  switch (k)
  {
  case 0:
    return {b[0], b[1], b[2], b[1]};
  case 1:
    return {b[2], b[1], b[2], b[3]};
  case 2:
    return {b[2], b[3], b[0], b[3]};
  default:
    return {b[0], b[3], b[0], b[1]};
  }
}

class SingularStress
{
public:
  SingularStress(const SingularSplit &split, const MaterialModel &mat)
    : split_(split), I_(CornerEigenfield::singular(split.corner, FractureMode::I, mat)),
      II_(split.K_II != 0.0 ? std::optional<CornerEigenfield>(CornerEigenfield::singular(
                                split.corner, FractureMode::II, mat))
                            : std::nullopt)
  {
  }

  [[nodiscard]] Vec3 operator()(const Vec2 &x) const
  {
    Vec3 s = Vec3::Zero();
    if ((x - split_.corner.apex).norm() == 0.0)
    {
      return s;
    }
    if (split_.K_I != 0.0)
    {
      s += split_.K_I * I_.stress(x);
    }
    if (II_)
    {
      s += split_.K_II * II_->stress(x);
    }
    return s;
  }

private:
  SingularSplit split_;
  CornerEigenfield I_;
  std::optional<CornerEigenfield> II_;
};

int side_of(const LoadSet &loads, const RecoveryOptions &options, std::uint32_t regions)
{
  if (options.mode != RecoveryMode::spr_cx || !loads.region_bit)
  {
    return 0;
  }
  return loads.acts_on(regions) ? 1 : 0;
}

Vec2 offset_divergence(const LoadSet &loads, const MaterialModel &mat, const Vec2 &x,
                       std::uint32_t regions, double step)
{
  if (!loads.has_initial_fields())
  {
    return Vec2::Zero();
  }
  const StressGradient g = loads.initial_offset_gradient(mat, x, regions, step);
  return {g.d_dx[0] + g.d_dy[2], g.d_dx[2] + g.d_dy[1]};
}

} // namespace

PatchFit fit_patch(const Patch &patch, const FEField &field, const DirichletSet &dirichlet,
                   const RecoveryOptions &options)
{
  if (patch.elements.empty())
  {
    throw Error("fit_patch: empty patch");
  }
  if (options.degree < 1 || options.degree > 2)
  {
    throw Error("fit_patch: recovery degree must be 1 or 2");
  }
  const QuadtreeMesh &mesh = field.mesh();
  const MaterialModel &mat = field.material();
  const LoadSet &loads = field.loads();
  const bool cx = options.mode == RecoveryMode::spr_cx;
  const int p = options.degree;
  const int nb = PatchPolynomial::basis_size(p);

  const bool split = cx && options.singular &&
                     (mesh.node(patch.vertex) - options.singular->corner.apex).norm() <
                       options.singular->radius;
  std::optional<SingularStress> sing;
  if (split)
  {
    sing.emplace(*options.singular, mat);
  }

  // Sides and unknown layout.
  std::array<std::vector<ElementId>, 2> side_elems;
  std::map<ElementId, int> elem_side;
  for (ElementId e : patch.elements)
  {
    const int s = side_of(loads, options, mesh.element(e).regions);
    side_elems[s].push_back(e);
    elem_side[e] = s;
  }
  PatchFit fit;
  fit.vertex = patch.vertex;
  std::array<int, 2> offset{-1, -1};
  int n = 0;
  for (int s = 0; s < 2; ++s)
  {
    if (side_elems[s].empty())
    {
      continue;
    }
    PatchPolynomial poly;
    poly.degree = p;
    poly.centre = patch.centre;
    poly.scale = patch.half_width;
    poly.singular_split = split;
    poly.coeffs = Eigen::MatrixXd::Zero(3, nb);
    fit.sides[s] = poly;
    offset[s] = n;
    n += 3 * nb;
  }

  // Least-squares normal equations and effective body-force samples.
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  std::array<std::vector<std::pair<Vec2, Vec2>>, 2> beff;
  const double fd_step = 1e-6 * patch.half_width;
  for (int s = 0; s < 2; ++s)
  {
    if (!fit.sides[s])
    {
      continue;
    }
    const auto &poly = *fit.sides[s];
    Eigen::MatrixXd Ms = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::MatrixXd Rs = Eigen::MatrixXd::Zero(nb, 3);
    for (ElementId e : side_elems[s])
    {
      const std::uint32_t regions = mesh.element(e).regions;
      for (const auto &sv : mesh.element_shape_quadrature(e, options.sample_order))
      {
        Vec3 target = field.elastic_stress(e, sv);
        if (sing)
        {
          target -= (*sing)(sv.x);
        }
        const Eigen::VectorXd P = poly.basis(sv.x);
        Ms.noalias() += P * P.transpose();
        Rs.noalias() += P * target.transpose();
        ++fit.samples;
        if (cx && options.internal_equilibrium)
        {
          beff[s].emplace_back(sv.x, loads.body_at(sv.x, regions) +
                                       offset_divergence(loads, mat, sv.x, regions, fd_step));
        }
      }
    }
    for (int c = 0; c < 3; ++c)
    {
      M.block(offset[s] + c * nb, offset[s] + c * nb, nb, nb) = Ms;
      rhs.segment(offset[s] + c * nb, nb) = Rs.col(c);
    }
  }

  // Constraint rows in priority order.
  std::vector<ConstraintRow> candidates;
  if (cx && options.boundary_equilibrium && !patch.boundary_pieces.empty())
  {
    struct TagInfo
    {
      FreeKind kind;
      double length = 0.0;
      std::vector<Segment> segs;
    };
    std::map<std::string, TagInfo> tags;
    for (const auto &be : patch.boundary_pieces)
    {
      auto [it, inserted] =
        tags.try_emplace(be.tag, TagInfo{classify_tag(dirichlet, be.tag), 0.0, {}});
      Segment sg = make_segment(mesh, be.element, be.local_edge);
      it->second.length += sg.length;
      it->second.segs.push_back(sg);
    }
    const std::string *best = nullptr;
    auto rank = [](FreeKind k) { return k == FreeKind::full ? 0 : 1; };
    for (const auto &[tag, info] : tags)
    {
      if (info.kind == FreeKind::none)
      {
        continue;
      }
      if (!best)
      {
        best = &tag;
        continue;
      }
      const auto &b = tags.at(*best);
      if (rank(info.kind) < rank(b.kind) ||
          (rank(info.kind) == rank(b.kind) && info.length > b.length * (1.0 + 1e-12)))
      {
        best = &tag;
      }
    }
    if (best)
    {
      const auto &info = tags.at(*best);
      const auto tr = loads.tractions.find(*best);
      for (const auto &cp : chain_points(info.segs, p + 1))
      {
        const EdgeSample es = edge_point(mesh, cp.element, cp.edge, cp.s);
        const std::uint32_t regions = mesh.element(cp.element).regions;
        const int s = elem_side.at(cp.element);
        Vec2 t = tr != loads.tractions.end() ? tr->second(es.x, es.normal) : Vec2::Zero();
        Vec3 known = loads.initial_offset(mat, es.x, regions);
        if (sing)
        {
          known += (*sing)(es.x);
        }
        t -= UnitNormal(es.normal).G() * known;
        const auto dirs = free_directions(info.kind, es.normal);
        for (auto &r : boundary_equilibrium_rows(*fit.sides[s], es.x, es.normal, dirs, t,
                                                 offset[s], n))
        {
          candidates.push_back(std::move(r));
        }
      }
    }
  }

  if (cx && options.interface_equilibrium && fit.sides[0] && fit.sides[1])
  {
    std::vector<Segment> segs;
    const double tol = 1e-12;
    for (ElementId e : patch.elements)
    {
      const auto be = mesh.parameter_box(e);
      for (ElementId f : patch.elements)
      {
        if (elem_side[f] == elem_side[e])
        {
          continue;
        }
        const int le = mesh.element(e).level;
        const int lf = mesh.element(f).level;
        if (lf > le || (lf == le && elem_side[e] != 1))
        {
          continue;
        }
        const auto bf = mesh.parameter_box(f);
        for (int k = 0; k < 4; ++k)
        {
          const auto ep = edge_param(be, k);
          if (in_closed_box(bf, ep[0], ep[1], tol) && in_closed_box(bf, ep[2], ep[3], tol))
          {
            segs.push_back(make_segment(mesh, e, k));
          }
        }
      }
    }
    if (!segs.empty())
    {
      for (const auto &cp : chain_points(segs, p + 1))
      {
        const EdgeSample es = edge_point(mesh, cp.element, cp.edge, cp.s);
        const int s1 = elem_side.at(cp.element);
        const int s2 = 1 - s1;
        // Offsets on each side at the interface point.
        const std::uint32_t r1 = mesh.element(cp.element).regions;
        const std::uint32_t r2 = mesh.element(side_elems[s2].front()).regions;
        const Eigen::Matrix<double, 2, 3> G = UnitNormal(es.normal).G();
        const Vec2 jump =
          G * (loads.initial_offset(mat, es.x, r2) - loads.initial_offset(mat, es.x, r1));
        const auto &poly = *fit.sides[s1];
        const Eigen::VectorXd P = poly.basis(es.x);
        for (int d = 0; d < 2; ++d)
        {
          auto r = make_row(ConstraintKind::interface, n, es.x);
          for (int c = 0; c < 3; ++c)
          {
            r.row.segment(offset[s1] + c * nb, nb) = G(d, c) * P;
            r.row.segment(offset[s2] + c * nb, nb) = -G(d, c) * P;
          }
          r.rhs = jump[d];
          candidates.push_back(std::move(r));
        }
      }
    }
  }

  if (cx && options.internal_equilibrium)
  {
    for (int s = 0; s < 2; ++s)
    {
      if (!fit.sides[s])
      {
        continue;
      }
      const auto &poly = *fit.sides[s];
      // Least-squares fit of degree p - 1 to the effective body force.
      PatchPolynomial bfit;
      bfit.degree = p - 1;
      bfit.centre = poly.centre;
      bfit.scale = poly.scale;
      const int nq = PatchPolynomial::basis_size(p - 1);
      Eigen::MatrixXd A(static_cast<Eigen::Index>(beff[s].size()), nq);
      Eigen::MatrixXd B(static_cast<Eigen::Index>(beff[s].size()), 2);
      for (std::size_t i = 0; i < beff[s].size(); ++i)
      {
        A.row(static_cast<Eigen::Index>(i)) = bfit.basis(beff[s][i].first).transpose();
        B.row(static_cast<Eigen::Index>(i)) = beff[s][i].second.transpose();
      }
      const Eigen::MatrixXd coef = A.completeOrthogonalDecomposition().solve(B);
      auto b_hat = [&](const Vec2 &x) -> Vec2 {
        return coef.transpose() * bfit.basis(x);
      };
      // Collocation points: vertex, element centroids, then interior sub-cell centres.
      std::vector<Vec2> cand{mesh.node(patch.vertex)};
      for (ElementId e : side_elems[s])
      {
        cand.push_back(mesh.map_point(e, Vec2::Zero()));
      }
      for (ElementId e : side_elems[s])
      {
        for (const Vec2 &r : {Vec2(-0.5, -0.5), Vec2(0.5, -0.5), Vec2(0.5, 0.5)})
        {
          cand.push_back(mesh.map_point(e, r));
        }
      }
      const std::size_t needed = p >= 2 ? 3 : 1;
      std::vector<Vec2> pts;
      for (const Vec2 &x : cand)
      {
        if (pts.size() == needed)
        {
          break;
        }
        if (pts.size() == 1 && (x - pts[0]).norm() < 1e-8 * poly.scale)
        {
          continue;
        }
        if (pts.size() == 2)
        {
          const std::array<Vec2, 3> tri{pts[0], pts[1], x};
          if (aligned(tri, 1e-6 * poly.scale * poly.scale))
          {
            continue;
          }
        }
        pts.push_back(x);
      }
      for (auto &r : internal_equilibrium_rows(poly, pts, b_hat, offset[s], n))
      {
        candidates.push_back(std::move(r));
      }
    }
  }

  if (cx && options.compatibility && p >= 2)
  {
    for (int s = 0; s < 2; ++s)
    {
      if (fit.sides[s])
      {
        const std::array<Vec2, 1> pts{mesh.node(patch.vertex)};
        for (auto &r : compatibility_rows(*fit.sides[s], pts, mat, offset[s], n))
        {
          candidates.push_back(std::move(r));
        }
      }
    }
  }

  // Greedy selection of linearly independent rows in priority order.
  std::vector<Eigen::VectorXd> basis;
  for (auto &r : candidates)
  {
    const double norm = r.row.norm();
    if (norm == 0.0)
    {
      ++fit.dropped_rows;
      continue;
    }
    Eigen::VectorXd u = r.row / norm;
    for (const auto &q : basis)
    {
      u -= q.dot(u) * q;
    }
    if (u.norm() > 1e-9)
    {
      basis.push_back(u.normalized());
      fit.active_rows.push_back(std::move(r));
    }
    else
    {
      ++fit.dropped_rows;
    }
  }

  // Null-space solve of the equality-constrained least-squares problem.
  const int k = static_cast<int>(fit.active_rows.size());
  Eigen::VectorXd A;
  Eigen::VectorXd grad;
  if (k == 0)
  {
    A = M.completeOrthogonalDecomposition().solve(rhs);
    grad = rhs - M * A;
    fit.kkt_residual = grad.norm() / std::max(rhs.norm(), 1e-300);
  }
  else
  {
    Eigen::MatrixXd Ct(n, k);
    Eigen::VectorXd d(k);
    for (int i = 0; i < k; ++i)
    {
      Ct.col(i) = fit.active_rows[i].row;
      d[i] = fit.active_rows[i].rhs;
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Ct);
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Eigen::VectorXd y1 = R.transpose().triangularView<Eigen::Lower>().solve(d);
    const Eigen::MatrixXd Q1 = Q.leftCols(k);
    const Eigen::MatrixXd Q2 = Q.rightCols(n - k);
    A = Q1 * y1;
    if (n > k)
    {
      const Eigen::MatrixXd H = Q2.transpose() * M * Q2;
      const Eigen::VectorXd g = Q2.transpose() * (rhs - M * A);
      A += Q2 * H.completeOrthogonalDecomposition().solve(g);
    }
    grad = rhs - M * A;
    // Stationarity: the LS gradient must lie in the row space of the constraints.
    const Eigen::VectorXd tangential = Q2.transpose() * grad;
    fit.kkt_residual = tangential.norm() / std::max(rhs.norm(), 1e-300);
  }
  for (const auto &r : fit.active_rows)
  {
    fit.max_constraint_residual =
      std::max(fit.max_constraint_residual, std::abs(r.row.dot(A) - r.rhs));
  }
  for (int s = 0; s < 2; ++s)
  {
    if (!fit.sides[s])
    {
      continue;
    }
    for (int c = 0; c < 3; ++c)
    {
      fit.sides[s]->coeffs.row(c) = A.segment(offset[s] + c * nb, nb).transpose();
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------------------------
// RecoveredField

RecoveredField::RecoveredField(FEField field, std::vector<PatchFit> fits,
                               std::vector<int> element_side, RecoveryOptions options)
  : field_(std::move(field)), fits_(std::move(fits)), element_side_(std::move(element_side)),
    options_(std::move(options))
{
  if (options_.singular && options_.mode == RecoveryMode::spr_cx)
  {
    singular_ = SingularStress(*options_.singular, field_.material());
  }
  fit_index_.assign(field_.mesh().num_nodes(), -1);
  for (std::size_t i = 0; i < fits_.size(); ++i)
  {
    fit_index_[fits_[i].vertex] = static_cast<int>(i);
  }
}

const PatchFit &RecoveredField::fit_of(NodeId vertex) const
{
  const int i = fit_index_.at(vertex);
  if (i < 0)
  {
    throw Error("RecoveredField: no patch at node " + std::to_string(vertex));
  }
  return fits_[i];
}

const PatchPolynomial &RecoveredField::polynomial(NodeId vertex, int side) const
{
  const auto &f = fit_of(vertex);
  if (side < 0 || side > 1 || !f.sides[side])
  {
    throw Error("RecoveredField: patch has no polynomial on that side");
  }
  return *f.sides[side];
}

Vec3 RecoveredField::stress(ElementId e, const ShapeValues &sv) const
{
  const auto &mesh = field_.mesh();
  const auto &el = mesh.element(e);
  const int side = element_side_[e];
  Vec3 s = Vec3::Zero();
  double w_sing = 0.0;
  for (int a = 0; a < 4; ++a)
  {
    for (const auto &[m, w] : mesh.node_expansion(el.nodes[a]))
    {
      const PatchPolynomial &poly = polynomial(m, side);
      const double wa = sv.N[a] * w;
      s += wa * poly.value(sv.x);
      if (poly.singular_split)
      {
        w_sing += wa;
      }
    }
  }
  s += field_.loads().initial_offset(field_.material(), sv.x, el.regions);
  if (w_sing != 0.0 && singular_)
  {
    s += w_sing * singular_(sv.x);
  }
  return s;
}

Vec3 RecoveredField::stress(ElementId e, const Vec2 &ref) const
{
  return stress(e, field_.mesh().shape_values(e, ref));
}

Vec3 RecoveredField::error(ElementId e, const ShapeValues &sv) const
{
  const auto &el = field_.mesh().element(e);
  return stress(e, sv) - field_.elastic_stress(e, sv) -
         field_.loads().initial_offset(field_.material(), sv.x, el.regions);
}

ElementStressSampler RecoveredField::stress_sampler() const
{
  return [this](ElementId e, const ShapeValues &sv) { return stress(e, sv); };
}

ElementStressSampler RecoveredField::error_sampler() const
{
  return [this](ElementId e, const ShapeValues &sv) { return error(e, sv); };
}

Vec2 RecoveredField::blending_residual(ElementId e, const Vec2 &ref) const
{
  const auto &mesh = field_.mesh();
  const auto &el = mesh.element(e);
  const ShapeValues sv = mesh.shape_values(e, ref);
  const int side = element_side_[e];
  Vec2 res = Vec2::Zero();
  Vec2 g_sing = Vec2::Zero();
  for (int a = 0; a < 4; ++a)
  {
    for (const auto &[m, w] : mesh.node_expansion(el.nodes[a]))
    {
      const PatchPolynomial &poly = polynomial(m, side);
      const Vec2 g = w * sv.dN[a];
      const Vec3 s = poly.value(sv.x);
      res += Vec2(g.x() * s[0] + g.y() * s[2], g.x() * s[2] + g.y() * s[1]);
      if (poly.singular_split)
      {
        g_sing += g;
      }
    }
  }
  if (g_sing.norm() > 0.0 && singular_)
  {
    const Vec3 s = singular_(sv.x);
    res += Vec2(g_sing.x() * s[0] + g_sing.y() * s[2], g_sing.x() * s[2] + g_sing.y() * s[1]);
  }
  return res;
}

void RecoveredField::write_text(std::ostream &os) const
{
  os << "# patch vertex side degree cx cy scale split coefficients(xx.. yy.. xy..)\n";
  const auto prec = os.precision(17);
  for (const auto &f : fits_)
  {
    for (int s = 0; s < 2; ++s)
    {
      if (!f.sides[s])
      {
        continue;
      }
      const auto &p = *f.sides[s];
      os << "patch " << f.vertex << ' ' << s << ' ' << p.degree << ' ' << p.centre.x() << ' '
         << p.centre.y() << ' ' << p.scale << ' ' << (p.singular_split ? 1 : 0);
      for (int c = 0; c < 3; ++c)
      {
        for (Eigen::Index k = 0; k < p.coeffs.cols(); ++k)
        {
          os << ' ' << p.coeffs(c, k);
        }
      }
      os << '\n';
    }
  }
  os.precision(prec);
}

RecoveredField recover(const FEField &field, const DirichletSet &dirichlet,
                       const RecoveryOptions &options)
{
  const auto &mesh = field.mesh();
  const auto patches = build_patches(mesh);
  std::vector<PatchFit> fits(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i)
  {
    fits[i] = fit_patch(patches[i], field, dirichlet, options);
  }
  std::vector<int> sides(mesh.num_elements());
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    sides[e] = side_of(field.loads(), options, mesh.element(e).regions);
  }
  return RecoveredField(field, std::move(fits), std::move(sides), options);
}

} // namespace goalfem
