#include "goalfem/fem.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace goalfem
{

// ---------------------------------------------------------------------------------------------
// LoadSet

Vec2 LoadSet::body_at(const Vec2 &x, std::uint32_t regions) const
{
  if (!body_force || !acts_on(regions))
  {
    return Vec2::Zero();
  }
  return body_force(x);
}

Vec3 LoadSet::initial_stress_at(const Vec2 &x, std::uint32_t regions) const
{
  if (!initial_stress || !acts_on(regions))
  {
    return Vec3::Zero();
  }
  return initial_stress(x).vec();
}

Vec3 LoadSet::initial_strain_at(const Vec2 &x, std::uint32_t regions) const
{
  if (!initial_strain || !acts_on(regions))
  {
    return Vec3::Zero();
  }
  return initial_strain(x).vec();
}

Vec3 LoadSet::initial_offset(const MaterialModel &mat, const Vec2 &x,
                             std::uint32_t regions) const
{
  return initial_stress_at(x, regions) - mat.D() * initial_strain_at(x, regions);
}

StressGradient LoadSet::initial_offset_gradient(const MaterialModel &mat, const Vec2 &x,
                                                std::uint32_t regions, double step) const
{
  StressGradient g;
  if (!has_initial_fields() || !acts_on(regions))
  {
    return g;
  }
  const Vec2 dx(step, 0.0);
  const Vec2 dy(0.0, step);
  g.d_dx = (initial_offset(mat, x + dx, regions) - initial_offset(mat, x - dx, regions)) /
           (2.0 * step);
  g.d_dy = (initial_offset(mat, x + dy, regions) - initial_offset(mat, x - dy, regions)) /
           (2.0 * step);
  return g;
}

bool DirichletSet::constrains(const std::string &tag) const
{
  return std::any_of(edges.begin(), edges.end(),
                     [&](const DirichletCondition &c) { return c.tag == tag; });
}

// ---------------------------------------------------------------------------------------------
// Element kernels

int default_stiffness_order(const QuadtreeMesh &mesh)
{
  return mesh.geometry().is_affine() ? 2 : 4;
}

Eigen::Matrix<double, 3, 8> strain_matrix(const ShapeValues &sv)
{
  Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a)
  {
    B(0, 2 * a) = sv.dN[a].x();
    B(1, 2 * a + 1) = sv.dN[a].y();
    B(2, 2 * a) = sv.dN[a].y();
    B(2, 2 * a + 1) = sv.dN[a].x();
  }
  return B;
}

Eigen::Matrix<double, 8, 8> element_stiffness(const QuadtreeMesh &mesh, ElementId e,
                                              const MaterialModel &mat, int order)
{
  Eigen::Matrix<double, 8, 8> Ke = Eigen::Matrix<double, 8, 8>::Zero();
  for (const auto &sv : mesh.element_shape_quadrature(e, order))
  {
    const auto B = strain_matrix(sv);
    Ke.noalias() += sv.weight * B.transpose() * mat.D() * B;
  }
  return Ke;
}

Eigen::Matrix<double, 8, 1> element_volume_load(const QuadtreeMesh &mesh, ElementId e,
                                                const MaterialModel &mat, const LoadSet &loads)
{
  Eigen::Matrix<double, 8, 1> fe = Eigen::Matrix<double, 8, 1>::Zero();
  const std::uint32_t regions = mesh.element(e).regions;
  if (!loads.has_volume_loads() || !loads.acts_on(regions))
  {
    return fe;
  }
  for (const auto &sv : mesh.element_shape_quadrature(e, loads.quadrature_order))
  {
    if (loads.body_force)
    {
      const Vec2 b = loads.body_force(sv.x);
      for (int a = 0; a < 4; ++a)
      {
        fe[2 * a] += sv.weight * sv.N[a] * b.x();
        fe[2 * a + 1] += sv.weight * sv.N[a] * b.y();
      }
    }
    if (loads.has_initial_fields())
    {
      const auto B = strain_matrix(sv);
      // + int B^T D eps0 - int B^T sig0
      const Vec3 s = -loads.initial_offset(mat, sv.x, regions);
      fe.noalias() += sv.weight * B.transpose() * s;
    }
  }
  return fe;
}

// ---------------------------------------------------------------------------------------------
// Assembly

namespace
{

NodeId find_node(const QuadtreeMesh &mesh, const Vec2 &p)
{
  NodeId best = -1;
  double best_d = 0.0;
  for (NodeId n = 0; n < static_cast<NodeId>(mesh.num_nodes()); ++n)
  {
    const double d = (mesh.node(n) - p).norm();
    if (best < 0 || d < best_d)
    {
      best = n;
      best_d = d;
    }
  }
  double scale = 0.0;
  for (const auto &x : mesh.nodes())
  {
    scale = std::max(scale, x.cwiseAbs().maxCoeff());
  }
  if (best < 0 || best_d > 1e-9 * std::max(scale, 1.0))
  {
    throw Error("PointConstraint: no mesh node at the requested point");
  }
  if (mesh.is_hanging(best))
  {
    throw Error("PointConstraint: requested point is a hanging node");
  }
  return best;
}

} // namespace

SystemMatrix assemble(std::shared_ptr<const QuadtreeMesh> mesh_ptr, const MaterialModel &mat,
                      const LoadSet &loads, const DirichletSet &dirichlet,
                      const AssemblyOptions &options)
{
  if (!mesh_ptr)
  {
    throw Error("assemble: null mesh");
  }
  const QuadtreeMesh &mesh = *mesh_ptr;
  for (const auto &[tag, fn] : loads.tractions)
  {
    if (dirichlet.constrains(tag))
    {
      // Mixed conditions on one tag are allowed only componentwise; a full traction on a
      // fully fixed piece is inconsistent.
      for (const auto &c : dirichlet.edges)
      {
        if (c.tag == tag && c.fix_x && c.fix_y && !c.normal_frame)
        {
          throw Error("assemble: boundary '" + tag + "' has both traction and full Dirichlet data");
        }
      }
    }
  }

  const int nn = static_cast<int>(mesh.num_nodes());
  const int ndof = 2 * nn;
  const int order = options.stiffness_order > 0 ? options.stiffness_order
                                                : default_stiffness_order(mesh);

  SystemMatrix sys;
  sys.mesh = mesh_ptr;
  sys.f_full = Eigen::VectorXd::Zero(ndof);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_elements() * 64);
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    const auto &el = mesh.element(e);
    const auto Ke = element_stiffness(mesh, e, mat, order);
    const auto fe = element_volume_load(mesh, e, mat, loads);
    for (int a = 0; a < 8; ++a)
    {
      const int ga = 2 * el.nodes[a / 2] + a % 2;
      sys.f_full[ga] += fe[a];
      for (int b = 0; b < 8; ++b)
      {
        trip.emplace_back(ga, 2 * el.nodes[b / 2] + b % 2, Ke(a, b));
      }
    }
  }
  sys.K_full.resize(ndof, ndof);
  sys.K_full.setFromTriplets(trip.begin(), trip.end());

  // Tractions.
  for (const auto &be : mesh.boundary_edges())
  {
    auto it = loads.tractions.find(be.tag);
    if (it == loads.tractions.end() || !it->second)
    {
      continue;
    }
    const auto &el = mesh.element(be.element);
    const int a0 = be.local_edge;
    const int a1 = (be.local_edge + 1) % 4;
    for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, options.traction_order))
    {
      const Vec2 t = it->second(ep.x, ep.normal);
      const double n0 = 0.5 * (1.0 - ep.s);
      const double n1 = 0.5 * (1.0 + ep.s);
      sys.f_full[2 * el.nodes[a0]] += ep.weight * n0 * t.x();
      sys.f_full[2 * el.nodes[a0] + 1] += ep.weight * n0 * t.y();
      sys.f_full[2 * el.nodes[a1]] += ep.weight * n1 * t.x();
      sys.f_full[2 * el.nodes[a1] + 1] += ep.weight * n1 * t.y();
    }
  }

  // Prescribed dofs (global frame) and rotated constraints.
  std::vector<int> prescribed(ndof, 0);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ndof);
  struct NormalRow
  {
    NodeId node;
    Vec2 normal;
    double value;
  };
  std::map<NodeId, std::pair<Vec2, const DirichletCondition *>> normal_nodes;
  for (const auto &be : mesh.boundary_edges())
  {
    for (const auto &c : dirichlet.edges)
    {
      if (c.tag != be.tag)
      {
        continue;
      }
      const auto &el = mesh.element(be.element);
      const std::array<NodeId, 2> ends{el.nodes[be.local_edge], el.nodes[(be.local_edge + 1) % 4]};
      for (int k = 0; k < 2; ++k)
      {
        const NodeId n = ends[k];
        if (mesh.is_hanging(n))
        {
          continue;
        }
        if (c.normal_frame)
        {
          const Vec2 ref = QuadtreeMesh::edge_reference_point(be.local_edge, k == 0 ? -1.0 : 1.0);
          static constexpr std::array<std::array<double, 2>, 4> dref{
            {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};
          const Vec2 tan = mesh.element_jacobian(be.element, ref) *
                           Vec2(dref[be.local_edge][0], dref[be.local_edge][1]);
          const Vec2 nrm = Vec2(tan.y(), -tan.x()).normalized();
          auto &entry = normal_nodes[n];
          entry.first += nrm;
          entry.second = &c;
          continue;
        }
        const Vec2 v = c.value ? c.value(mesh.node(n)) : Vec2::Zero();
        if (c.fix_x)
        {
          prescribed[2 * n] = 1;
          g[2 * n] = v.x();
        }
        if (c.fix_y)
        {
          prescribed[2 * n + 1] = 1;
          g[2 * n + 1] = v.y();
        }
      }
    }
  }
  for (const auto &pc : dirichlet.points)
  {
    const NodeId n = find_node(mesh, pc.point);
    const Vec2 v = pc.value ? pc.value(mesh.node(n)) : Vec2::Zero();
    if (pc.fix_x)
    {
      prescribed[2 * n] = 1;
      g[2 * n] = v.x();
    }
    if (pc.fix_y)
    {
      prescribed[2 * n + 1] = 1;
      g[2 * n + 1] = v.y();
    }
  }

  // u_all = T u_free + g, hanging dofs expanded onto their masters.
  std::vector<int> free_index(ndof, -1);
  int nfree = 0;
  for (int d = 0; d < ndof; ++d)
  {
    if (!mesh.is_hanging(d / 2) && !prescribed[d])
    {
      free_index[d] = nfree++;
    }
  }
  std::vector<Eigen::Triplet<double>> ttrip;
  ttrip.reserve(ndof * 2);
  for (int d = 0; d < ndof; ++d)
  {
    const NodeId n = d / 2;
    const int c = d % 2;
    if (!mesh.is_hanging(n))
    {
      if (free_index[d] >= 0)
      {
        ttrip.emplace_back(d, free_index[d], 1.0);
      }
      continue;
    }
    double gv = 0.0;
    for (const auto &[m, w] : mesh.node_expansion(n))
    {
      const int dm = 2 * m + c;
      if (free_index[dm] >= 0)
      {
        ttrip.emplace_back(d, free_index[dm], w);
      }
      else
      {
        gv += w * g[dm];
      }
    }
    g[d] = gv;
    prescribed[d] = 0;
  }
  sys.dofs.T.resize(ndof, nfree);
  sys.dofs.T.setFromTriplets(ttrip.begin(), ttrip.end());
  sys.dofs.g = g;
  sys.dofs.prescribed = prescribed;
  sys.dofs.num_free = nfree;

  Eigen::SparseMatrix<double> Kr = sys.dofs.T.transpose() * sys.K_full * sys.dofs.T;
  Eigen::VectorXd fr = sys.dofs.T.transpose() * (sys.f_full - sys.K_full * g);

  // Rotated constraints via multipliers.
  std::vector<NormalRow> rows;
  for (const auto &[n, entry] : normal_nodes)
  {
    if (prescribed[2 * n] && prescribed[2 * n + 1])
    {
      continue;
    }
    const Vec2 nrm = entry.first.normalized();
    const Vec2 v = entry.second->value ? entry.second->value(mesh.node(n)) : Vec2::Zero();
    rows.push_back({n, nrm, v.x()});
  }
  sys.num_multipliers = static_cast<int>(rows.size());
  if (rows.empty())
  {
    sys.K = std::move(Kr);
    sys.rhs = std::move(fr);
    return sys;
  }

  const int nm = sys.num_multipliers;
  std::vector<Eigen::Triplet<double>> btrip;
  for (int r = 0; r < Kr.outerSize(); ++r)
  {
    for (Eigen::SparseMatrix<double>::InnerIterator it(Kr, r); it; ++it)
    {
      btrip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree + nm);
  rhs.head(nfree) = fr;
  for (int r = 0; r < nm; ++r)
  {
    const auto &row = rows[r];
    double dval = row.value;
    for (int c = 0; c < 2; ++c)
    {
      const int d = 2 * row.node + c;
      const double coef = row.normal[c];
      if (free_index[d] >= 0)
      {
        btrip.emplace_back(nfree + r, free_index[d], coef);
        btrip.emplace_back(free_index[d], nfree + r, coef);
      }
      else
      {
        dval -= coef * g[d];
      }
    }
    rhs[nfree + r] = dval;
  }
  sys.K.resize(nfree + nm, nfree + nm);
  sys.K.setFromTriplets(btrip.begin(), btrip.end());
  sys.rhs = std::move(rhs);
  return sys;
}

FEField solve(const SystemMatrix &sys, const MaterialModel &mat, const LoadSet &loads)
{
  const int nfree = sys.dofs.num_free;
  Eigen::VectorXd x;
  if (sys.K.rows() == 0)
  {
    x = Eigen::VectorXd::Zero(0);
  }
  else if (sys.num_multipliers == 0)
  {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(sys.K);
    if (ldlt.info() != Eigen::Success)
    {
      throw Error("solve: factorization failed; the stiffness is singular (rigid-body modes "
                  "are not removed: add Dirichlet data fixing x and y translation and rotation)");
    }
    const Eigen::VectorXd Dd = ldlt.vectorD();
    const double dmax = Dd.cwiseAbs().maxCoeff();
    if (!(Dd.minCoeff() > 1e-11 * dmax))
    {
      throw Error("solve: stiffness is singular or indefinite (rigid-body modes are not "
                  "removed: add Dirichlet data fixing x and y translation and rotation)");
    }
    x = ldlt.solve(sys.rhs);
  }
  else
  {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(sys.K);
    if (lu.info() != Eigen::Success)
    {
      throw Error("solve: saddle-point factorization failed (singular system; check that "
                  "rigid-body modes are constrained and multiplier rows are independent)");
    }
    x = lu.solve(sys.rhs);
  }
  if (sys.K.rows() > 0)
  {
    const double rnorm = (sys.K * x - sys.rhs).norm();
    const double bnorm = sys.rhs.norm();
    if (!std::isfinite(rnorm) || (rnorm > 1e-8 * std::max(bnorm, 1e-300) && rnorm > 1e-14))
    {
      throw Error("solve: residual check failed (relative residual " +
                  std::to_string(rnorm / std::max(bnorm, 1e-300)) + ")");
    }
  }
  Eigen::VectorXd u = sys.dofs.T * x.head(nfree) + sys.dofs.g;
  return FEField(sys.mesh, mat, loads, std::move(u));
}

FEField solve_problem(std::shared_ptr<const QuadtreeMesh> mesh, const MaterialModel &material,
                      const LoadSet &loads, const DirichletSet &dirichlet,
                      const AssemblyOptions &options)
{
  return solve(assemble(std::move(mesh), material, loads, dirichlet, options), material, loads);
}

Eigen::VectorXd nodal_residual(const SystemMatrix &sys, const FEField &field)
{
  return sys.K_full * field.nodal() - sys.f_full;
}

// ---------------------------------------------------------------------------------------------
// FEField

FEField::FEField(std::shared_ptr<const QuadtreeMesh> mesh, MaterialModel material, LoadSet loads,
                 Eigen::VectorXd nodal_displacements)
  : mesh_(std::move(mesh)), material_(std::move(material)), loads_(std::move(loads)),
    u_(std::move(nodal_displacements))
{
  if (!mesh_ || u_.size() != static_cast<Eigen::Index>(2 * mesh_->num_nodes()))
  {
    throw Error("FEField: nodal vector does not match the mesh");
  }
}

Vec2 FEField::displacement(ElementId e, const Vec2 &ref) const
{
  const auto &el = mesh_->element(e);
  const double s = ref.x();
  const double t = ref.y();
  const std::array<double, 4> N{0.25 * (1 - s) * (1 - t), 0.25 * (1 + s) * (1 - t),
                                0.25 * (1 + s) * (1 + t), 0.25 * (1 - s) * (1 + t)};
  Vec2 u = Vec2::Zero();
  for (int a = 0; a < 4; ++a)
  {
    u += N[a] * Vec2(u_[2 * el.nodes[a]], u_[2 * el.nodes[a] + 1]);
  }
  return u;
}

VoigtStrain FEField::strain(ElementId e, const ShapeValues &sv) const
{
  const auto &el = mesh_->element(e);
  Vec3 eps = Vec3::Zero();
  for (int a = 0; a < 4; ++a)
  {
    const double ux = u_[2 * el.nodes[a]];
    const double uy = u_[2 * el.nodes[a] + 1];
    eps[0] += sv.dN[a].x() * ux;
    eps[1] += sv.dN[a].y() * uy;
    eps[2] += sv.dN[a].y() * ux + sv.dN[a].x() * uy;
  }
  return VoigtStrain(eps);
}

VoigtStrain FEField::strain(ElementId e, const Vec2 &ref) const
{
  return strain(e, mesh_->shape_values(e, ref));
}

Vec3 FEField::elastic_stress(ElementId e, const ShapeValues &sv) const
{
  return material_.D() * strain(e, sv).vec();
}

void FEField::write_text(std::ostream &os) const
{
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os.setf(std::ios::scientific);
  os.precision(17);
  os << "# node x y ux uy\n";
  for (std::size_t n = 0; n < mesh_->num_nodes(); ++n)
  {
    os << n << ' ' << mesh_->node(n).x() << ' ' << mesh_->node(n).y() << ' ' << u_[2 * n] << ' '
       << u_[2 * n + 1] << '\n';
  }
  os.flags(old_flags);
  os.precision(old_prec);
}

VoigtStress fe_stress(const FEField &field, ElementId e, const Vec2 &ref)
{
  const ShapeValues sv = field.mesh().shape_values(e, ref);
  const std::uint32_t regions = field.mesh().element(e).regions;
  return VoigtStress(field.elastic_stress(e, sv) +
                     field.loads().initial_offset(field.material(), sv.x, regions));
}

double energy_inner_product(const QuadtreeMesh &mesh, const MaterialModel &mat,
                            const ElementStressSampler &s1, const ElementStressSampler &s2,
                            int order, std::span<const ElementId> region)
{
  double total = 0.0;
  auto add_element = [&](ElementId e) {
    double local = 0.0;
    for (const auto &sv : mesh.element_shape_quadrature(e, order))
    {
      local += sv.weight * energy_pairing(mat, s1(e, sv), s2(e, sv));
    }
    total += local;
  };
  if (region.empty())
  {
    for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
    {
      add_element(e);
    }
  }
  else
  {
    for (ElementId e : region)
    {
      add_element(e);
    }
  }
  return total;
}

} // namespace goalfem
