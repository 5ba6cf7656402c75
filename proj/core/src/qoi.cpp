#include "goalfem/qoi.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace goalfem
{

namespace
{

constexpr std::array<std::array<double, 2>, 4> edge_direction{
  {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};

bool in_region(const QuadtreeMesh &mesh, ElementId e, int bit)
{
  return (mesh.element(e).regions & (1u << bit)) != 0;
}

Vec2 frame_to_global(const Vec2 &c, const Vec2 &n)
{
  const Vec2 t(-n.y(), n.x());
  return c.x() * n + c.y() * t;
}

Vec2 global_extractor(const QuantityOfInterest &qoi, const Vec2 &normal)
{
  const Vec2 c = qoi.extractor.head<2>();
  return qoi.normal_frame ? frame_to_global(c, normal) : c;
}

Vec2 node_normal(const QuadtreeMesh &mesh, const BoundaryEdge &be, int end)
{
  const Vec2 ref = QuadtreeMesh::edge_reference_point(be.local_edge, end == 0 ? -1.0 : 1.0);
  const auto &d = edge_direction[be.local_edge];
  const Vec2 tan = mesh.element_jacobian(be.element, ref) * Vec2(d[0], d[1]);
  return Vec2(tan.y(), -tan.x()).normalized();
}

ShapeValues edge_shape(const QuadtreeMesh &mesh, const BoundaryEdge &be, const EdgePoint &ep)
{
  ShapeValues sv = mesh.shape_values(be.element,
                                     QuadtreeMesh::edge_reference_point(be.local_edge, ep.s));
  sv.weight = ep.weight;
  return sv;
}

bool has_tagged_edge(const QuadtreeMesh &mesh, const std::string &tag)
{
  for (const auto &be : mesh.boundary_edges())
  {
    if (be.tag == tag)
    {
      return true;
    }
  }
  return false;
}

void check_gsif_domain(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh)
{
  // The plateau must vanish before the outer boundary: sample the outer radius of the
  // annulus inside the wedge.
  const auto &c = qoi.corner;
  const double half = 0.5 * c.opening_angle;
  for (int k = 0; k <= 64; ++k)
  {
    const double phi = -half + c.opening_angle * k / 64.0;
    const double th = c.rotation + phi;
    const Vec2 x = c.apex + qoi.domain.r2 * Vec2(std::cos(th), std::sin(th));
    if (!mesh.geometry().contains(x, 1e-9))
    {
      throw Error("QoI: GSIF extraction annulus leaves the mesh");
    }
  }
}

} // namespace

std::string to_string(QoIKind kind)
{
  switch (kind)
  {
  case QoIKind::mean_displacement_domain:
    return "mean_displacement_domain";
  case QoIKind::mean_displacement_boundary:
    return "mean_displacement_boundary";
  case QoIKind::mean_strain_domain:
    return "mean_strain_domain";
  case QoIKind::mean_stress_domain:
    return "mean_stress_domain";
  case QoIKind::mean_traction_dirichlet:
    return "mean_traction_dirichlet";
  case QoIKind::gsif:
    return "gsif";
  }
  return "unknown";
}

QuantityOfInterest QuantityOfInterest::mean_displacement_domain(const Vec2 &c_u, int region_bit)
{
  QuantityOfInterest q;
  q.kind = QoIKind::mean_displacement_domain;
  q.extractor << c_u, 0.0;
  q.region_bit = region_bit;
  q.validate();
  return q;
}

QuantityOfInterest QuantityOfInterest::mean_displacement_boundary(const Vec2 &c_u,
                                                                  std::string tag,
                                                                  bool normal_frame)
{
  QuantityOfInterest q;
  q.kind = QoIKind::mean_displacement_boundary;
  q.extractor << c_u, 0.0;
  q.boundary_tag = std::move(tag);
  q.normal_frame = normal_frame;
  q.validate();
  return q;
}

QuantityOfInterest QuantityOfInterest::mean_strain_domain(const Vec3 &c_eps, int region_bit)
{
  QuantityOfInterest q;
  q.kind = QoIKind::mean_strain_domain;
  q.extractor = c_eps;
  q.region_bit = region_bit;
  q.validate();
  return q;
}

QuantityOfInterest QuantityOfInterest::mean_stress_domain(const Vec3 &c_sigma, int region_bit)
{
  QuantityOfInterest q;
  q.kind = QoIKind::mean_stress_domain;
  q.extractor = c_sigma;
  q.region_bit = region_bit;
  q.validate();
  return q;
}

QuantityOfInterest QuantityOfInterest::mean_traction_dirichlet(const Vec2 &c_R, std::string tag,
                                                               bool normal_frame)
{
  QuantityOfInterest q;
  q.kind = QoIKind::mean_traction_dirichlet;
  q.extractor << c_R, 0.0;
  q.boundary_tag = std::move(tag);
  q.normal_frame = normal_frame;
  q.validate();
  return q;
}

QuantityOfInterest QuantityOfInterest::gsif(FractureMode mode, const CornerConfig &corner,
                                            const ExtractionDomain &domain)
{
  QuantityOfInterest q;
  q.kind = QoIKind::gsif;
  q.mode = mode;
  q.corner = corner;
  q.domain = domain;
  q.validate();
  return q;
}

bool QuantityOfInterest::is_domain() const
{
  return kind == QoIKind::mean_displacement_domain || kind == QoIKind::mean_strain_domain ||
         kind == QoIKind::mean_stress_domain;
}

bool QuantityOfInterest::is_boundary() const
{
  return kind == QoIKind::mean_displacement_boundary ||
         kind == QoIKind::mean_traction_dirichlet;
}

void QuantityOfInterest::validate() const
{
  if (kind == QoIKind::gsif)
  {
    domain.validate();
    return;
  }
  if (!extractor.allFinite() || extractor.norm() == 0.0)
  {
    throw Error("QoI: extractor vector must be finite and nonzero");
  }
  if (is_domain() && (region_bit < 0 || region_bit >= 32))
  {
    throw Error("QoI: region bit out of range");
  }
  if (is_boundary() && boundary_tag.empty())
  {
    throw Error("QoI: boundary tag is empty");
  }
}

FieldSampler fe_sampler(const FEField &field, bool include_initial)
{
  FieldSampler s;
  s.displacement = [&field](ElementId e, const ShapeValues &sv) {
    const auto &el = field.mesh().element(e);
    const auto &u = field.nodal();
    Vec2 v = Vec2::Zero();
    for (int a = 0; a < 4; ++a)
    {
      v += sv.N[a] * Vec2(u[2 * el.nodes[a]], u[2 * el.nodes[a] + 1]);
    }
    return v;
  };
  s.strain = [&field](ElementId e, const ShapeValues &sv) { return field.strain(e, sv).vec(); };
  if (include_initial)
  {
    s.stress = [&field](ElementId e, const ShapeValues &sv) {
      return Vec3(field.elastic_stress(e, sv) +
                  field.loads().initial_offset(field.material(), sv.x,
                                               field.mesh().element(e).regions));
    };
  }
  else
  {
    s.stress = [&field](ElementId e, const ShapeValues &sv) {
      return field.elastic_stress(e, sv);
    };
  }
  return s;
}

FieldSampler exact_sampler(std::function<Vec2(const Vec2 &)> displacement,
                           std::function<Vec3(const Vec2 &)> stress,
                           const MaterialModel &material)
{
  FieldSampler s;
  if (displacement)
  {
    s.displacement = [displacement](ElementId, const ShapeValues &sv) {
      return displacement(sv.x);
    };
  }
  if (stress)
  {
    s.stress = [stress](ElementId, const ShapeValues &sv) { return stress(sv.x); };
    s.strain = [stress, Dinv = material.Dinv()](ElementId, const ShapeValues &sv) {
      return Vec3(Dinv * stress(sv.x));
    };
  }
  return s;
}

double region_measure(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh, int order)
{
  qoi.validate();
  double m = 0.0;
  if (qoi.is_domain())
  {
    for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
    {
      if (in_region(mesh, e, qoi.region_bit))
      {
        m += mesh.element_area(e, order);
      }
    }
  }
  else if (qoi.is_boundary())
  {
    for (const auto &be : mesh.boundary_edges())
    {
      if (be.tag != qoi.boundary_tag)
      {
        continue;
      }
      for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, order))
      {
        m += ep.weight;
      }
    }
  }
  else
  {
    return 1.0;
  }
  if (!(m > 0.0))
  {
    throw Error("QoI: region of '" + to_string(qoi.kind) + "' is empty on this mesh");
  }
  return m;
}

double evaluate_qoi(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                    const MaterialModel &material, const FieldSampler &field, int order)
{
  qoi.validate();
  auto need = [&](bool ok, const char *what) {
    if (!ok)
    {
      throw Error(std::string("evaluate_qoi: sampler lacks ") + what);
    }
  };
  const auto ne = static_cast<ElementId>(mesh.num_elements());
  double total = 0.0;
  switch (qoi.kind)
  {
  case QoIKind::mean_displacement_domain:
  case QoIKind::mean_strain_domain:
  case QoIKind::mean_stress_domain: {
    const bool disp = qoi.kind == QoIKind::mean_displacement_domain;
    need(disp ? static_cast<bool>(field.displacement)
              : static_cast<bool>(qoi.kind == QoIKind::mean_strain_domain ? field.strain
                                                                           : field.stress),
         "the required field");
    double area = 0.0;
    for (ElementId e = 0; e < ne; ++e)
    {
      if (!in_region(mesh, e, qoi.region_bit))
      {
        continue;
      }
      double local = 0.0;
      for (const auto &sv : mesh.element_shape_quadrature(e, order))
      {
        double v = 0.0;
        if (disp)
        {
          v = qoi.extractor.head<2>().dot(field.displacement(e, sv));
        }
        else if (qoi.kind == QoIKind::mean_strain_domain)
        {
          v = qoi.extractor.dot(field.strain(e, sv));
        }
        else
        {
          v = qoi.extractor.dot(field.stress(e, sv));
        }
        local += sv.weight * v;
        area += sv.weight;
      }
      total += local;
    }
    if (!(area > 0.0))
    {
      throw Error("evaluate_qoi: region is empty on this mesh");
    }
    return total / area;
  }
  case QoIKind::mean_displacement_boundary:
  case QoIKind::mean_traction_dirichlet: {
    const bool disp = qoi.kind == QoIKind::mean_displacement_boundary;
    need(disp ? static_cast<bool>(field.displacement) : static_cast<bool>(field.stress),
         "the required field");
    double length = 0.0;
    for (const auto &be : mesh.boundary_edges())
    {
      if (be.tag != qoi.boundary_tag)
      {
        continue;
      }
      for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, order))
      {
        const ShapeValues sv = edge_shape(mesh, be, ep);
        const Vec2 c = global_extractor(qoi, ep.normal);
        Vec2 w;
        if (disp)
        {
          w = field.displacement(be.element, sv);
        }
        else
        {
          w = traction_projection(VoigtStress(field.stress(be.element, sv)),
                                  UnitNormal(ep.normal));
        }
        total += ep.weight * c.dot(w);
        length += ep.weight;
      }
    }
    if (!(length > 0.0))
    {
      throw Error("evaluate_qoi: boundary '" + qoi.boundary_tag + "' is absent from the mesh");
    }
    return total / length;
  }
  case QoIKind::gsif: {
    need(field.displacement && field.stress, "displacement or stress");
    check_gsif_domain(qoi, mesh);
    const LoadSet loads = dual_gsif_loads(qoi.corner, qoi.mode, material, qoi.domain);
    for (ElementId e = 0; e < ne; ++e)
    {
      for (const auto &sv : mesh.element_shape_quadrature(e, loads.quadrature_order))
      {
        const double r = (sv.x - qoi.corner.apex).norm();
        if (r <= qoi.domain.r1 || r >= qoi.domain.r2)
        {
          continue;
        }
        const Vec3 eps0 = loads.initial_strain(sv.x).vec();
        const Vec2 b = loads.body_force(sv.x);
        total += sv.weight * (field.stress(e, sv).dot(eps0) + field.displacement(e, sv).dot(b));
      }
    }
    return total;
  }
  }
  return total;
}

Eigen::VectorXd traction_weights(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh)
{
  if (qoi.kind != QoIKind::mean_traction_dirichlet)
  {
    throw Error("traction_weights: QoI is not a Dirichlet traction average");
  }
  const double length = region_measure(qoi, mesh);
  std::map<NodeId, Vec2> normals;
  for (const auto &be : mesh.boundary_edges())
  {
    if (be.tag != qoi.boundary_tag)
    {
      continue;
    }
    const auto &el = mesh.element(be.element);
    for (int k = 0; k < 2; ++k)
    {
      const NodeId n = el.nodes[(be.local_edge + k) % 4];
      auto [it, inserted] = normals.try_emplace(n, Vec2::Zero());
      it->second += node_normal(mesh, be, k);
    }
  }
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(mesh.num_nodes()));
  for (const auto &[n, nsum] : normals)
  {
    const Vec2 c = global_extractor(qoi, nsum.normalized()) / length;
    delta[2 * n] = c.x();
    delta[2 * n + 1] = c.y();
  }
  // Hanging nodes follow their masters so that delta is a conforming field.
  for (const auto &hc : mesh.hanging_constraints())
  {
    Vec2 d = Vec2::Zero();
    for (const auto &[m, w] : mesh.node_expansion(hc.slave))
    {
      d += w * Vec2(delta[2 * m], delta[2 * m + 1]);
    }
    delta[2 * hc.slave] = d.x();
    delta[2 * hc.slave + 1] = d.y();
  }
  return delta;
}

double linearized_qoi(const QuantityOfInterest &qoi, const FEField &v, int order)
{
  if (qoi.kind != QoIKind::mean_traction_dirichlet)
  {
    return evaluate_qoi(qoi, v.mesh(), v.material(), fe_sampler(v, false), order);
  }
  const auto &mesh = v.mesh();
  const FEField delta(v.mesh_ptr(), v.material(), LoadSet{}, traction_weights(qoi, mesh));
  const int k_order = default_stiffness_order(mesh);
  double total = 0.0;
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    for (const auto &sv : mesh.element_shape_quadrature(e, k_order))
    {
      total += sv.weight * v.strain(e, sv).vec().dot(delta.elastic_stress(e, sv));
    }
  }
  return total;
}

double reaction_qoi(const QuantityOfInterest &qoi, const SystemMatrix &system,
                    const FEField &field)
{
  return traction_weights(qoi, *system.mesh).dot(nodal_residual(system, field));
}

double reaction_weighted_traction(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                                  const ElementStressSampler &stress, int order)
{
  const Eigen::VectorXd delta = traction_weights(qoi, mesh);
  double total = 0.0;
  for (const auto &be : mesh.boundary_edges())
  {
    if (be.tag != qoi.boundary_tag)
    {
      continue;
    }
    const auto &el = mesh.element(be.element);
    const NodeId n0 = el.nodes[be.local_edge];
    const NodeId n1 = el.nodes[(be.local_edge + 1) % 4];
    const Vec2 d0(delta[2 * n0], delta[2 * n0 + 1]);
    const Vec2 d1(delta[2 * n1], delta[2 * n1 + 1]);
    for (const auto &ep : mesh.edge_quadrature(be.element, be.local_edge, order))
    {
      const ShapeValues sv = edge_shape(mesh, be, ep);
      const Vec2 d = 0.5 * (1.0 - ep.s) * d0 + 0.5 * (1.0 + ep.s) * d1;
      const Vec2 t =
        traction_projection(VoigtStress(stress(be.element, sv)), UnitNormal(ep.normal));
      total += ep.weight * d.dot(t);
    }
  }
  return total;
}

DualProblem dual_loads(const QuantityOfInterest &qoi, const QuadtreeMesh &mesh,
                       const MaterialModel &material, const DirichletSet &primal_dirichlet)
{
  qoi.validate();
  DualProblem dual;
  for (auto c : primal_dirichlet.edges)
  {
    c.value = nullptr;
    dual.dirichlet.edges.push_back(std::move(c));
  }
  for (auto p : primal_dirichlet.points)
  {
    p.value = nullptr;
    dual.dirichlet.points.push_back(std::move(p));
  }

  if (qoi.is_boundary() && !has_tagged_edge(mesh, qoi.boundary_tag))
  {
    throw Error("dual_loads: boundary '" + qoi.boundary_tag + "' is absent from the mesh");
  }
  const double measure = region_measure(qoi, mesh);
  auto &loads = dual.loads;
  switch (qoi.kind)
  {
  case QoIKind::mean_displacement_domain: {
    const Vec2 b = qoi.extractor.head<2>() / measure;
    loads.body_force = [b](const Vec2 &) { return b; };
    loads.region_bit = qoi.region_bit;
    loads.quadrature_order = 4;
    break;
  }
  case QoIKind::mean_displacement_boundary: {
    const QuantityOfInterest q = qoi;
    loads.tractions[qoi.boundary_tag] = [q, measure](const Vec2 &, const Vec2 &n) {
      return Vec2(global_extractor(q, n) / measure);
    };
    break;
  }
  case QoIKind::mean_strain_domain: {
    // The load functional carries -int eps(v)^T sigma_0, so the extractor enters negated.
    const Vec3 s0 = -qoi.extractor / measure;
    loads.initial_stress = [s0](const Vec2 &) { return VoigtStress(s0); };
    loads.region_bit = qoi.region_bit;
    loads.quadrature_order = 4;
    break;
  }
  case QoIKind::mean_stress_domain: {
    const Vec3 e0 = qoi.extractor / measure;
    loads.initial_strain = [e0](const Vec2 &) { return VoigtStrain(e0); };
    loads.region_bit = qoi.region_bit;
    loads.quadrature_order = 4;
    break;
  }
  case QoIKind::mean_traction_dirichlet: {
    bool found = false;
    const Eigen::VectorXd delta = traction_weights(qoi, mesh);
    std::vector<std::pair<Vec2, Vec2>> values;
    for (std::size_t n = 0; n < mesh.num_nodes(); ++n)
    {
      const Vec2 d(delta[2 * n], delta[2 * n + 1]);
      if (d.squaredNorm() > 0.0)
      {
        values.emplace_back(mesh.node(static_cast<NodeId>(n)), -d);
      }
    }
    for (auto &c : dual.dirichlet.edges)
    {
      if (c.tag != qoi.boundary_tag)
      {
        continue;
      }
      if (c.normal_frame)
      {
        throw Error("dual_loads: traction average on a rotated Dirichlet boundary");
      }
      found = true;
      c.value = [values](const Vec2 &x) {
        const std::pair<Vec2, Vec2> *best = &values.front();
        for (const auto &v : values)
        {
          if ((v.first - x).squaredNorm() < (best->first - x).squaredNorm())
          {
            best = &v;
          }
        }
        return best->second;
      };
    }
    if (!found)
    {
      throw Error("dual_loads: traction average needs Dirichlet data on '" + qoi.boundary_tag +
                  "'");
    }
    break;
  }
  case QoIKind::gsif:
    check_gsif_domain(qoi, mesh);
    loads = dual_gsif_loads(qoi.corner, qoi.mode, material, qoi.domain);
    break;
  }
  return dual;
}

Eigen::VectorXd dual_rhs(const SystemMatrix &dual_system)
{
  return dual_system.f_full - dual_system.K_full * dual_system.dofs.g;
}

FEField dual_solve(const QuantityOfInterest &qoi, std::shared_ptr<const QuadtreeMesh> mesh,
                   const MaterialModel &material, const DirichletSet &primal_dirichlet,
                   const AssemblyOptions &options)
{
  if (!mesh)
  {
    throw Error("dual_solve: null mesh");
  }
  DualProblem dual = dual_loads(qoi, *mesh, material, primal_dirichlet);
  return solve_problem(std::move(mesh), material, dual.loads, dual.dirichlet, options);
}

} // namespace goalfem
