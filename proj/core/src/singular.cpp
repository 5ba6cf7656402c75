#include "goalfem/singular.hpp"

#include "goalfem/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace goalfem
{

std::pair<double, double> CornerConfig::polar(const Vec2 &x) const
{
  const Vec2 d = x - apex;
  const double r = d.norm();
  double phi = std::atan2(d.y(), d.x()) - rotation;
  // Wrap into (-pi, pi].
  phi = std::remainder(phi, 2.0 * std::numbers::pi);
  if (phi <= -std::numbers::pi)
  {
    phi += 2.0 * std::numbers::pi;
  }
  return {r, phi};
}

CornerConfig lshape_corner()
{
  CornerConfig c;
  c.apex = Vec2::Zero();
  c.opening_angle = 1.5 * std::numbers::pi;
  c.rotation = 0.75 * std::numbers::pi;
  return c;
}

double characteristic_function(double omega, FractureMode mode, double lambda)
{
  const double s = lambda * std::sin(omega);
  return mode == FractureMode::I ? std::sin(lambda * omega) + s : std::sin(lambda * omega) - s;
}

namespace
{

std::optional<double> find_eigenvalue(double omega, FractureMode mode)
{
  constexpr int n = 4000;
  constexpr double zero_tol = 1e-13;
  auto f = [&](double l) { return characteristic_function(omega, mode, l); };
  double lo = 0.0;
  double flo = f(1.0 / (16.0 * n));
  lo = 1.0 / (16.0 * n);
  for (int k = 1; k <= n; ++k)
  {
    const double hi = static_cast<double>(k) / n;
    const double fhi = f(hi);
    if (std::abs(fhi) < zero_tol)
    {
      if (mode == FractureMode::II && k == n)
      {
        return std::nullopt; // lambda = 1 is the rigid rotation, not a singular mode
      }
      return hi;
    }
    if ((flo < 0.0) != (fhi < 0.0))
    {
      double a = lo;
      double b = hi;
      double fa = flo;
      for (int it = 0; it < 200 && b - a > 1e-16; ++it)
      {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if ((fm < 0.0) == (fa < 0.0))
        {
          a = m;
          fa = fm;
        }
        else
        {
          b = m;
        }
      }
      const double root = 0.5 * (a + b);
      if (mode == FractureMode::II && std::abs(root - 1.0) < 1e-12)
      {
        return std::nullopt;
      }
      return root;
    }
    lo = hi;
    flo = fhi;
  }
  return std::nullopt;
}

} // namespace

std::optional<double> corner_eigenvalue(double omega, FractureMode mode)
{
  if (!(omega > 0.0) || omega > 2.0 * std::numbers::pi + 1e-14)
  {
    throw Error("corner_eigenvalue: opening angle must lie in (0, 2 pi]");
  }
  static std::mutex mutex;
  static std::map<std::pair<double, int>, std::optional<double>> cache;
  const auto key = std::make_pair(omega, static_cast<int>(mode));
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end())
    {
      return it->second;
    }
  }
  const auto value = find_eigenvalue(omega, mode);
  std::lock_guard lock(mutex);
  cache.emplace(key, value);
  return value;
}

// ---------------------------------------------------------------------------------------------
// CornerEigenfield

CornerEigenfield::CornerEigenfield(CornerConfig corner, FractureMode mode, double exponent,
                                   MaterialModel material)
  : corner_(corner), mode_(mode), exponent_(exponent), material_(std::move(material))
{
  const double e = exponent_;
  if (std::abs(e + 1.0) < 1e-12 || std::abs(e) < 1e-12)
  {
    throw Error("CornerEigenfield: exponent must differ from 0 and -1");
  }
  const double a = 0.5 * corner_.opening_angle;
  const double cp = std::cos((e + 1.0) * a);
  const double cm = std::cos((e - 1.0) * a);
  const double sp = std::sin((e + 1.0) * a);
  const double sm = std::sin((e - 1.0) * a);
  Eigen::Matrix2d M;
  if (mode_ == FractureMode::I)
  {
    // F = A cos((e+1) phi) + B cos((e-1) phi); F(a) = F'(a) = 0.
    M << cp, cm, (e + 1.0) * sp, (e - 1.0) * sm;
  }
  else
  {
    // F = A sin((e+1) phi) + B sin((e-1) phi); F(a) = F'(a) = 0.
    M << sp, sm, (e + 1.0) * cp, (e - 1.0) * cm;
  }
  const int row = M.row(0).norm() >= M.row(1).norm() ? 0 : 1;
  double A = M(row, 1);
  double B = -M(row, 0);
  if (mode_ == FractureMode::I)
  {
    const double scale = (e + 1.0) * (A + B);
    if (std::abs(scale) < 1e-14)
    {
      throw Error("CornerEigenfield: degenerate mode I normalization");
    }
    A /= scale;
    B /= scale;
  }
  else
  {
    const double scale = -((e + 1.0) * A + (e - 1.0) * B);
    if (std::abs(scale) < 1e-14)
    {
      throw Error("CornerEigenfield: degenerate mode II normalization");
    }
    A /= scale;
    B /= scale;
  }
  A_ = A;
  B_ = B;
}

CornerEigenfield CornerEigenfield::singular(const CornerConfig &corner, FractureMode mode,
                                            const MaterialModel &material)
{
  const auto lambda = corner_eigenvalue(corner.opening_angle, mode);
  if (!lambda)
  {
    throw Error("CornerEigenfield: corner is not singular for this mode");
  }
  return CornerEigenfield(corner, mode, *lambda, material);
}

CornerEigenfield CornerEigenfield::auxiliary(const CornerConfig &corner, FractureMode mode,
                                             const MaterialModel &material)
{
  const auto lambda = corner_eigenvalue(corner.opening_angle, mode);
  if (!lambda)
  {
    throw Error("CornerEigenfield: corner is not singular for this mode");
  }
  return CornerEigenfield(corner, mode, -*lambda, material);
}

Vec3 CornerEigenfield::polar_stress(double r, double phi) const
{
  const double e = exponent_;
  const double p = e + 1.0;
  const double m = e - 1.0;
  double F = 0.0;
  double dF = 0.0;
  double d2F = 0.0;
  if (mode_ == FractureMode::I)
  {
    F = A_ * std::cos(p * phi) + B_ * std::cos(m * phi);
    dF = -A_ * p * std::sin(p * phi) - B_ * m * std::sin(m * phi);
    d2F = -A_ * p * p * std::cos(p * phi) - B_ * m * m * std::cos(m * phi);
  }
  else
  {
    F = A_ * std::sin(p * phi) + B_ * std::sin(m * phi);
    dF = A_ * p * std::cos(p * phi) + B_ * m * std::cos(m * phi);
    d2F = -A_ * p * p * std::sin(p * phi) - B_ * m * m * std::sin(m * phi);
  }
  const double rp = std::pow(r, e - 1.0);
  return Vec3(rp * (d2F + p * F), rp * e * p * F, -rp * e * dF);
}

Vec3 CornerEigenfield::stress(const Vec2 &x) const
{
  const auto [r, phi] = corner_.polar(x);
  if (!(r > 0.0))
  {
    throw Error("CornerEigenfield::stress: evaluation at the corner apex");
  }
  const Vec3 sp = polar_stress(r, phi);
  const double th = phi + corner_.rotation;
  const double c = std::cos(th);
  const double s = std::sin(th);
  return Vec3(sp[0] * c * c + sp[1] * s * s - 2.0 * sp[2] * s * c,
              sp[0] * s * s + sp[1] * c * c + 2.0 * sp[2] * s * c,
              (sp[0] - sp[1]) * s * c + sp[2] * (c * c - s * s));
}

Vec2 CornerEigenfield::displacement(const Vec2 &x) const
{
  const auto [r, phi] = corner_.polar(x);
  if (!(r > 0.0))
  {
    throw Error("CornerEigenfield::displacement: evaluation at the corner apex");
  }
  const double e = exponent_;
  const double p = e + 1.0;
  const double m = e - 1.0;
  const double kappa = material_.kolosov();
  const double re = std::pow(r, e) / (2.0 * material_.shear_modulus());
  double ur = 0.0;
  double ut = 0.0;
  if (mode_ == FractureMode::I)
  {
    ur = re * (-A_ * p * std::cos(p * phi) + B_ * (kappa - e) * std::cos(m * phi));
    ut = re * (A_ * p * std::sin(p * phi) + B_ * (kappa + e) * std::sin(m * phi));
  }
  else
  {
    ur = re * (-A_ * p * std::sin(p * phi) + B_ * (kappa - e) * std::sin(m * phi));
    ut = re * (-A_ * p * std::cos(p * phi) - B_ * (kappa + e) * std::cos(m * phi));
  }
  const double th = phi + corner_.rotation;
  const double c = std::cos(th);
  const double s = std::sin(th);
  return Vec2(ur * c - ut * s, ur * s + ut * c);
}

DisplacementStress asymptotic_fields(const CornerConfig &corner, FractureMode mode, double K,
                                     const Vec2 &x, const MaterialModel &material)
{
  const auto f = CornerEigenfield::singular(corner, mode, material);
  return {K * f.displacement(x), K * f.stress(x)};
}

// ---------------------------------------------------------------------------------------------
// Extraction

void ExtractionDomain::validate() const
{
  if (!(r1 > 0.0) || !(r1 < r2))
  {
    throw Error("ExtractionDomain: need 0 < r1 < r2");
  }
}

double ExtractionDomain::q(double r) const
{
  if (r <= r1)
  {
    return 1.0;
  }
  if (r >= r2)
  {
    return 0.0;
  }
  const double s = (r - r1) / (r2 - r1);
  return 1.0 - 6.0 * s * s + 8.0 * s * s * s - 3.0 * s * s * s * s;
}

double ExtractionDomain::dq_dr(double r) const
{
  if (r <= r1 || r >= r2)
  {
    return 0.0;
  }
  const double s = (r - r1) / (r2 - r1);
  return (-12.0 * s + 24.0 * s * s - 12.0 * s * s * s) / (r2 - r1);
}

Vec2 ExtractionDomain::grad_q(const Vec2 &x, const Vec2 &apex) const
{
  const Vec2 d = x - apex;
  const double r = d.norm();
  const double dq = dq_dr(r);
  if (dq == 0.0)
  {
    return Vec2::Zero();
  }
  return dq * d / r;
}

namespace
{

double integrand(const DisplacementStress &f, const DisplacementStress &aux, const Vec2 &gq)
{
  const Vec2 su(f.sigma[0] * aux.u.x() + f.sigma[2] * aux.u.y(),
                f.sigma[2] * aux.u.x() + f.sigma[1] * aux.u.y());
  const Vec2 as(aux.sigma[0] * f.u.x() + aux.sigma[2] * f.u.y(),
                aux.sigma[2] * f.u.x() + aux.sigma[1] * f.u.y());
  return -(su - as).dot(gq);
}

double polar_integral(const DisplacementStressSampler &field, const CornerEigenfield &aux,
                      const CornerConfig &corner, const ExtractionDomain &domain)
{
  const auto &gr = gauss_legendre(24);
  const auto &ga = gauss_legendre(64);
  const double half = 0.5 * corner.opening_angle;
  // The angular range is split in four to follow the harmonics comfortably.
  constexpr int segments = 4;
  double total = 0.0;
  for (std::size_t i = 0; i < gr.points.size(); ++i)
  {
    const double r = domain.r1 + 0.5 * (domain.r2 - domain.r1) * (gr.points[i] + 1.0);
    const double wr = 0.5 * (domain.r2 - domain.r1) * gr.weights[i];
    for (int seg = 0; seg < segments; ++seg)
    {
      const double p0 = -half + 2.0 * half * seg / segments;
      const double p1 = -half + 2.0 * half * (seg + 1) / segments;
      for (std::size_t j = 0; j < ga.points.size(); ++j)
      {
        const double phi = p0 + 0.5 * (p1 - p0) * (ga.points[j] + 1.0);
        const double wp = 0.5 * (p1 - p0) * ga.weights[j];
        const double th = phi + corner.rotation;
        const Vec2 x = corner.apex + r * Vec2(std::cos(th), std::sin(th));
        const DisplacementStress a{aux.displacement(x), aux.stress(x)};
        total += wr * wp * r * integrand(field(x), a, domain.grad_q(x, corner.apex));
      }
    }
  }
  return total;
}

} // namespace

double extraction_constant(const CornerConfig &corner, FractureMode mode,
                           const MaterialModel &material, const ExtractionDomain &domain)
{
  domain.validate();
  const auto unit = CornerEigenfield::singular(corner, mode, material);
  const auto aux = CornerEigenfield::auxiliary(corner, mode, material);
  const double C = polar_integral(
    [&](const Vec2 &x) { return DisplacementStress{unit.displacement(x), unit.stress(x)}; }, aux,
    corner, domain);
  if (!(std::abs(C) > 0.0))
  {
    throw Error("extraction_constant: vanishing extraction constant");
  }
  return C;
}

double extract_gsif(const DisplacementStressSampler &field, const CornerConfig &corner,
                    FractureMode mode, const MaterialModel &material,
                    const ExtractionDomain &domain)
{
  domain.validate();
  const auto aux = CornerEigenfield::auxiliary(corner, mode, material);
  return polar_integral(field, aux, corner, domain) /
         extraction_constant(corner, mode, material, domain);
}

namespace
{

void check_annulus_inside(const QuadtreeMesh &mesh, const CornerConfig &corner,
                          const ExtractionDomain &domain)
{
  const double half = 0.5 * corner.opening_angle;
  for (int k = 0; k <= 720; ++k)
  {
    const double phi = -half + 2.0 * half * k / 720.0;
    const double th = phi + corner.rotation;
    const Vec2 x = corner.apex + domain.r2 * Vec2(std::cos(th), std::sin(th));
    if (!mesh.geometry().contains(x, 1e-9 * domain.r2))
    {
      throw Error("extract_gsif: extraction annulus is not inside the domain");
    }
  }
}

bool element_meets_annulus(const QuadtreeMesh &mesh, ElementId e, const Vec2 &apex,
                           const ExtractionDomain &domain)
{
  const auto &el = mesh.element(e);
  Vec2 c = Vec2::Zero();
  for (NodeId n : el.nodes)
  {
    c += 0.25 * mesh.node(n);
  }
  double rad = 0.0;
  for (NodeId n : el.nodes)
  {
    rad = std::max(rad, (mesh.node(n) - c).norm());
  }
  const double d = (c - apex).norm();
  return d + rad > domain.r1 && d - rad < domain.r2;
}

} // namespace

double extract_gsif(const FEField &field, const CornerConfig &corner, FractureMode mode,
                    const ExtractionDomain &domain, int order)
{
  domain.validate();
  const auto &mesh = field.mesh();
  check_annulus_inside(mesh, corner, domain);
  const auto aux = CornerEigenfield::auxiliary(corner, mode, field.material());
  double total = 0.0;
  for (ElementId e = 0; e < static_cast<ElementId>(mesh.num_elements()); ++e)
  {
    if (!element_meets_annulus(mesh, e, corner.apex, domain))
    {
      continue;
    }
    const std::uint32_t regions = mesh.element(e).regions;
    for (const auto &sv : mesh.element_shape_quadrature(e, order))
    {
      const Vec2 gq = domain.grad_q(sv.x, corner.apex);
      if (gq.squaredNorm() == 0.0)
      {
        continue;
      }
      DisplacementStress f;
      for (int a = 0; a < 4; ++a)
      {
        const NodeId n = mesh.element(e).nodes[a];
        f.u += sv.N[a] * Vec2(field.nodal()[2 * n], field.nodal()[2 * n + 1]);
      }
      f.sigma = field.elastic_stress(e, sv) +
                field.loads().initial_offset(field.material(), sv.x, regions);
      const DisplacementStress a{aux.displacement(sv.x), aux.stress(sv.x)};
      total += sv.weight * integrand(f, a, gq);
    }
  }
  return total / extraction_constant(corner, mode, field.material(), domain);
}

LoadSet dual_gsif_loads(const CornerConfig &corner, FractureMode mode,
                        const MaterialModel &material, const ExtractionDomain &domain)
{
  domain.validate();
  const auto aux = CornerEigenfield::auxiliary(corner, mode, material);
  const double C = extraction_constant(corner, mode, material, domain);
  LoadSet loads;
  loads.quadrature_order = 8;
  loads.initial_strain = [aux, C, domain, apex = corner.apex](const Vec2 &x) {
    const Vec2 gq = domain.grad_q(x, apex);
    if (gq.squaredNorm() == 0.0)
    {
      return VoigtStrain();
    }
    const Vec2 u = aux.displacement(x);
    return VoigtStrain(-Vec3(u.x() * gq.x(), u.y() * gq.y(), u.y() * gq.x() + u.x() * gq.y()) /
                       C);
  };
  loads.body_force = [aux, C, domain, apex = corner.apex](const Vec2 &x) {
    const Vec2 gq = domain.grad_q(x, apex);
    if (gq.squaredNorm() == 0.0)
    {
      return Vec2(Vec2::Zero());
    }
    const Vec3 s = aux.stress(x);
    return Vec2(Vec2(s[0] * gq.x() + s[2] * gq.y(), s[2] * gq.x() + s[1] * gq.y()) / C);
  };
  return loads;
}

// ---------------------------------------------------------------------------------------------
// Splitting

bool SingularSplit::active_at(const Vec2 &x) const
{
  return radius > 0.0 && (x - corner.apex).norm() < radius;
}

Vec3 SingularSplit::stress(const Vec2 &x, const MaterialModel &material) const
{
  Vec3 s = Vec3::Zero();
  if (!active_at(x))
  {
    return s;
  }
  if (K_I != 0.0)
  {
    s += K_I * CornerEigenfield::singular(corner, FractureMode::I, material).stress(x);
  }
  if (K_II != 0.0)
  {
    s += K_II * CornerEigenfield::singular(corner, FractureMode::II, material).stress(x);
  }
  return s;
}

ElementStressSampler split_singular_smooth(const FEField &field, const SingularSplit &split)
{
  return [&field, split](ElementId e, const ShapeValues &sv) -> Vec3 {
    const std::uint32_t regions = field.mesh().element(e).regions;
    const Vec3 sh =
      field.elastic_stress(e, sv) + field.loads().initial_offset(field.material(), sv.x, regions);
    return sh - split.stress(sv.x, field.material());
  };
}

} // namespace goalfem
