#include "vshuttle/fields.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "vshuttle/errors.hpp"

namespace vshuttle {

namespace {

constexpr double inv_two_pi = 1.0 / units::two_pi;

struct Corner {
  double f;
  double fx, fy, fz;                     // d/dX, d/dY, d/dZ
  double fxx, fzz, fxz, fxy, fyz;        // fyy = -(fxx + fzz)
};

// Solid-angle term atan(XZ / (Y R)) for a corner offset (X, Y, Z), Y > 0.
inline double corner_value(double X, double Y, double Z) {
  const double R = std::sqrt(X * X + Y * Y + Z * Z);
  return std::atan2(X * Z, Y * R);
}

inline Corner corner_full(double X, double Y, double Z) {
  const double X2 = X * X, Y2 = Y * Y, Z2 = Z * Z;
  const double R2 = X2 + Y2 + Z2;
  const double R = std::sqrt(R2);
  const double R3 = R2 * R;
  const double a = X2 + Y2;
  const double c = Z2 + Y2;
  Corner k;
  k.f = std::atan2(X * Z, Y * R);
  k.fx = Y * Z / (a * R);
  k.fz = X * Y / (c * R);
  k.fy = -X * Z * (R2 + Y2) / (a * c * R);
  k.fxx = -X * Y * Z * (2.0 * R2 + a) / (a * a * R3);
  k.fzz = -X * Y * Z * (2.0 * R2 + c) / (c * c * R3);
  k.fxz = Y / R3;
  k.fxy = Z * (a * R2 - 2.0 * Y2 * R2 - Y2 * a) / (a * a * R3);
  k.fyz = X * (c * R2 - 2.0 * Y2 * R2 - Y2 * c) / (c * c * R3);
  return k;
}

// Gradient-only variant for the full-RF force loop.
inline void corner_gradient(double X, double Y, double Z, double& gx, double& gy, double& gz) {
  const double X2 = X * X, Y2 = Y * Y, Z2 = Z * Z;
  const double R2 = X2 + Y2 + Z2;
  const double R = std::sqrt(R2);
  const double a = X2 + Y2;
  const double c = Z2 + Y2;
  gx = Y * Z / (a * R);
  gz = X * Y / (c * R);
  gy = -X * Z * (R2 + Y2) / (a * c * R);
}

double rect_value(double x1, double x2, double z1, double z2, const Vec3& r) {
  const double y = r.y();
  const double s = corner_value(x2 - r.x(), y, z2 - r.z()) - corner_value(x1 - r.x(), y, z2 - r.z()) -
                   corner_value(x2 - r.x(), y, z1 - r.z()) + corner_value(x1 - r.x(), y, z1 - r.z());
  return s * inv_two_pi;
}

void rect_derivatives(double x1, double x2, double z1, double z2, const Vec3& r, FieldSample& out) {
  const double y = r.y();
  const double xs[2] = {x1 - r.x(), x2 - r.x()};
  const double zs[2] = {z1 - r.z(), z2 - r.z()};
  double f = 0, gx = 0, gy = 0, gz = 0, hxx = 0, hzz = 0, hxz = 0, hxy = 0, hyz = 0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double sign = (i == j) ? 1.0 : -1.0;  // (x2,z2)+ (x1,z2)- (x2,z1)- (x1,z1)+
      const Corner k = corner_full(xs[i], y, zs[j]);
      f += sign * k.f;
      gx -= sign * k.fx;
      gy += sign * k.fy;
      gz -= sign * k.fz;
      hxx += sign * k.fxx;
      hzz += sign * k.fzz;
      hxz += sign * k.fxz;
      hxy -= sign * k.fxy;
      hyz -= sign * k.fyz;
    }
  }
  out.potential = f * inv_two_pi;
  out.gradient = Vec3(gx, gy, gz) * inv_two_pi;
  Mat3 h;
  h << hxx, hxy, hxz,
       hxy, -(hxx + hzz), hyz,
       hxz, hyz, hzz;
  out.hessian = h * inv_two_pi;
}

Vec3 rect_gradient(double x1, double x2, double z1, double z2, const Vec3& r) {
  const double y = r.y();
  const double xs[2] = {x1 - r.x(), x2 - r.x()};
  const double zs[2] = {z1 - r.z(), z2 - r.z()};
  double gx = 0, gy = 0, gz = 0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double sign = (i == j) ? 1.0 : -1.0;
      double cx, cy, cz;
      corner_gradient(xs[i], y, zs[j], cx, cy, cz);
      gx -= sign * cx;
      gy += sign * cy;
      gz -= sign * cz;
    }
  }
  return Vec3(gx, gy, gz) * inv_two_pi;
}

void require_above_plane(const FieldPoint& p) {
  if (!(p.y > 0)) throw Error(ErrorCode::domain_error, "field point must have y > 0");
}

void require_above_plane(const Vec3& r) {
  if (!(r.y() > 0)) throw Error(ErrorCode::domain_error, "field point must have y > 0");
}

double node_voltage(const NodeVoltages& v, const std::string& node) {
  auto it = v.find(node);
  return it == v.end() ? 0.0 : it->second;
}

}  // namespace

double DriveState::dc(std::string_view node) const {
  auto it = dc_voltages.find(node);
  return it == dc_voltages.end() ? 0.0 : it->second;
}

void DriveState::validate(double limit) const {
  if (!(omega > 0)) throw Error(ErrorCode::validation_error, "drive.Omega must be > 0");
  auto check = [&](const std::string& name, double v) {
    if (!(std::abs(v) <= limit))
      throw Error(ErrorCode::validation_error,
                  name + " = " + std::to_string(v) + " V exceeds the " + std::to_string(limit) +
                      " V limit");
  };
  check("drive.V_rf", v_rf);
  check("drive.V_ce", v_ce);
  for (const auto& [node, v] : dc_voltages) check("drive.dc." + node, v);
}

PhysicalConstants PhysicalConstants::from_species(double mass_amu, double charge_e) {
  if (!(mass_amu > 0)) throw Error(ErrorCode::validation_error, "ion mass must be > 0");
  if (charge_e == 0) throw Error(ErrorCode::validation_error, "ion charge must be non-zero");
  return {mass_amu * units::atomic_mass, charge_e * units::elementary_charge, units::hbar};
}

NodeVoltages rf_node_voltages(const TrapLayout& layout, const DriveState& drive) {
  NodeVoltages v;
  for (const auto& e : layout.electrodes()) {
    if (e.role == ElectrodeRole::rf_rail) v[e.node] = drive.v_rf;
    else if (e.role == ElectrodeRole::central_rf) v[e.node] = drive.v_ce;
  }
  return v;
}

NodeVoltages dc_node_voltages(const TrapLayout& layout, const DriveState& drive) {
  NodeVoltages v;
  for (const auto& e : layout.electrodes()) {
    if (e.role == ElectrodeRole::dc_segment || e.role == ElectrodeRole::ground)
      v[e.node] = drive.dc(e.node);
  }
  return v;
}

double patch_potential(const Electrode& e, double applied_volts, const FieldPoint& p) {
  require_above_plane(p);
  // The kernel is scale-free, so micrometres work directly.
  return applied_volts * rect_value(e.x1, e.x2, e.z1, e.z2, Vec3(p.x, p.y, p.z));
}

double node_basis_potential(const TrapLayout& layout, std::string_view node, const FieldPoint& p) {
  if (!layout.has_node(node))
    throw Error(ErrorCode::unknown_node, "layout has no node '" + std::string(node) + "'");
  double sum = 0;
  for (const Electrode* e : layout.electrodes_of(node)) sum += patch_potential(*e, 1.0, p);
  return sum;
}

double layout_potential(const TrapLayout& layout, const NodeVoltages& voltages, const FieldPoint& p) {
  require_above_plane(p);
  double sum = 0;
  for (const auto& e : layout.electrodes()) {
    const double v = node_voltage(voltages, e.node);
    if (v != 0) sum += patch_potential(e, v, p);
  }
  return sum;
}

FieldSample field_and_hessian(const TrapLayout& layout, const NodeVoltages& voltages,
                              const FieldPoint& p, const FdOptions& opts) {
  require_above_plane(p);
  if (p.y <= 2.0 * opts.min_step_um)
    throw Error(ErrorCode::domain_error, "point too close to the trap plane for finite differences");
  double h = std::max(opts.relative_step * p.y, opts.min_step_um);
  if (p.y - h <= 0) h = std::max(0.25 * p.y, opts.min_step_um);

  auto phi = [&](double dx, double dy, double dz) {
    return layout_potential(layout, voltages, {p.x + dx, p.y + dy, p.z + dz});
  };
  const double f0 = phi(0, 0, 0);

  auto estimate = [&](double s, Vec3& g, Mat3& H) {
    double fp[3], fm[3];
    for (int i = 0; i < 3; ++i) {
      double d[3] = {0, 0, 0};
      d[i] = s;
      fp[i] = phi(d[0], d[1], d[2]);
      fm[i] = phi(-d[0], -d[1], -d[2]);
      g[i] = (fp[i] - fm[i]) / (2 * s);
      H(i, i) = (fp[i] - 2 * f0 + fm[i]) / (s * s);
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        double a[3] = {0, 0, 0}, b[3] = {0, 0, 0};
        a[i] = s;
        b[j] = s;
        const double fpp = phi(a[0] + b[0], a[1] + b[1], a[2] + b[2]);
        const double fpm = phi(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
        const double fmp = phi(-a[0] + b[0], -a[1] + b[1], -a[2] + b[2]);
        const double fmm = phi(-a[0] - b[0], -a[1] - b[1], -a[2] - b[2]);
        H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4 * s * s);
      }
    }
  };

  Vec3 g1, g2;
  Mat3 H1, H2;
  estimate(h, g1, H1);
  estimate(0.5 * h, g2, H2);

  FieldSample out;
  out.potential = f0;
  // Richardson: O(h^2) error terms cancel; convert from per-um to per-m.
  out.gradient = (4.0 * g2 - g1) / 3.0 / units::micron;
  Mat3 H = (4.0 * H2 - H1) / 3.0 / (units::micron * units::micron);
  out.hessian = 0.5 * (H + H.transpose());
  return out;
}

double pseudopotential(const TrapLayout& layout, const DriveState& drive,
                       const PhysicalConstants& consts, const FieldPoint& p) {
  require_above_plane(p);
  if (!(drive.omega > 0)) throw Error(ErrorCode::domain_error, "Omega must be > 0");
  return EffectivePotential(layout, drive, consts).pseudo_energy(p.si());
}

double total_effective_potential(const TrapLayout& layout, const DriveState& drive,
                                 const PhysicalConstants& consts, const FieldPoint& p) {
  require_above_plane(p);
  if (!(drive.omega > 0)) throw Error(ErrorCode::domain_error, "Omega must be > 0");
  return EffectivePotential(layout, drive, consts).energy(p.si());
}

FieldSample patch_derivatives(const Electrode& e, const Vec3& r) {
  require_above_plane(r);
  FieldSample out;
  rect_derivatives(e.x1 * units::micron, e.x2 * units::micron, e.z1 * units::micron,
                   e.z2 * units::micron, r, out);
  return out;
}

// ---------------------------------------------------------------------------

EffectivePotential::EffectivePotential(const TrapLayout& layout, const DriveState& drive,
                                       const PhysicalConstants& consts)
    : consts_(consts) {
  for (const auto& e : layout.electrodes()) {
    Patch p;
    p.x1 = e.x1 * units::micron;
    p.x2 = e.x2 * units::micron;
    p.z1 = e.z1 * units::micron;
    p.z2 = e.z2 * units::micron;
    p.role = e.role;
    p.node = e.node;
    patches_.push_back(std::move(p));
  }
  set_drive(drive);
}

void EffectivePotential::set_drive(const DriveState& drive) {
  drive_ = drive;
  for (auto& p : patches_) {
    p.rf_weight = 0;
    p.dc_weight = 0;
    if (p.role == ElectrodeRole::rf_rail) p.rf_weight = drive.v_rf;
    else if (p.role == ElectrodeRole::central_rf) p.rf_weight = drive.v_ce;
    else p.dc_weight = drive.dc(p.node);
  }
}

void EffectivePotential::accumulate(const Vec3& r, FieldSample* rf, FieldSample* dc,
                                    bool want_hessian) const {
  require_above_plane(r);
  FieldSample s;
  for (const auto& p : patches_) {
    const double wr = rf ? p.rf_weight : 0.0;
    const double wd = dc ? p.dc_weight : 0.0;
    if (wr == 0 && wd == 0) continue;
    if (want_hessian) {
      rect_derivatives(p.x1, p.x2, p.z1, p.z2, r, s);
    } else {
      s.potential = rect_value(p.x1, p.x2, p.z1, p.z2, r);
      s.gradient = rect_gradient(p.x1, p.x2, p.z1, p.z2, r);
      s.hessian.setZero();
    }
    if (wr != 0) {
      rf->potential += wr * s.potential;
      rf->gradient += wr * s.gradient;
      rf->hessian += wr * s.hessian;
    }
    if (wd != 0) {
      dc->potential += wd * s.potential;
      dc->gradient += wd * s.gradient;
      dc->hessian += wd * s.hessian;
    }
  }
}

FieldSample EffectivePotential::rf_field(const Vec3& r) const {
  FieldSample rf;
  accumulate(r, &rf, nullptr, true);
  return rf;
}

FieldSample EffectivePotential::dc_field(const Vec3& r) const {
  FieldSample dc;
  accumulate(r, nullptr, &dc, true);
  return dc;
}

double EffectivePotential::pseudo_energy(const Vec3& r) const {
  require_above_plane(r);
  Vec3 g = Vec3::Zero();
  for (const auto& p : patches_)
    if (p.rf_weight != 0) g += p.rf_weight * rect_gradient(p.x1, p.x2, p.z1, p.z2, r);
  const double Q = consts_.ion_charge;
  return Q * Q * g.squaredNorm() / (4.0 * consts_.ion_mass * drive_.omega * drive_.omega);
}

double EffectivePotential::energy(const Vec3& r) const {
  require_above_plane(r);
  Vec3 g = Vec3::Zero();
  double phi_dc = 0;
  for (const auto& p : patches_) {
    if (p.rf_weight != 0) g += p.rf_weight * rect_gradient(p.x1, p.x2, p.z1, p.z2, r);
    if (p.dc_weight != 0) phi_dc += p.dc_weight * rect_value(p.x1, p.x2, p.z1, p.z2, r);
  }
  const double Q = consts_.ion_charge;
  return Q * Q * g.squaredNorm() / (4.0 * consts_.ion_mass * drive_.omega * drive_.omega) +
         Q * phi_dc;
}

Vec3 EffectivePotential::pseudo_gradient(const Vec3& r) const {
  const FieldSample rf = rf_field(r);
  const double Q = consts_.ion_charge;
  return Q * Q / (2.0 * consts_.ion_mass * drive_.omega * drive_.omega) * (rf.hessian * rf.gradient);
}

Vec3 EffectivePotential::gradient(const Vec3& r) const {
  FieldSample rf, dc;
  accumulate(r, &rf, &dc, true);
  const double Q = consts_.ion_charge;
  return Q * Q / (2.0 * consts_.ion_mass * drive_.omega * drive_.omega) * (rf.hessian * rf.gradient) +
         Q * dc.gradient;
}

namespace {

template <class GradFn>
Mat3 fd_jacobian(const GradFn& grad, const Vec3& r) {
  // Fourth-order central stencil of the analytic gradient.
  const double h = 1e-3 * std::max(r.y(), 1e-6);
  Mat3 H;
  for (int i = 0; i < 3; ++i) {
    Vec3 d = Vec3::Zero();
    d[i] = h;
    const Vec3 col = (-grad(r + 2 * d) + 8.0 * grad(r + d) - 8.0 * grad(r - d) + grad(r - 2 * d)) /
                     (12.0 * h);
    H.col(i) = col;
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

Mat3 EffectivePotential::hessian(const Vec3& r) const {
  require_above_plane(r);
  return fd_jacobian([this](const Vec3& x) { return gradient(x); }, r);
}

Mat3 EffectivePotential::pseudo_hessian(const Vec3& r) const {
  require_above_plane(r);
  return fd_jacobian([this](const Vec3& x) { return pseudo_gradient(x); }, r);
}

Vec3 EffectivePotential::instantaneous_force(const Vec3& r, double rf_cos) const {
  require_above_plane(r);
  Vec3 g = Vec3::Zero();
  for (const auto& p : patches_) {
    const double w = p.rf_weight * rf_cos + p.dc_weight;
    if (w != 0) g += w * rect_gradient(p.x1, p.x2, p.z1, p.z2, r);
  }
  return -consts_.ion_charge * g;
}

void write_field_map_csv(std::ostream& os, const TrapLayout& layout, const DriveState& drive,
                         const PhysicalConstants& consts, const GridSpec& grid, bool effective) {
  const EffectivePotential pot(layout, drive, consts);
  const NodeVoltages dc = dc_node_voltages(layout, drive);
  os << "# units: x,y,z in m; " << (effective ? "U in J (pseudopotential + Q*phi_DC)" : "phi in V (DC nodes)")
     << "\n";
  os << (effective ? "x,y,z,U\n" : "x,y,z,phi\n");
  os << std::setprecision(12);
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      for (int k = 0; k < grid.nz; ++k) {
        const FieldPoint p{grid.origin.x + i * grid.step.x, grid.origin.y + j * grid.step.y,
                           grid.origin.z + k * grid.step.z};
        const Vec3 r = p.si();
        const double v = effective ? pot.energy(r) : layout_potential(layout, dc, p);
        os << r.x() << ',' << r.y() << ',' << r.z() << ',' << v << '\n';
      }
    }
  }
}

}  // namespace vshuttle
