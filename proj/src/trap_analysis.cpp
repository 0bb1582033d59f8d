#include "vshuttle/trap_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "vshuttle/errors.hpp"

namespace vshuttle {

namespace {

struct Objective {
  const EffectivePotential& pot;
  bool pseudo_only;

  double value(const Vec3& r) const { return pseudo_only ? pot.pseudo_energy(r) : pot.energy(r); }
  Vec3 gradient(const Vec3& r) const {
    return pseudo_only ? pot.pseudo_gradient(r) : pot.gradient(r);
  }
  Mat3 hessian(const Vec3& r) const { return pseudo_only ? pot.pseudo_hessian(r) : pot.hessian(r); }
};

std::string describe(const Vec3& r) {
  std::ostringstream os;
  os << "(" << units::m_to_um(r.x()) << ", " << units::m_to_um(r.y()) << ", "
     << units::m_to_um(r.z()) << ") um";
  return os.str();
}

bool positive_definite(const Mat3& H) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0;
}

// Returns true on convergence; x is updated in place.
bool newton(const Objective& f, Vec3& x, double h0, double y_max, const MinimizerOptions& opts) {
  auto inside = [&](const Vec3& r) { return r.y() > 0 && r.y() < y_max; };
  for (int it = 0; it < opts.max_newton_iterations; ++it) {
    const Vec3 g = f.gradient(x);
    const Mat3 H = f.hessian(x);
    Eigen::SelfAdjointEigenSolver<Mat3> es(H);
    const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
    if (!(lam_max > 0) || !std::isfinite(lam_max)) return false;
    const double tol = opts.gradient_tolerance * lam_max * h0;
    if (g.norm() < tol) return es.eigenvalues().minCoeff() > 0;

    Vec3 step;
    if (es.eigenvalues().minCoeff() > 0) {
      step = -H.ldlt().solve(g);
    } else {
      // Indefinite: descend along the gradient, curvature-scaled.
      step = -g / lam_max;
    }
    const double cap = 0.25 * h0;
    if (step.norm() > cap) step *= cap / step.norm();

    const double u0 = f.value(x);
    const double g0 = g.norm();
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Vec3 xn = x + t * step;
      if (!inside(xn)) continue;
      // Near convergence U differences drown in round-off; accept on a
      // shrinking gradient instead.
      if (f.value(xn) < u0 || f.gradient(xn).norm() < g0) {
        x = xn;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
    if ((t * step).norm() < 1e-14 * h0) {
      const Vec3 gn = f.gradient(x);
      return gn.norm() < 1e3 * tol && positive_definite(f.hessian(x));
    }
  }
  return false;
}

// Compass search on U; used only when Newton fails.
void coordinate_descent(const Objective& f, Vec3& x, double h0, double y_max) {
  double s = 0.05 * h0;
  double u = f.value(x);
  int guard = 0;
  while (s > 1e-9 * h0 && guard++ < 20000) {
    bool improved = false;
    for (int i = 0; i < 3; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vec3 xn = x;
        xn[i] += sign * s;
        if (!(xn.y() > 0 && xn.y() < y_max)) continue;
        const double un = f.value(xn);
        if (un < u) {
          x = xn;
          u = un;
          improved = true;
        }
      }
    }
    if (!improved) s *= 0.5;
  }
}

SecularModes classify_modes(const Mat3& H, double mass) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(H);
  const Eigen::Vector3d lam = es.eigenvalues();
  const Mat3 vec = es.eigenvectors();
  if (lam.minCoeff() <= 0)
    throw Error(ErrorCode::not_a_minimum, "Hessian has a non-positive eigenvalue");

  int axial = -1;
  double best_z = -1;
  for (int i = 0; i < 3; ++i) {
    const double zc = std::abs(vec(2, i));
    if (zc > 0.7 && (axial < 0 || zc > best_z)) {
      axial = i;
      best_z = zc;
    }
  }
  if (axial < 0) {
    for (int i = 0; i < 3; ++i)
      if (std::abs(vec(2, i)) > best_z) {
        best_z = std::abs(vec(2, i));
        axial = i;
      }
  }
  int r1 = (axial + 1) % 3, r2 = (axial + 2) % 3;
  if (std::abs(vec(1, r1)) < std::abs(vec(1, r2))) std::swap(r1, r2);

  SecularModes m;
  m.omega_vertical = std::sqrt(lam[r1] / mass);
  m.omega_lateral = std::sqrt(lam[r2] / mass);
  m.omega_axial = std::sqrt(lam[axial] / mass);
  m.axis_vertical = vec.col(r1);
  m.axis_lateral = vec.col(r2);
  m.axis_axial = vec.col(axial);
  return m;
}

}  // namespace

bool StabilityParams::stable() const {
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(q[i]) < 0.9)) return false;
    const double beta2 = a[i] + 0.5 * q[i] * q[i];
    if (!(beta2 > 0 && beta2 < 1)) return false;
  }
  return true;
}

FieldPoint find_minimum(const EffectivePotential& pot, const FieldPoint& guess,
                        const MinimizerOptions& opts, bool pseudo_only) {
  if (!(guess.y > 0)) throw Error(ErrorCode::domain_error, "guess must have y > 0");
  const Objective f{pot, pseudo_only};
  const double h0 = guess.y * units::micron;
  const double y_max = opts.region_factor * h0;

  Vec3 x = guess.si();
  bool ok = false;
  try {
    ok = newton(f, x, h0, y_max, opts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::domain_error) throw;
  }
  if (!ok) {
    x = guess.si();
    try {
      coordinate_descent(f, x, h0, y_max);
      ok = newton(f, x, h0, y_max, opts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::domain_error) throw;
      throw Error(ErrorCode::no_minimum, "iteration reached the trap plane");
    }
  }
  if (!(x.y() > 0 && x.y() < y_max))
    throw Error(ErrorCode::no_minimum, "iteration left the search region near " + describe(x));
  if (!ok || !positive_definite(f.hessian(x)))
    throw Error(ErrorCode::no_minimum, "no positive-definite minimum found near " + describe(x));
  return FieldPoint::from_si(x);
}

FieldPoint find_minimum(const TrapLayout& layout, const DriveState& drive,
                        const PhysicalConstants& consts, const FieldPoint& guess,
                        const MinimizerOptions& opts) {
  return find_minimum(EffectivePotential(layout, drive, consts), guess, opts, false);
}

SecularModes secular_frequencies(const EffectivePotential& pot, const FieldPoint& at) {
  return classify_modes(pot.hessian(at.si()), pot.constants().ion_mass);
}

SecularModes secular_frequencies(const TrapLayout& layout, const DriveState& drive,
                                 const PhysicalConstants& consts, const FieldPoint& at) {
  return secular_frequencies(EffectivePotential(layout, drive, consts), at);
}

double trap_depth(const EffectivePotential& pot, const FieldPoint& at, const DepthOptions& opts) {
  const Vec3 r0 = at.si();
  const double h = r0.y();
  const double u0 = pot.energy(r0);
  const double ds = opts.radial_step * h;
  const double r_max = opts.radius_factor * h;
  const double y_floor = 0.02 * h;

  // Barrier along a ray, or NaN when U keeps rising to the search radius.
  auto ray_barrier = [&](double theta) {
    const Vec3 dir(std::cos(theta), std::sin(theta), 0.0);
    auto u_at = [&](double s) { return pot.energy(r0 + s * dir); };
    double prev = u0;
    for (int k = 1;; ++k) {
      const double s = k * ds;
      if (s > r_max) return std::numeric_limits<double>::quiet_NaN();
      const Vec3 r = r0 + s * dir;
      if (r.y() <= y_floor) return prev;  // ion reaches the surface
      const double u = pot.energy(r);
      if (u < prev) {
        if (k == 1) return u0;
        const double lo = (k - 2) * ds, hi = s;
        auto [arg, neg] = boost::math::tools::brent_find_minima(
            [&](double t) { return -u_at(t); }, lo, hi, 40);
        (void)arg;
        return -neg;
      }
      prev = u;
    }
  };

  double best = std::numeric_limits<double>::infinity();
  double best_theta = 0;
  const double dtheta = units::two_pi / opts.rays;
  for (int i = 0; i < opts.rays; ++i) {
    const double th = i * dtheta;
    const double b = ray_barrier(th);
    if (std::isfinite(b) && b < best) {
      best = b;
      best_theta = th;
    }
  }
  if (!std::isfinite(best))
    throw Error(ErrorCode::unbounded, "no escape barrier within the search radius");

  // Refine the escape direction around the best ray.
  auto [th, b] = boost::math::tools::brent_find_minima(
      [&](double t) {
        const double v = ray_barrier(t);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
      },
      best_theta - dtheta, best_theta + dtheta, 30);
  (void)th;
  best = std::min(best, b);
  return units::joule_to_ev(std::max(0.0, best - u0));
}

double trap_depth(const TrapLayout& layout, const DriveState& drive, const PhysicalConstants& consts,
                  const FieldPoint& at, const DepthOptions& opts) {
  return trap_depth(EffectivePotential(layout, drive, consts), at, opts);
}

StabilityParams mathieu_parameters(const TrapLayout& layout, const DriveState& drive,
                                   const PhysicalConstants& consts, const FieldPoint& at) {
  const EffectivePotential pot(layout, drive, consts);
  const Vec3 r = at.si();
  const Mat3 H_rf = pot.rf_field(r).hessian;
  const Mat3 H_dc = pot.dc_field(r).hessian;

  // Principal axes of the secular potential; fall back to lab axes where the
  // potential is not confining (e.g. RF off).
  std::array<Vec3, 3> axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  try {
    const SecularModes m = secular_frequencies(pot, at);
    axes = {m.axis_lateral, m.axis_vertical, m.axis_axial};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::not_a_minimum) throw;
  }

  const double Q = consts.ion_charge;
  const double denom = consts.ion_mass * drive.omega * drive.omega;
  StabilityParams s;
  for (int i = 0; i < 3; ++i) {
    s.q[i] = 2.0 * Q * axes[i].dot(H_rf * axes[i]) / denom;
    s.a[i] = 4.0 * Q * axes[i].dot(H_dc * axes[i]) / denom;
  }
  return s;
}

TrapPoint analyze_trap(const TrapLayout& layout, const DriveState& drive,
                       const PhysicalConstants& consts, const FieldPoint& guess) {
  const EffectivePotential pot(layout, drive, consts);
  TrapPoint tp;
  tp.position = find_minimum(pot, guess);
  tp.ion_height_um = tp.position.y;
  tp.modes = secular_frequencies(pot, tp.position);
  tp.trap_depth_ev = trap_depth(pot, tp.position);
  tp.mathieu = mathieu_parameters(layout, drive, consts, tp.position);
  return tp;
}

std::vector<CurveSample> height_vs_vce(const TrapLayout& layout, const DriveState& drive,
                                       const PhysicalConstants& consts,
                                       const std::vector<double>& vce_samples,
                                       const FieldPoint& guess, bool with_depth) {
  for (double v : vce_samples) {
    if (v < 0 || v > 0.5 * drive.v_rf + 1e-12)
      throw Error(ErrorCode::invalid_params,
                  "V_ce sample " + std::to_string(v) + " V outside [0, V_rf/2]");
  }
  std::vector<CurveSample> out;
  DriveState d = drive;
  EffectivePotential pot(layout, d, consts);
  FieldPoint seed = guess;
  for (double v : vce_samples) {
    d.v_ce = v;
    pot.set_drive(d);
    CurveSample s;
    s.v_ce = v;
    try {
      s.position = find_minimum(pot, seed);
      const SecularModes m = secular_frequencies(pot, s.position);
      s.height_um = s.position.y;
      s.omega_radial = m.omega_radial();
      s.omega_axial = m.omega_axial;
      s.depth_ev = with_depth ? trap_depth(pot, s.position) : 0.0;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::no_minimum || e.code() == ErrorCode::not_a_minimum)
        throw Error(ErrorCode::no_minimum,
                    "trap collapsed at V_ce = " + std::to_string(v) + " V (" + e.what() + ")");
      throw;
    }
    seed = s.position;
    out.push_back(s);
  }
  return out;
}

void write_curve_csv(std::ostream& os, const std::vector<CurveSample>& curve) {
  os << "V_ce_V,height_um,omega_radial_MHz,omega_axial_MHz,depth_eV\n";
  os << std::setprecision(10);
  for (const auto& s : curve) {
    os << s.v_ce << ',' << s.height_um << ',' << units::angular_to_mhz(s.omega_radial) << ','
       << units::angular_to_mhz(s.omega_axial) << ',' << s.depth_ev << '\n';
  }
}

}  // namespace vshuttle
