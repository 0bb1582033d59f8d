#include "vshuttle/waveforms.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include "vshuttle/errors.hpp"

namespace vshuttle {

std::string_view to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::linear: return "linear";
    case TrajectoryKind::sinusoidal: return "sinusoidal";
    case TrajectoryKind::tanh: return "tanh";
  }
  return "tanh";
}

TrajectoryKind trajectory_kind_from_string(std::string_view s) {
  if (s == "linear") return TrajectoryKind::linear;
  if (s == "sinusoidal") return TrajectoryKind::sinusoidal;
  if (s == "tanh") return TrajectoryKind::tanh;
  throw Error(ErrorCode::validation_error, "unknown trajectory kind '" + std::string(s) + "'");
}

std::string_view to_string(ShapingMode m) { return m == ShapingMode::voltage ? "voltage" : "height"; }
std::string_view to_string(DcSchedule m) { return m == DcSchedule::ramp ? "ramp" : "tracked"; }

double trajectory_position(TrajectoryKind kind, double L, double T, double N, double t) {
  if (!(T > 0)) throw Error(ErrorCode::invalid_protocol, "transport duration must be > 0");
  if (kind == TrajectoryKind::tanh && !(N > 0))
    throw Error(ErrorCode::invalid_protocol, "tanh smoothness N must be > 0");
  if (t <= 0) return 0.0;
  if (t >= T) return L;
  switch (kind) {
    case TrajectoryKind::linear:
      return L * t / T;
    case TrajectoryKind::sinusoidal:
      return 0.5 * L * (1.0 - std::cos(std::numbers::pi * t / T));
    case TrajectoryKind::tanh: {
      const double tn = std::tanh(N);
      return 0.5 * L * (std::tanh(N * (2.0 * t - T) / T) + tn) / tn;
    }
  }
  return 0.0;
}

double ramp_voltage(const VoltageRamp& r, double t) {
  const double v = std::tanh((t - r.tt1) / r.tau) * 0.5 * (r.a2 - r.a1) + 0.5 * (r.a1 + r.a2);
  return std::clamp(v, std::min(r.a1, r.a2), std::max(r.a1, r.a2));
}

// ---------------------------------------------------------------------------

Compensation compensate_dc(const TrapLayout& layout, const DriveState& drive,
                           const PhysicalConstants& consts, double v_ce,
                           const CompensationOptions& opts, std::optional<FieldPoint> nil_guess) {
  const std::string neg(nodes::dc_negative), pos(nodes::dc_positive);
  if (!layout.has_node(neg) || !layout.has_node(pos))
    throw Error(ErrorCode::unknown_node, "layout lacks the dc_pos/dc_neg nodes");

  DriveState d = drive;
  d.v_ce = v_ce;
  d.dc_voltages[pos] = opts.v_positive;
  EffectivePotential pot(layout, d, consts);
  const FieldPoint guess = nil_guess.value_or(FieldPoint{0, 100, 0});
  Compensation out;
  out.rf_nil = find_minimum(pot, guess, {}, /*pseudo_only=*/true);
  const Vec3 r = out.rf_nil.si();

  auto dc_gradient = [&](double v_neg) {
    d.dc_voltages[neg] = v_neg;
    pot.set_drive(d);
    return pot.dc_field(r).gradient;
  };
  auto residual = [&](double v_neg) { return dc_gradient(v_neg).y(); };

  double lo = opts.bracket_low, hi = opts.bracket_high;
  double f_lo = residual(lo), f_hi = residual(hi);
  if (f_lo == 0) hi = lo;
  else if (f_hi == 0) lo = hi;
  else if ((f_lo > 0) == (f_hi > 0))
    throw Error(ErrorCode::no_root, "vertical DC field does not change sign over [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "] V");

  // A few bisection steps to shrink the bracket, then secant.
  for (int i = 0; i < 8 && hi - lo > opts.tolerance; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = residual(mid);
    if ((fm > 0) == (f_lo > 0)) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
      f_hi = fm;
    }
  }
  double x0 = lo, x1 = hi, f0 = f_lo, f1 = f_hi;
  double root = 0.5 * (lo + hi);
  for (int i = 0; i < 60; ++i) {
    if (f1 == f0) break;
    const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    root = x2;
    if (std::abs(x2 - x1) < opts.tolerance * 1e-3) break;
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = residual(x2);
  }
  out.v_negative = root;
  const Vec3 g = dc_gradient(root);
  out.residual_field = std::hypot(g.y(), g.z());
  return out;
}

CompensationTable::CompensationTable(const TrapLayout& layout, const DriveState& drive,
                                     const PhysicalConstants& consts, double v_ce_begin,
                                     double v_ce_end, int knots, const CompensationOptions& opts)
    : lo_(std::min(v_ce_begin, v_ce_end)), hi_(std::max(v_ce_begin, v_ce_end)) {
  if (knots < 4) throw Error(ErrorCode::invalid_params, "compensation table needs >= 4 knots");
  if (hi_ == lo_) knots = 1;
  std::optional<FieldPoint> seed;
  for (int i = 0; i < knots; ++i) {
    const double v = knots == 1 ? lo_ : lo_ + (hi_ - lo_) * i / (knots - 1);
    const Compensation c = compensate_dc(layout, drive, consts, v, opts, seed);
    seed = c.rf_nil;
    vce_.push_back(v);
    vneg_.push_back(c.v_negative);
    nil_height_.push_back(c.rf_nil.y);
  }
  if (knots > 1) interp_ = std::make_shared<const Pchip>(std::vector<double>(vce_), std::vector<double>(vneg_));
}

double CompensationTable::operator()(double v_ce) const {
  if (!interp_) return vneg_.front();
  return (*interp_)(std::clamp(v_ce, lo_, hi_));
}

HeightMap::HeightMap(const CompensationTable& table) {
  const auto& v = table.knots();
  const auto& h = table.nil_heights_um();
  if (v.size() < 4) throw Error(ErrorCode::invalid_params, "height map needs a non-trivial V_ce range");
  for (std::size_t i = 1; i < h.size(); ++i)
    if (!(h[i] < h[i - 1]))
      throw Error(ErrorCode::unreachable_target, "RF-nil height is not monotone in V_ce");
  std::vector<double> hs(h.rbegin(), h.rend()), vs(v.rbegin(), v.rend());
  h_lo_ = hs.front();
  h_hi_ = hs.back();
  v_lo_ = v.front();
  v_hi_ = v.back();
  inverse_ = std::make_shared<const Pchip>(std::move(hs), std::move(vs));
  forward_ = std::make_shared<const Pchip>(std::vector<double>(v), std::vector<double>(h));
}

double HeightMap::vce_for_height(double height_um) const {
  return (*inverse_)(std::clamp(height_um, h_lo_, h_hi_));
}

double HeightMap::height_for_vce(double v_ce) const {
  return (*forward_)(std::clamp(v_ce, v_lo_, v_hi_));
}

// ---------------------------------------------------------------------------

double ShuttleProtocol::progress(double t) const {
  return trajectory_position(kind, 1.0, T_total, N, t - t0);
}

double ShuttleProtocol::vce_at(double t) const {
  const double u = progress(t);
  if (shaping == ShapingMode::height && height_map) {
    const double h1 = height_map->height_for_vce(vce_ramp.a1);
    const double h2 = height_map->height_for_vce(vce_ramp.a2);
    return height_map->vce_for_height(h1 + (h2 - h1) * u);
  }
  return vce_ramp.a1 + (vce_ramp.a2 - vce_ramp.a1) * u;
}

double ShuttleProtocol::vneg_at(double t) const {
  if (dc_schedule == DcSchedule::tracked && compensation) return (*compensation)(vce_at(t));
  return ramp_voltage(dc_ramp, std::clamp(t, t0, end_time()) - t0);
}

DriveState ShuttleProtocol::drive_at(double t) const {
  DriveState d = drive;
  d.v_ce = vce_at(t);
  d.dc_voltages[negative_node] = vneg_at(t);
  return d;
}

void ShuttleProtocol::validate(double limit, int samples) const {
  if (!(T_total > 0)) throw Error(ErrorCode::invalid_protocol, "T_total must be > 0");
  if (!(L_um >= 0)) throw Error(ErrorCode::invalid_protocol, "transport distance must be >= 0");
  if (kind == TrajectoryKind::tanh && !(N > 0))
    throw Error(ErrorCode::invalid_protocol, "tanh smoothness N must be > 0");
  auto check = [&](const char* what, double v, double t) {
    if (!(std::abs(v) <= limit))
      throw Error(ErrorCode::voltage_limit, std::string(what) + " = " + std::to_string(v) +
                                                " V at t = " + std::to_string(t) + " s exceeds " +
                                                std::to_string(limit) + " V");
  };
  for (int i = 0; i < samples; ++i) {
    const double t = t0 + T_total * i / std::max(samples - 1, 1);
    const DriveState d = drive_at(t);
    check("V_rf", d.v_rf, t);
    check("V_ce", d.v_ce, t);
    for (const auto& [node, v] : d.dc_voltages) check(node.c_str(), v, t);
  }
}

ShuttleProtocol build_protocol(std::shared_ptr<const TrapLayout> layout, const DriveState& drive,
                               const PhysicalConstants& consts, const ProtocolTarget& target,
                               double T_total, double N, TrajectoryKind kind,
                               const ProtocolOptions& opts) {
  if (!layout) throw Error(ErrorCode::invalid_params, "protocol needs a layout");
  if (!(T_total > 0)) throw Error(ErrorCode::invalid_protocol, "T_total must be > 0");
  if (kind == TrajectoryKind::tanh && !(N > 0))
    throw Error(ErrorCode::invalid_protocol, "tanh smoothness N must be > 0");
  if (target.final_vce.has_value() == target.distance_um.has_value())
    throw Error(ErrorCode::invalid_params, "target needs exactly one of final V_ce or distance");

  const double v_start = drive.v_ce;
  ShuttleProtocol p;
  p.kind = kind;
  p.T_total = T_total;
  p.N = kind == TrajectoryKind::tanh ? N : (N > 0 ? N : 1.0);
  p.layout = layout;
  p.consts = consts;
  p.drive = drive;
  p.drive.dc_voltages[std::string(nodes::dc_positive)] = opts.compensation.v_positive;
  p.shaping = opts.shaping;
  p.dc_schedule = opts.dc_schedule;

  double v_end = 0;
  if (target.final_vce) {
    v_end = *target.final_vce;
    if (!(std::abs(v_end) <= opts.voltage_limit))
      throw Error(ErrorCode::voltage_limit, "final V_ce = " + std::to_string(v_end) +
                                                " V exceeds " + std::to_string(opts.voltage_limit) + " V");
  } else {
    // Invert the RF-nil height curve over the admissible V_ce range.
    const double L = *target.distance_um;
    if (!(L >= 0)) throw Error(ErrorCode::invalid_protocol, "transport distance must be >= 0");
    if (L == 0) {
      v_end = v_start;
    } else {
      const double v_max = std::min(0.5 * drive.v_rf, opts.voltage_limit);
      const CompensationTable range(*layout, p.drive, consts, v_start, v_max, 33, opts.compensation);
      const HeightMap map(range);
      const double h_target = map.height_for_vce(v_start) - L;
      if (h_target < map.min_height())
        throw Error(ErrorCode::unreachable_target,
                    "cannot lower the ion by " + std::to_string(L) + " um within V_ce <= " +
                        std::to_string(v_max) + " V");
      v_end = map.vce_for_height(h_target);
    }
  }

  Compensation c_start, c_end;
  try {
    c_start = compensate_dc(*layout, p.drive, consts, v_start, opts.compensation, opts.initial_guess);
    c_end = v_end == v_start ? c_start
                             : compensate_dc(*layout, p.drive, consts, v_end, opts.compensation,
                                             c_start.rf_nil);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::no_minimum)
      throw Error(ErrorCode::unreachable_target, std::string("no trap at the target: ") + e.what());
    throw;
  }

  p.vce_ramp = {v_start, v_end, T_total / 2, T_total / (2 * p.N)};
  p.dc_ramp = {c_start.v_negative, c_end.v_negative, T_total / 2, T_total / (2 * p.N)};

  if (v_end != v_start &&
      (opts.dc_schedule == DcSchedule::tracked || opts.shaping == ShapingMode::height)) {
    p.compensation = std::make_shared<const CompensationTable>(*layout, p.drive, consts, v_start,
                                                               v_end, 33, opts.compensation);
    if (opts.shaping == ShapingMode::height) p.height_map = std::make_shared<const HeightMap>(*p.compensation);
  }

  try {
    const EffectivePotential pot(*layout, p.drive_at(p.t0), consts);
    p.start_height_um = find_minimum(pot, c_start.rf_nil).y;
    const EffectivePotential pot_end(*layout, p.drive_at(p.end_time()), consts);
    p.end_height_um = find_minimum(pot_end, c_end.rf_nil).y;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::no_minimum)
      throw Error(ErrorCode::unreachable_target, e.what());
    throw;
  }
  p.L_um = std::abs(p.start_height_um - p.end_height_um);
  p.validate(opts.voltage_limit, opts.validation_samples);
  return p;
}

ShuttleProtocol reversed(const ShuttleProtocol& p) {
  ShuttleProtocol r = p;
  std::swap(r.vce_ramp.a1, r.vce_ramp.a2);
  std::swap(r.dc_ramp.a1, r.dc_ramp.a2);
  std::swap(r.start_height_um, r.end_height_um);
  r.drive = p.drive_at(p.end_time());
  r.drive.v_ce = r.vce_ramp.a1;
  return r;
}

void write_waveform_csv(std::ostream& os, const ShuttleProtocol& p, double sample_rate) {
  if (!(sample_rate > 0)) throw Error(ErrorCode::invalid_params, "sample rate must be > 0");
  const std::string pos(nodes::dc_positive);
  os << "t_s,V_rf_V,V_ce_V,V_dc_pos_V,V_dc_neg_V\n";
  os << std::setprecision(10);
  const long n = static_cast<long>(std::floor(p.T_total * sample_rate + 1e-9));
  for (long i = 0; i <= n; ++i) {
    const double t = p.t0 + i / sample_rate;
    const DriveState d = p.drive_at(t);
    os << t << ',' << d.v_rf << ',' << d.v_ce << ',' << d.dc(pos) << ',' << d.dc(p.negative_node)
       << '\n';
  }
}

}  // namespace vshuttle
