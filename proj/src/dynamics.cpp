#include "vshuttle/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include <boost/numeric/odeint/stepper/runge_kutta4.hpp>

#include "vshuttle/errors.hpp"

namespace vshuttle {

namespace {

using State = std::array<double, 6>;
using Stepper = boost::numeric::odeint::runge_kutta4<State>;

constexpr double boltzmann = 1.380649e-23;

Vec3 position_of(const State& s) { return {s[0], s[1], s[2]}; }
Vec3 velocity_of(const State& s) { return {s[3], s[4], s[5]}; }

TrapPoint point_at(const EffectivePotential& pot, const FieldPoint& where) {
  TrapPoint tp;
  tp.position = where;
  tp.ion_height_um = where.y;
  tp.modes = secular_frequencies(pot, where);
  return tp;
}

double fastest(const SecularModes& m) {
  return std::max({m.omega_lateral, m.omega_vertical, m.omega_axial});
}
double slowest(const SecularModes& m) {
  return std::min({m.omega_lateral, m.omega_vertical, m.omega_axial});
}

// Minima of the secular potential sampled along the transport.
struct MinimumTrack {
  double t_begin = 0, t_end = 0;
  std::vector<Vec3> r;

  Vec3 at(double t) const {
    if (r.size() == 1 || t <= t_begin) return r.front();
    if (t >= t_end) return r.back();
    const double u = (t - t_begin) / (t_end - t_begin) * static_cast<double>(r.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(u), r.size() - 2);
    const double w = u - static_cast<double>(i);
    return (1 - w) * r[i] + w * r[i + 1];
  }
};

}  // namespace

std::string_view to_string(ForceMode m) {
  return m == ForceMode::pseudopotential ? "pseudopotential" : "full_rf";
}

ForceMode force_mode_from_string(std::string_view s) {
  if (s == "pseudopotential") return ForceMode::pseudopotential;
  if (s == "full_rf" || s == "full-rf") return ForceMode::full_rf;
  throw Error(ErrorCode::validation_error, "unknown force mode '" + std::string(s) + "'");
}

double static_energy_drift(const EffectivePotential& pot, const InitialState& start, double periods,
                           double steps_per_period) {
  const FieldPoint guess = FieldPoint::from_si(start.r);
  const FieldPoint min = find_minimum(pot, guess);
  const SecularModes modes = secular_frequencies(pot, min);
  const double dt = units::two_pi / fastest(modes) / steps_per_period;
  const long steps = static_cast<long>(std::ceil(periods * steps_per_period));
  const double m = pot.constants().ion_mass;
  const double u_min = pot.energy(min.si());

  auto energy = [&](const State& s) {
    return 0.5 * m * velocity_of(s).squaredNorm() + pot.energy(position_of(s));
  };
  auto rhs = [&](const State& s, State& d, double) {
    const Vec3 a = -pot.gradient(position_of(s)) / m;
    d = {s[3], s[4], s[5], a.x(), a.y(), a.z()};
  };

  State x{start.r.x(), start.r.y(), start.r.z(), start.v.x(), start.v.y(), start.v.z()};
  const double e0 = energy(x);
  const double scale = std::abs(e0 - u_min) > 0 ? std::abs(e0 - u_min) : std::abs(e0);
  Stepper stepper;
  double drift = 0, t = 0;
  for (long i = 0; i < steps; ++i, t += dt) {
    stepper.do_step(rhs, x, t, dt);
    drift = std::max(drift, std::abs(energy(x) - e0));
  }
  return scale > 0 ? drift / scale : drift;
}

InitialState sample_thermal_state(const TrapPoint& minimum, const PhysicalConstants& consts,
                                  double kelvin, std::mt19937_64& rng) {
  if (!(kelvin >= 0)) throw Error(ErrorCode::invalid_params, "temperature must be >= 0");
  InitialState s;
  s.r = minimum.position.si();
  const std::array<std::pair<double, Vec3>, 3> modes{{
      {minimum.modes.omega_lateral, minimum.modes.axis_lateral},
      {minimum.modes.omega_vertical, minimum.modes.axis_vertical},
      {minimum.modes.omega_axial, minimum.modes.axis_axial},
  }};
  const double sigma_v = std::sqrt(boltzmann * kelvin / consts.ion_mass);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (const auto& [omega, axis] : modes) {
    s.r += unit(rng) * sigma_v / omega * axis;
    s.v += unit(rng) * sigma_v * axis;
  }
  return s;
}

TrajectoryRecord integrate_trajectory(const ShuttleProtocol& protocol, ForceMode mode,
                                      std::optional<InitialState> initial,
                                      const IntegrationOptions& opts) {
  if (!protocol.layout) throw Error(ErrorCode::invalid_protocol, "protocol has no layout");
  if (!(protocol.T_total > 0)) throw Error(ErrorCode::invalid_protocol, "T_total must be > 0");
  if (opts.record_stride < 1 || opts.track_knots < 2 || !(opts.steps_per_secular_period > 0) ||
      !(opts.steps_per_rf_period > 0) || !(opts.post_window_periods > 0) ||
      !(opts.pre_window_periods >= 0))
    throw Error(ErrorCode::invalid_params, "invalid integration options");

  const ShuttleProtocol& p = protocol;
  const PhysicalConstants& consts = p.consts;
  const double mass = consts.ion_mass;
  EffectivePotential pot(*p.layout, p.drive_at(p.t0), consts);

  // Track the minimum along the transport by continuation.
  MinimumTrack track;
  track.t_begin = p.t0;
  track.t_end = p.end_time();
  FieldPoint seed{0, p.start_height_um > 0 ? p.start_height_um : 100.0, 0};
  double omega_fast = 0;
  TrapPoint first, last;
  for (int k = 0; k < opts.track_knots; ++k) {
    const double t = p.t0 + p.T_total * k / (opts.track_knots - 1);
    pot.set_drive(p.drive_at(t));
    seed = find_minimum(pot, seed);
    track.r.push_back(seed.si());
    const TrapPoint tp = point_at(pot, seed);
    omega_fast = std::max(omega_fast, fastest(tp.modes));
    if (k == 0) first = tp;
    if (k == opts.track_knots - 1) last = tp;
  }

  double dt = units::two_pi / omega_fast / opts.steps_per_secular_period;
  long rf_substeps = 0;
  if (mode == ForceMode::full_rf) {
    const double rf_period = units::two_pi / p.drive.omega;
    rf_substeps = static_cast<long>(std::ceil(rf_period / std::min(dt, rf_period / opts.steps_per_rf_period)));
    dt = rf_period / static_cast<double>(rf_substeps);
  } else {
    dt = p.T_total / std::ceil(p.T_total / dt);
  }
  const long pre_steps =
      static_cast<long>(std::ceil(opts.pre_window_periods * units::two_pi / slowest(first.modes) / dt));
  const long transport_steps = static_cast<long>(std::ceil(p.T_total / dt - 1e-9));
  const long post_steps =
      static_cast<long>(std::ceil(opts.post_window_periods * units::two_pi / slowest(last.modes) / dt));
  const double t_start = p.t0 - static_cast<double>(pre_steps) * dt;
  const long total_steps = pre_steps + transport_steps + post_steps;

  TrajectoryRecord rec;
  rec.mode = mode;
  rec.protocol = p;
  rec.initial_minimum = first;
  rec.final_minimum = last;
  rec.dt = dt;

  if (opts.energy_self_test) {
    pot.set_drive(p.drive_at(p.t0));
    const Vec3 r0 = first.position.si();
    const InitialState kick{r0 + 0.01 * r0.y() * first.modes.axis_vertical, Vec3::Zero()};
    const double drift = static_energy_drift(pot, kick, 100, opts.steps_per_secular_period);
    if (!(drift < opts.energy_tolerance))
      throw Error(ErrorCode::step_failure, "integrator energy drift " + std::to_string(drift) +
                                               " exceeds " + std::to_string(opts.energy_tolerance));
  }

  const InitialState init = initial.value_or(InitialState{first.position.si(), Vec3::Zero()});
  State x{init.r.x(), init.r.y(), init.r.z(), init.v.x(), init.v.y(), init.v.z()};

  auto rhs = [&](const State& s, State& d, double t) {
    const Vec3 r = position_of(s);
    if (!(r.y() > 0)) throw Error(ErrorCode::ion_lost, "ion reached the trap surface");
    Vec3 a;
    if (mode == ForceMode::pseudopotential) {
      pot.set_drive(p.drive_at(t));
      a = -pot.gradient(r) / mass;
    } else {
      pot.set_drive(p.drive_at(t));
      a = pot.instantaneous_force(r, std::cos(p.drive.omega * t)) / mass;
    }
    d = {s[3], s[4], s[5], a.x(), a.y(), a.z()};
  };

  // Running mean of the velocity over one RF period (full_rf mode only).
  std::vector<Vec3> ring(std::max<long>(rf_substeps, 1), Vec3::Zero());
  Vec3 ring_sum = Vec3::Zero();
  long ring_count = 0;
  auto secular_velocity = [&](const Vec3& v, long step) {
    if (mode != ForceMode::full_rf) return v;
    const std::size_t slot = static_cast<std::size_t>(step % rf_substeps);
    if (ring_count >= rf_substeps) ring_sum -= ring[slot];
    else ++ring_count;
    ring[slot] = v;
    ring_sum += v;
    return Vec3(ring_sum / static_cast<double>(ring_count));
  };

  auto phase_of = [&](long step) { return step < pre_steps ? 0 : step < pre_steps + transport_steps ? 1 : 2; };
  std::size_t transport_begin = 0, post_begin = 0;
  bool transport_seen = false, post_seen = false;

  auto record = [&](int phase, double t, const Vec3& vs) {
    TrajectorySample smp;
    smp.t = t;
    smp.r = position_of(x);
    smp.v = velocity_of(x);
    smp.kinetic_energy = 0.5 * mass * smp.v.squaredNorm();
    smp.secular_energy = 0.5 * mass * vs.squaredNorm();
    if (phase >= 1 && !transport_seen) {
      transport_begin = rec.samples.size();
      transport_seen = true;
    }
    if (phase == 2 && !post_seen) {
      post_begin = rec.samples.size();
      post_seen = true;
    }
    rec.samples.push_back(smp);
  };

  Stepper stepper;
  rec.samples.reserve(static_cast<std::size_t>(total_steps / opts.record_stride + 2));
  record(0, t_start, secular_velocity(velocity_of(x), 0));
  ring_sum.setZero();
  ring_count = 0;
  for (long i = 0; i < total_steps; ++i) {
    const double t = t_start + static_cast<double>(i) * dt;
    try {
      stepper.do_step(rhs, x, t, dt);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::domain_error)
        throw Error(ErrorCode::ion_lost, "ion reached the trap surface at t = " + std::to_string(t) + " s");
      throw;
    }
    const long step = i + 1;
    const double tn = t_start + static_cast<double>(step) * dt;
    const Vec3 r = position_of(x);
    if (!std::isfinite(r.squaredNorm()) || !std::isfinite(velocity_of(x).squaredNorm()))
      throw Error(ErrorCode::step_failure, "non-finite state at t = " + std::to_string(tn) + " s");
    const Vec3 target = track.at(tn);
    if (!(r.y() > 0) || (r - target).norm() > opts.lost_factor * target.y())
      throw Error(ErrorCode::ion_lost, "ion left the trap at t = " + std::to_string(tn) + " s");

    const Vec3 vs = secular_velocity(velocity_of(x), step);
    const double ke = 0.5 * mass * vs.squaredNorm();
    // A step belongs to the phase it starts in.
    const int phase = phase_of(step - 1);
    switch (phase) {
      case 0: rec.peaks.pre = std::max(rec.peaks.pre, ke); break;
      case 1: rec.peaks.transport = std::max(rec.peaks.transport, ke); break;
      default: rec.peaks.post = std::max(rec.peaks.post, ke); break;
    }
    if (step % opts.record_stride == 0 || step == total_steps) record(phase, tn, vs);
  }
  if (!transport_seen) transport_begin = rec.samples.size();
  if (!post_seen) post_begin = rec.samples.size();
  rec.pre_window = IndexRange{0, transport_begin};
  rec.post_window = IndexRange{post_begin, rec.samples.size()};
  return rec;
}

QuantaResult motional_quanta(const TrajectoryRecord& record, double omega) {
  if (!record.post_window || record.post_window->empty())
    throw Error(ErrorCode::missing_window, "trajectory has no post-transport window");
  if (!(omega > 0)) throw Error(ErrorCode::invalid_params, "omega must be > 0");
  const auto& s = record.samples;
  const IndexRange pre = record.pre_window.value_or(IndexRange{0, 0});
  const IndexRange post = *record.post_window;

  auto window_max = [&](std::size_t b, std::size_t e) {
    double m = 0;
    for (std::size_t i = b; i < std::min(e, s.size()); ++i) m = std::max(m, s[i].secular_energy);
    return m;
  };
  QuantaResult q;
  q.omega_used = omega;
  q.ke_max_initial = std::max(record.peaks.pre, window_max(pre.begin, pre.end));
  q.ke_max_residual = std::max(record.peaks.post, window_max(post.begin, post.end));
  q.ke_max_final = std::max({record.peaks.transport, q.ke_max_residual, window_max(pre.end, post.end)});
  const double quantum = record.protocol.consts.hbar * omega;
  q.n_shuttle = std::max(0.0, (q.ke_max_final - q.ke_max_initial) / quantum);
  q.n_residual = std::max(0.0, (q.ke_max_residual - q.ke_max_initial) / quantum);
  return q;
}

QuantaResult motional_quanta(const TrajectoryRecord& record) {
  return motional_quanta(record, record.final_minimum.modes.omega_vertical);
}

ShuttleProtocol make_protocol(const TransportScenario& s, double T_total, double N) {
  return build_protocol(s.layout, s.drive, s.consts, s.target, T_total, N, s.kind, s.protocol_options);
}

std::vector<GainPoint> ke_gain_vs_time(const TransportScenario& s, double N,
                                       const std::vector<double>& T_grid) {
  if (!std::is_sorted(T_grid.begin(), T_grid.end()))
    throw Error(ErrorCode::invalid_params, "T grid must be ascending");
  std::vector<GainPoint> out;
  out.reserve(T_grid.size());
  for (double T : T_grid) {
    const TrajectoryRecord rec = integrate_trajectory(make_protocol(s, T, N), s.mode, std::nullopt, s.integration);
    out.push_back({T, motional_quanta(rec)});
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record, int stride) {
  if (stride < 1) throw Error(ErrorCode::invalid_params, "stride must be >= 1");
  os << "t_s,x_um,y_um,z_um,vx,vy,vz,ke_J\n" << std::setprecision(12);
  for (std::size_t i = 0; i < record.samples.size(); i += static_cast<std::size_t>(stride)) {
    const auto& s = record.samples[i];
    os << s.t << ',' << units::m_to_um(s.r.x()) << ',' << units::m_to_um(s.r.y()) << ','
       << units::m_to_um(s.r.z()) << ',' << s.v.x() << ',' << s.v.y() << ',' << s.v.z() << ','
       << s.kinetic_energy << '\n';
  }
}

}  // namespace vshuttle
