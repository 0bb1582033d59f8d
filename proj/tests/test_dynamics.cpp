#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "vshuttle/dynamics.hpp"
#include "vshuttle/errors.hpp"

using namespace vshuttle;

namespace {

std::shared_ptr<const TrapLayout> shared_layout() {
  static const auto l = std::make_shared<const TrapLayout>(build_paper_trap());
  return l;
}

const PhysicalConstants consts = PhysicalConstants::calibrated();

ShuttleProtocol protocol(double vce_final, double T, double N) {
  return build_protocol(shared_layout(), DriveState{}, consts, {vce_final, std::nullopt}, T, N,
                        TrajectoryKind::tanh);
}

// Mean period from upward zero crossings of the displacement along `axis`.
double measured_omega(const TrajectoryRecord& rec, const Vec3& centre, const Vec3& axis) {
  std::vector<double> crossings;
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    const double a = (rec.samples[i - 1].r - centre).dot(axis);
    const double b = (rec.samples[i].r - centre).dot(axis);
    if (a < 0 && b >= 0) {
      const double w = a / (a - b);
      crossings.push_back(rec.samples[i - 1].t + w * (rec.samples[i].t - rec.samples[i - 1].t));
    }
  }
  REQUIRE(crossings.size() >= 3);
  const double period = (crossings.back() - crossings.front()) / (crossings.size() - 1);
  return units::two_pi / period;
}

}  // namespace

TEST_SUITE("dynamics") {
  TEST_CASE("ion at rest at the minimum stays put") {
    ShuttleProtocol p = protocol(0, 1e-5, 2.5);
    IntegrationOptions o;
    o.post_window_periods = 100;
    o.pre_window_periods = 0;
    const TrajectoryRecord rec = integrate_trajectory(p, ForceMode::pseudopotential, std::nullopt, o);
    const Vec3 r0 = rec.initial_minimum.position.si();
    double worst = 0;
    for (const auto& s : rec.samples) worst = std::max(worst, (s.r - r0).norm());
    CHECK(worst < 1e-6 * r0.y());
    CHECK(motional_quanta(rec).n_shuttle < 1e-6);
  }

  TEST_CASE("small oscillations run at the Hessian frequencies") {
    ShuttleProtocol p = protocol(0, 1e-6, 2.5);
    const EffectivePotential pot(*p.layout, p.drive, consts);
    const FieldPoint m = find_minimum(pot, {0, 120, 0});
    const SecularModes modes = secular_frequencies(pot, m);
    const std::array<std::pair<double, Vec3>, 3> cases{{{modes.omega_vertical, modes.axis_vertical},
                                                        {modes.omega_lateral, modes.axis_lateral},
                                                        {modes.omega_axial, modes.axis_axial}}};
    for (const auto& [omega, axis] : cases) {
      IntegrationOptions o;
      o.pre_window_periods = 0;
      o.post_window_periods = omega == modes.omega_axial ? 12 : 100;
      o.record_stride = 1;
      const InitialState start{m.si() + 0.1 * units::micron * axis, Vec3::Zero()};
      const TrajectoryRecord rec = integrate_trajectory(p, ForceMode::pseudopotential, start, o);
      CHECK(measured_omega(rec, m.si(), axis) == doctest::Approx(omega).epsilon(0.01));
    }
  }

  TEST_CASE("energy is conserved in a static potential") {
    const EffectivePotential pot(*shared_layout(), DriveState{}, consts);
    const FieldPoint m = find_minimum(pot, {0, 120, 0});
    const InitialState start{m.si() + Vec3(0.3, 0.5, 0.2) * units::micron, Vec3::Zero()};
    CHECK(static_energy_drift(pot, start, 100, 200) < 1e-6);
  }

  TEST_CASE("the energy self-test passes at the default step") {
    IntegrationOptions o;
    o.energy_self_test = true;
    CHECK_NOTHROW(integrate_trajectory(protocol(0, 1e-5, 2.5), ForceMode::pseudopotential, std::nullopt, o));
    o.steps_per_secular_period = 8;
    o.energy_tolerance = 1e-9;
    try {
      integrate_trajectory(protocol(0, 1e-5, 2.5), ForceMode::pseudopotential, std::nullopt, o);
      FAIL("expected step-failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::step_failure);
    }
  }

  TEST_CASE("kinetic energy peaks once, near mid-transport") {
    const ShuttleProtocol p = protocol(100, 1e-3, 10);
    const TrajectoryRecord rec = integrate_trajectory(p);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
      if (rec.samples[i].kinetic_energy > rec.samples[peak].kinetic_energy) peak = i;
    const double u = (rec.samples[peak].t - p.t0) / p.T_total;
    CHECK(u > 0.4);
    CHECK(u < 0.6);
    const double ke_peak = rec.samples[peak].kinetic_energy;
    for (const auto& s : rec.samples) {
      const double v = (s.t - p.t0) / p.T_total;
      if (v < 0.25 || v > 0.75) CHECK(s.kinetic_energy < 0.1 * ke_peak);
    }
  }

  TEST_CASE("quanta definition on a synthetic record") {
    TrajectoryRecord rec;
    rec.protocol.consts = consts;
    const double omega = units::mhz_to_angular(2.0);
    const double quantum = consts.hbar * omega;
    for (int i = 0; i < 6; ++i) {
      TrajectorySample s;
      s.t = i;
      s.kinetic_energy = s.secular_energy = i == 3 ? quantum : 0.0;
      rec.samples.push_back(s);
    }
    rec.pre_window = IndexRange{0, 2};
    rec.post_window = IndexRange{4, 6};
    const QuantaResult q = motional_quanta(rec, omega);
    CHECK(q.n_shuttle == doctest::Approx(1.0));
    CHECK(q.n_residual == 0.0);
    CHECK(q.ke_max_initial == 0.0);

    rec.post_window.reset();
    try {
      motional_quanta(rec, omega);
      FAIL("expected missing-window");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::missing_window);
    }
  }

  TEST_CASE("halving the step changes the quanta by less than one percent") {
    const ShuttleProtocol p = protocol(100, 0.3e-3, 2.5);
    IntegrationOptions o;
    const double n1 = motional_quanta(integrate_trajectory(p, ForceMode::pseudopotential, std::nullopt, o)).n_shuttle;
    o.steps_per_secular_period *= 2;
    o.record_stride *= 2;
    const double n2 = motional_quanta(integrate_trajectory(p, ForceMode::pseudopotential, std::nullopt, o)).n_shuttle;
    CHECK(n1 == doctest::Approx(n2).epsilon(0.01));
  }

  TEST_CASE("quanta are invariant under a rigid time shift") {
    ShuttleProtocol p = protocol(100, 0.3e-3, 2.5);
    const double n1 = motional_quanta(integrate_trajectory(p)).n_shuttle;
    p.t0 = 1.234e-3;
    const double n2 = motional_quanta(integrate_trajectory(p)).n_shuttle;
    CHECK(n1 == doctest::Approx(n2).epsilon(1e-6));
  }

  TEST_CASE("running the reversed protocol returns the ion to the start") {
    const ShuttleProtocol p = protocol(100, 0.3e-3, 2.5);
    const TrajectoryRecord fwd = integrate_trajectory(p);
    const double n_fwd = motional_quanta(fwd).n_shuttle;
    const ShuttleProtocol r = reversed(p);
    const TrajectoryRecord back = integrate_trajectory(r);
    const double n_back = motional_quanta(back, fwd.final_minimum.modes.omega_vertical).n_shuttle;
    CHECK(n_back < 2 * n_fwd);
    CHECK(back.final_minimum.position.y == doctest::Approx(fwd.initial_minimum.position.y).epsilon(1e-6));
    const Vec3 end = back.samples.back().r;
    CHECK((end - fwd.initial_minimum.position.si()).norm() < 0.05 * end.y());
  }

  TEST_CASE("an ion started far from the trap is reported lost") {
    const ShuttleProtocol p = protocol(0, 1e-5, 2.5);
    const Vec3 far(6 * 120 * units::micron, 120 * units::micron, 0);
    try {
      integrate_trajectory(p, ForceMode::pseudopotential, InitialState{far, Vec3::Zero()});
      FAIL("expected ion-lost");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ion_lost);
    }
  }

  TEST_CASE("full RF integration agrees with the pseudopotential after micromotion filtering") {
    const ShuttleProtocol p = protocol(100, 20e-6, 2.5);
    IntegrationOptions o;
    o.pre_window_periods = 2;
    o.post_window_periods = 2;
    o.record_stride = 50;
    const QuantaResult pseudo = motional_quanta(integrate_trajectory(p, ForceMode::pseudopotential, std::nullopt, o));
    const TrajectoryRecord full = integrate_trajectory(p, ForceMode::full_rf, std::nullopt, o);
    const QuantaResult q = motional_quanta(full);
    CHECK(full.dt <= units::two_pi / p.drive.omega / 100 * (1 + 1e-12));
    CHECK(q.n_shuttle == doctest::Approx(pseudo.n_shuttle).epsilon(0.15));
  }

  TEST_CASE("quanta fall with duration and grow with N") {
    TransportScenario s;
    s.layout = shared_layout();
    s.consts = consts;
    s.target.final_vce = 100;
    const auto curve = ke_gain_vs_time(s, 2.5, {0.1e-3, 1e-3});
    REQUIRE(curve.size() == 2);
    CHECK(curve[1].quanta.n_shuttle < curve[0].quanta.n_shuttle);
    CHECK_THROWS_AS(ke_gain_vs_time(s, 2.5, {1e-3, 0.1e-3}), Error);
  }

  TEST_CASE("thermal initial states carry kT per degree of freedom") {
    const TrapPoint tp = analyze_trap(*shared_layout(), DriveState{}, consts, {0, 120, 0});
    std::mt19937_64 rng(42);
    const double kelvin = 1e-3;
    double ke = 0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) ke += 0.5 * consts.ion_mass * sample_thermal_state(tp, consts, kelvin, rng).v.squaredNorm();
    CHECK(ke / n == doctest::Approx(1.5 * 1.380649e-23 * kelvin).epsilon(0.05));
    CHECK_THROWS_AS(sample_thermal_state(tp, consts, -1, rng), Error);
  }

  TEST_CASE("trajectory CSV header and stride") {
    const TrajectoryRecord rec = integrate_trajectory(protocol(0, 1e-5, 2.5));
    std::ostringstream os;
    write_trajectory_csv(os, rec, 10);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t_s,x_um,y_um,z_um,vx,vy,vz,ke_J");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == (rec.samples.size() + 9) / 10);
    CHECK(force_mode_from_string("full-rf") == ForceMode::full_rf);
    CHECK_THROWS_AS(force_mode_from_string("exact"), Error);
  }
}
