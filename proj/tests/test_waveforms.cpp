#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vshuttle/errors.hpp"
#include "vshuttle/waveforms.hpp"

using namespace vshuttle;

namespace {

std::shared_ptr<const TrapLayout> shared_layout() {
  static const auto l = std::make_shared<const TrapLayout>(build_paper_trap());
  return l;
}

const PhysicalConstants consts = PhysicalConstants::calibrated();

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::invalid_params;
}

ProtocolTarget to_vce(double v) { return {v, std::nullopt}; }

}  // namespace

TEST_SUITE("waveforms") {
  TEST_CASE("tanh trajectory: endpoints, midpoint and point symmetry") {
    for (double N : {0.5, 2.5, 10.0}) {
      const double L = 48, T = 0.5e-3;
      CHECK(trajectory_position(TrajectoryKind::tanh, L, T, N, 0) == 0.0);
      CHECK(trajectory_position(TrajectoryKind::tanh, L, T, N, T) == L);
      CHECK(trajectory_position(TrajectoryKind::tanh, L, T, N, T / 2) == doctest::Approx(L / 2).epsilon(1e-15));
      for (double d : {0.1, 0.2, 0.37, 0.49}) {
        const double a = trajectory_position(TrajectoryKind::tanh, L, T, N, T / 2 + d * T);
        const double b = trajectory_position(TrajectoryKind::tanh, L, T, N, T / 2 - d * T);
        CHECK(a + b == doctest::Approx(L).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("small N is linear, large N has a flat start") {
    const double L = 1, T = 1;
    double worst = 0;
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      worst = std::max(worst, std::abs(trajectory_position(TrajectoryKind::tanh, L, T, 0.01, t) - L * t));
    }
    CHECK(worst < 1e-3 * L);
    CHECK(trajectory_position(TrajectoryKind::tanh, L, T, 10, 0.25 * T) < 0.01 * L);
  }

  TEST_CASE("linear and sinusoidal profiles; clamping outside [0, T]") {
    CHECK(trajectory_position(TrajectoryKind::linear, 10, 2, 0, 0.5) == doctest::Approx(2.5));
    CHECK(trajectory_position(TrajectoryKind::sinusoidal, 10, 2, 0, 1) == doctest::Approx(5));
    CHECK(trajectory_position(TrajectoryKind::sinusoidal, 10, 2, 0, 2) == 10);
    for (auto k : {TrajectoryKind::linear, TrajectoryKind::sinusoidal, TrajectoryKind::tanh}) {
      CHECK(trajectory_position(k, 10, 2, 3, -1) == 0);
      CHECK(trajectory_position(k, 10, 2, 3, 5) == 10);
      double prev = -1;
      for (int i = 0; i <= 200; ++i) {
        const double y = trajectory_position(k, 10, 2, 3, 2.0 * i / 200);
        CHECK(y >= prev);
        prev = y;
      }
    }
  }

  TEST_CASE("invalid trajectory parameters") {
    CHECK(code_of([] { trajectory_position(TrajectoryKind::tanh, 1, 1, 0, 0.5); }) == ErrorCode::invalid_protocol);
    CHECK(code_of([] { trajectory_position(TrajectoryKind::tanh, 1, 1, -2, 0.5); }) == ErrorCode::invalid_protocol);
    CHECK(code_of([] { trajectory_position(TrajectoryKind::linear, 1, 0, 1, 0.5); }) == ErrorCode::invalid_protocol);
    CHECK_NOTHROW(trajectory_position(TrajectoryKind::linear, 1, 1, 0, 0.5));
    CHECK(trajectory_kind_from_string("sinusoidal") == TrajectoryKind::sinusoidal);
    CHECK_THROWS_AS(trajectory_kind_from_string("cubic"), Error);
  }

  TEST_CASE("voltage ramp: midpoint, saturation and bounds") {
    const VoltageRamp r{-8.4, -8.25, 1e-4, 2e-5};
    CHECK(ramp_voltage(r, r.tt1) == doctest::Approx(0.5 * (r.a1 + r.a2)).epsilon(1e-15));
    CHECK(std::abs(ramp_voltage(r, r.tt1 + 10 * r.tau) - r.a2) <= std::abs(r.a2 - r.a1) * 1e-8);
    for (int i = -500; i <= 500; ++i) {
      const double v = ramp_voltage(r, r.tt1 + i * 1e-6);
      CHECK(v >= -8.4);
      CHECK(v <= -8.25);
    }
  }

  TEST_CASE("DC compensation at the operating point") {
    const Compensation c = compensate_dc(*shared_layout(), DriveState{}, consts, 0.0);
    CHECK(c.v_negative == doctest::Approx(-8.4).epsilon(0.05 / 8.4));
    CHECK(c.residual_field < 1e-2);
    const Compensation c100 = compensate_dc(*shared_layout(), DriveState{}, consts, 100.0);
    CHECK(c100.residual_field < 1e-2);
    // The compensating voltage rises towards zero as the ion is lowered.
    CHECK(c100.v_negative > c.v_negative);
  }

  TEST_CASE("DC compensation at V_ce = 100 V is -8.25 V" * doctest::may_fail()) {
    const Compensation c = compensate_dc(*shared_layout(), DriveState{}, consts, 100.0);
    CHECK(c.v_negative == doctest::Approx(-8.25).epsilon(0.1 / 8.25));
  }

  TEST_CASE("compensation fails without a sign change in the bracket") {
    CompensationOptions o;
    o.bracket_low = -2;
    o.bracket_high = 0;
    CHECK(code_of([&] { compensate_dc(*shared_layout(), DriveState{}, consts, 0.0, o); }) == ErrorCode::no_root);
    const TrapLayout bare({{"rf", ElectrodeRole::rf_rail, -10, 10, -100, 100, "rf"}});
    CHECK(code_of([&] { compensate_dc(bare, DriveState{}, consts, 0.0); }) == ErrorCode::unknown_node);
  }

  TEST_CASE("33-knot interpolant stays within the compensation tolerance") {
    const CompensationTable table(*shared_layout(), DriveState{}, consts, 0.0, 100.0);
    REQUIRE(table.knots().size() == 33);
    double worst = 0;
    for (int i = 0; i < 32; i += 3) {
      const double v = 0.5 * (table.knots()[i] + table.knots()[i + 1]);
      const double direct = compensate_dc(*shared_layout(), DriveState{}, consts, v).v_negative;
      worst = std::max(worst, std::abs(table(v) - direct));
    }
    CHECK(worst < CompensationOptions{}.tolerance);
    CHECK(table(-10.0) == doctest::Approx(table(0.0)));
  }

  TEST_CASE("protocol 0 -> 100 V lowers the ion and respects the voltage cap") {
    const ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh);
    CHECK(p.vce_at(p.t0) == doctest::Approx(0.0));
    CHECK(p.vce_at(p.end_time()) == doctest::Approx(100.0));
    CHECK(p.vce_at(p.t0 + p.T_total / 2) == doctest::Approx(50.0));
    CHECK(p.end_height_um < p.start_height_um);
    CHECK(p.L_um == doctest::Approx(p.start_height_um - p.end_height_um));
    const FieldPoint start = find_minimum(*p.layout, p.drive_at(p.t0), consts, {0, 120, 0});
    const FieldPoint end = find_minimum(*p.layout, p.drive_at(p.end_time()), consts, {0, 80, 0});
    CHECK(p.start_height_um == doctest::Approx(start.y).epsilon(1e-9));
    CHECK(p.end_height_um == doctest::Approx(end.y).epsilon(1e-9));
    CHECK_NOTHROW(p.validate(units::voltage_limit, 10000));
    CHECK_THROWS_AS(p.validate(50.0, 100), Error);
  }

  TEST_CASE("tracked DC follows the compensation curve; ramp mode uses the endpoints") {
    ProtocolOptions o;
    o.dc_schedule = DcSchedule::tracked;
    const ShuttleProtocol tracked =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh, o);
    const double t_mid = tracked.t0 + 0.3 * tracked.T_total;
    const double direct =
        compensate_dc(*shared_layout(), DriveState{}, consts, tracked.vce_at(t_mid)).v_negative;
    CHECK(tracked.vneg_at(t_mid) == doctest::Approx(direct).epsilon(1e-4));

    o.dc_schedule = DcSchedule::ramp;
    const ShuttleProtocol ramp =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh, o);
    CHECK(ramp.vneg_at(ramp.t0 + ramp.T_total / 2) ==
          doctest::Approx(0.5 * (ramp.dc_ramp.a1 + ramp.dc_ramp.a2)));
    CHECK(ramp.vneg_at(ramp.end_time() + 1.0) == ramp.vneg_at(ramp.end_time()));
    CHECK(ramp.dc_ramp.tau == doctest::Approx(0.5e-3 / (2 * 2.5)));
  }

  TEST_CASE("height shaping moves the RF nil along the tanh profile") {
    ProtocolOptions o;
    o.shaping = ShapingMode::height;
    const ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh, o);
    REQUIRE(p.height_map);
    const double h0 = p.height_map->height_for_vce(0), h1 = p.height_map->height_for_vce(100);
    for (double u : {0.2, 0.5, 0.8}) {
      const double t = p.t0 + u * p.T_total;
      const double want = h0 + (h1 - h0) * trajectory_position(TrajectoryKind::tanh, 1, p.T_total, 2.5, t - p.t0);
      const double nil = compensate_dc(*shared_layout(), DriveState{}, consts, p.vce_at(t)).rf_nil.y;
      CHECK(nil == doctest::Approx(want).epsilon(1e-4));
    }
  }

  TEST_CASE("identity protocol has no scheduled change") {
    const ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(0), 0.2e-3, 2.5, TrajectoryKind::tanh);
    CHECK(p.L_um == 0.0);
    for (int i = 0; i <= 10; ++i) {
      const double t = p.t0 + p.T_total * i / 10;
      CHECK(p.vce_at(t) == 0.0);
      CHECK(p.vneg_at(t) == p.vneg_at(p.t0));
    }
  }

  TEST_CASE("protocol errors: voltage cap, bad durations, unreachable distance") {
    const auto l = shared_layout();
    CHECK(code_of([&] { build_protocol(l, DriveState{}, consts, to_vce(600), 0.5e-3, 2.5, TrajectoryKind::tanh); }) ==
          ErrorCode::voltage_limit);
    CHECK(code_of([&] { build_protocol(l, DriveState{}, consts, to_vce(100), 0.0, 2.5, TrajectoryKind::tanh); }) ==
          ErrorCode::invalid_protocol);
    CHECK(code_of([&] { build_protocol(l, DriveState{}, consts, to_vce(100), 1e-3, 0.0, TrajectoryKind::tanh); }) ==
          ErrorCode::invalid_protocol);
    CHECK(code_of([&] {
            build_protocol(l, DriveState{}, consts, {std::nullopt, 200.0}, 1e-3, 2.5, TrajectoryKind::tanh);
          }) == ErrorCode::unreachable_target);
    CHECK(code_of([&] { build_protocol(l, DriveState{}, consts, {}, 1e-3, 2.5, TrajectoryKind::tanh); }) ==
          ErrorCode::invalid_params);
  }

  TEST_CASE("distance target lowers the RF nil by the requested amount") {
    const ShuttleProtocol p = build_protocol(shared_layout(), DriveState{}, consts, {std::nullopt, 30.0},
                                             0.5e-3, 2.5, TrajectoryKind::tanh);
    const double nil0 = compensate_dc(*shared_layout(), DriveState{}, consts, 0).rf_nil.y;
    const double nil1 = compensate_dc(*shared_layout(), DriveState{}, consts, p.vce_ramp.a2).rf_nil.y;
    CHECK(nil0 - nil1 == doctest::Approx(30.0).epsilon(1e-3));
  }

  TEST_CASE("reversed protocol swaps the endpoints") {
    const ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh);
    const ShuttleProtocol r = reversed(p);
    CHECK(r.vce_at(r.t0) == doctest::Approx(100.0));
    CHECK(r.vce_at(r.end_time()) == doctest::Approx(0.0));
    CHECK(r.vneg_at(r.t0) == doctest::Approx(p.vneg_at(p.end_time())));
    CHECK(r.start_height_um == p.end_height_um);
    CHECK(r.vce_at(r.t0 + 0.3 * r.T_total) == doctest::Approx(p.vce_at(p.t0 + 0.7 * p.T_total)));
  }

  TEST_CASE("time translation shifts the schedule rigidly") {
    ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.5e-3, 2.5, TrajectoryKind::tanh);
    ShuttleProtocol q = p;
    q.t0 = 3e-3;
    for (double u : {0.0, 0.1, 0.5, 0.9, 1.0}) {
      CHECK(q.vce_at(q.t0 + u * q.T_total) == doctest::Approx(p.vce_at(p.t0 + u * p.T_total)));
      CHECK(q.vneg_at(q.t0 + u * q.T_total) == doctest::Approx(p.vneg_at(p.t0 + u * p.T_total)));
    }
  }

  TEST_CASE("waveform CSV: header, sample count, endpoint values") {
    const ShuttleProtocol p =
        build_protocol(shared_layout(), DriveState{}, consts, to_vce(100), 0.1e-3, 2.5, TrajectoryKind::tanh);
    std::ostringstream os;
    write_waveform_csv(os, p, 1e6);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t_s,V_rf_V,V_ce_V,V_dc_pos_V,V_dc_neg_V");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    CHECK(rows.size() == 101);
    CHECK(rows.front().rfind("0,200,0,6,", 0) == 0);
    CHECK(rows.back().find(",200,100,6,") != std::string::npos);
    CHECK_THROWS_AS(write_waveform_csv(os, p, 0), Error);
  }
}
