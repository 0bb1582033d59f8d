#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "vshuttle/errors.hpp"
#include "vshuttle/trap_analysis.hpp"

using namespace vshuttle;

namespace {

const TrapLayout& layout() {
  static const TrapLayout l = build_paper_trap();
  return l;
}

// Exhaustive search on a cubic grid of `n` points per side around `centre`.
FieldPoint grid_search(const EffectivePotential& pot, FieldPoint centre, double half_um, double step_um) {
  const int n = static_cast<int>(std::lround(2 * half_um / step_um));
  double best = std::numeric_limits<double>::infinity();
  FieldPoint arg = centre;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        const FieldPoint p{centre.x - half_um + i * step_um, centre.y - half_um + j * step_um,
                           centre.z - half_um + k * step_um};
        const double u = pot.energy(p.si());
        if (u < best) {
          best = u;
          arg = p;
        }
      }
  return arg;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::invalid_params;
}

}  // namespace

TEST_SUITE("trap_analysis") {
  TEST_CASE("Newton minimum agrees with a brute-force grid search") {
    const auto consts = PhysicalConstants::calibrated();
    for (double vce : {0.0, 100.0}) {
      DriveState d;
      d.v_ce = vce;
      const EffectivePotential pot(layout(), d, consts);
      const FieldPoint newton = find_minimum(pot, {0, 120, 0});
      // 1 um grid over a 60 um box, then 0.1 um refinement.
      const FieldPoint coarse = grid_search(pot, {0, std::round(newton.y), 0}, 30, 1.0);
      const FieldPoint fine = grid_search(pot, coarse, 1.0, 0.1);
      CHECK(std::abs(newton.x - fine.x) <= 0.1);
      CHECK(std::abs(newton.y - fine.y) <= 0.1);
      CHECK(std::abs(newton.z - fine.z) <= 0.1);
    }
  }

  TEST_CASE("minimum is on the symmetry plane with vanishing gradient") {
    const auto consts = PhysicalConstants::calibrated();
    const EffectivePotential pot(layout(), DriveState{}, consts);
    const FieldPoint m = find_minimum(pot, {10, 120, 20});
    CHECK(std::abs(m.x) < 1e-6);
    CHECK(std::abs(m.z) < 1e-6);
    const Mat3 H = pot.hessian(m.si());
    Eigen::SelfAdjointEigenSolver<Mat3> es(H);
    CHECK(es.eigenvalues().minCoeff() > 0);
    CHECK(pot.gradient(m.si()).norm() < 1e-8 * es.eigenvalues().maxCoeff() * m.si().y());
  }

  TEST_CASE("scaling all RF amplitudes and the drive frequency leaves the minimum in place") {
    const auto consts = PhysicalConstants::calibrated();
    DriveState d;
    d.v_ce = 30;
    const FieldPoint a = find_minimum(layout(), d, consts, {0, 120, 0});
    d.v_rf *= 1.7;
    d.v_ce *= 1.7;
    d.omega *= 1.7;
    const FieldPoint b = find_minimum(layout(), d, consts, {0, 120, 0});
    CHECK(std::abs(a.y - b.y) < 1e-6);
    CHECK(std::abs(a.z - b.z) < 1e-6);
  }

  TEST_CASE("no trap without RF") {
    DriveState d;
    d.v_rf = 0;
    const auto consts = PhysicalConstants::calibrated();
    CHECK(code_of([&] { find_minimum(layout(), d, consts, {0, 120, 0}); }) == ErrorCode::no_minimum);
    CHECK(code_of([&] { secular_frequencies(layout(), d, consts, {0, 120, 0}); }) ==
          ErrorCode::not_a_minimum);
    CHECK(code_of([&] { find_minimum(layout(), DriveState{}, consts, {0, -5, 0}); }) ==
          ErrorCode::domain_error);
  }

  TEST_CASE("mode labelling: axial mode along z, vertical mode along y") {
    const auto consts = PhysicalConstants::calibrated();
    const EffectivePotential pot(layout(), DriveState{}, consts);
    const FieldPoint m = find_minimum(pot, {0, 120, 0});
    const SecularModes s = secular_frequencies(pot, m);
    CHECK(std::abs(s.axis_axial.z()) > 0.7);
    CHECK(std::abs(s.axis_vertical.y()) > 0.7);
    CHECK(std::abs(s.axis_lateral.x()) > 0.7);
    CHECK(s.omega_radial() == s.omega_vertical);
    CHECK(s.omega_axial < s.omega_vertical);
    CHECK(s.omega_lateral > 0);
  }

  TEST_CASE("pure pseudopotential: frequencies scale with V_rf, depth with V_rf squared") {
    const auto consts = PhysicalConstants::calibrated();
    DriveState d;
    d.dc_voltages.clear();
    const EffectivePotential pot(layout(), d, consts);
    const FieldPoint m = find_minimum(pot, {0, 120, 0});
    const SecularModes s1 = secular_frequencies(pot, m);
    const double depth1 = trap_depth(pot, m);

    DriveState d2 = d;
    d2.v_rf *= 2;
    const EffectivePotential pot2(layout(), d2, consts);
    const FieldPoint m2 = find_minimum(pot2, m);
    const SecularModes s2 = secular_frequencies(pot2, m2);
    CHECK(s2.omega_vertical / s1.omega_vertical == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(s2.omega_lateral / s1.omega_lateral == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(trap_depth(pot2, m2) / depth1 == doctest::Approx(4.0).epsilon(1e-3));
  }

  TEST_CASE("DC-only potential has no radial barrier") {
    DriveState d;
    d.v_rf = 0;
    const EffectivePotential pot(layout(), d, PhysicalConstants::calibrated());
    double depth = -1;
    try {
      depth = trap_depth(pot, {0, 120, 0});
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unbounded);
      depth = 0;
    }
    CHECK(depth == doctest::Approx(0.0));
  }

  TEST_CASE("Mathieu parameters: zero without RF, linear in V_rf, low-q frequency estimate") {
    const auto consts = PhysicalConstants::calibrated();
    DriveState off;
    off.v_rf = 0;
    off.v_ce = 0;
    const StabilityParams z = mathieu_parameters(layout(), off, consts, {0, 120, 0});
    for (double q : z.q) CHECK(q == 0.0);

    DriveState d;
    d.dc_voltages.clear();
    const FieldPoint m = find_minimum(layout(), d, consts, {0, 120, 0});
    const StabilityParams s1 = mathieu_parameters(layout(), d, consts, m);
    DriveState d2 = d;
    d2.v_rf *= 1.5;
    const StabilityParams s2 = mathieu_parameters(layout(), d2, consts, m);
    for (int i = 0; i < 3; ++i) CHECK(s2.q[i] == doctest::Approx(1.5 * s1.q[i]).epsilon(1e-9));

    const SecularModes modes = secular_frequencies(layout(), d, consts, m);
    const double q = std::abs(s1.q[1]);
    REQUIRE(q < 0.3);
    CHECK(std::abs(s1.a[1]) < 1e-12);
    CHECK(q * d.omega / (2 * std::sqrt(2.0)) == doctest::Approx(modes.omega_vertical).epsilon(0.05));
    CHECK(s1.stable());
  }

  TEST_CASE("stability region check") {
    StabilityParams s;
    s.q = {0.2, 0.2, 0.0};
    s.a = {0.0, 0.0, 0.001};
    CHECK(s.stable());
    s.q[0] = 0.95;
    CHECK_FALSE(s.stable());
    s.q[0] = 0.2;
    s.a[1] = -0.1;
    CHECK_FALSE(s.stable());
    s.a[1] = 0;
    s.a[2] = 0;
    CHECK_FALSE(s.stable());
  }

  TEST_CASE("height falls, frequency and depth rise with V_ce") {
    const auto consts = PhysicalConstants::calibrated();
    std::vector<double> vs;
    for (int i = 0; i <= 10; ++i) vs.push_back(10.0 * i);
    const auto curve = height_vs_vce(layout(), DriveState{}, consts, vs, {0, 120, 0});
    REQUIRE(curve.size() == vs.size());
    for (std::size_t i = 1; i < curve.size(); ++i) {
      CHECK(curve[i].height_um < curve[i - 1].height_um);
      CHECK(curve[i].omega_radial > curve[i - 1].omega_radial);
      CHECK(curve[i].depth_ev > curve[i - 1].depth_ev);
    }
    std::ostringstream os;
    write_curve_csv(os, curve);
    CHECK(os.str().rfind("V_ce_V,height_um,omega_radial_MHz,omega_axial_MHz,depth_eV\n", 0) == 0);
  }

  TEST_CASE("curve rejects V_ce outside [0, V_rf/2]") {
    const auto consts = PhysicalConstants::calibrated();
    CHECK(code_of([&] { height_vs_vce(layout(), DriveState{}, consts, {0, 150}, {0, 120, 0}); }) ==
          ErrorCode::invalid_params);
    CHECK(code_of([&] { height_vs_vce(layout(), DriveState{}, consts, {-1}, {0, 120, 0}); }) ==
          ErrorCode::invalid_params);
  }

  TEST_CASE("analyze_trap fills every field") {
    const TrapPoint tp = analyze_trap(layout(), DriveState{}, PhysicalConstants::calibrated(), {0, 120, 0});
    CHECK(tp.ion_height_um == tp.position.y);
    CHECK(tp.trap_depth_ev > 0);
    CHECK(tp.modes.omega_vertical > 0);
    CHECK(tp.mathieu.stable());
  }
}
