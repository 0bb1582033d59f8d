#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <vector>

#include "vshuttle/fields.hpp"

namespace vshuttle {

/// Normal modes of the secular potential at a minimum. Modes are labelled by
/// axis character: the axial mode is the eigenvector with |z| > 0.7 (largest
/// |z| if none qualifies), the vertical mode is the remaining one with the
/// larger |y| component.
struct SecularModes {
  double omega_lateral = 0;   // rad/s, radial mode dominated by x
  double omega_vertical = 0;  // rad/s, radial mode dominated by y (transported)
  double omega_axial = 0;     // rad/s
  Vec3 axis_lateral = Vec3::UnitX();
  Vec3 axis_vertical = Vec3::UnitY();
  Vec3 axis_axial = Vec3::UnitZ();

  // Reported radial frequency: the vertical mode, which the shuttle drives.
  double omega_radial() const { return omega_vertical; }
};

/// Mathieu parameters along the three principal axes (lateral, vertical, axial).
struct StabilityParams {
  std::array<double, 3> q{};
  std::array<double, 3> a{};

  // Lowest region in the low-q form: |q| < 0.9 and 0 < a + q^2/2 < 1.
  bool stable() const;
};

struct TrapPoint {
  FieldPoint position;  // um
  double ion_height_um = 0;
  SecularModes modes;
  double trap_depth_ev = 0;
  StabilityParams mathieu;
};

struct MinimizerOptions {
  int max_newton_iterations = 100;
  double gradient_tolerance = 1e-9;  // relative to curvature * height
  double region_factor = 10.0;       // search confined to 0 < y < factor * guess.y
};

/// Local minimum of the secular potential U = Psi + Q phi_DC near `guess`.
FieldPoint find_minimum(const TrapLayout& layout, const DriveState& drive,
                        const PhysicalConstants& consts, const FieldPoint& guess,
                        const MinimizerOptions& opts = {});

/// Same, with a prepared evaluator. When `pseudo_only` the DC term is ignored
/// (locates the RF nil).
FieldPoint find_minimum(const EffectivePotential& pot, const FieldPoint& guess,
                        const MinimizerOptions& opts = {}, bool pseudo_only = false);

SecularModes secular_frequencies(const TrapLayout& layout, const DriveState& drive,
                                 const PhysicalConstants& consts, const FieldPoint& at);
SecularModes secular_frequencies(const EffectivePotential& pot, const FieldPoint& at);

struct DepthOptions {
  int rays = 72;
  double radius_factor = 10.0;  // search radius in ion heights
  double radial_step = 0.01;    // in ion heights
};

/// Escape barrier in the x-y plane through the minimum, in eV.
double trap_depth(const TrapLayout& layout, const DriveState& drive, const PhysicalConstants& consts,
                  const FieldPoint& at, const DepthOptions& opts = {});
double trap_depth(const EffectivePotential& pot, const FieldPoint& at, const DepthOptions& opts = {});

StabilityParams mathieu_parameters(const TrapLayout& layout, const DriveState& drive,
                                   const PhysicalConstants& consts, const FieldPoint& at);

/// Minimum plus modes, depth and Mathieu parameters.
TrapPoint analyze_trap(const TrapLayout& layout, const DriveState& drive,
                       const PhysicalConstants& consts, const FieldPoint& guess);

struct CurveSample {
  double v_ce = 0;
  double height_um = 0;
  double omega_radial = 0;  // rad/s
  double omega_axial = 0;   // rad/s
  double depth_ev = 0;
  FieldPoint position;
};

/// Continuation over V_ce: each sample is seeded with the previous minimum.
std::vector<CurveSample> height_vs_vce(const TrapLayout& layout, const DriveState& drive,
                                       const PhysicalConstants& consts,
                                       const std::vector<double>& vce_samples,
                                       const FieldPoint& guess, bool with_depth = true);

void write_curve_csv(std::ostream& os, const std::vector<CurveSample>& curve);

}  // namespace vshuttle
