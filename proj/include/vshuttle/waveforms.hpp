#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <math.h>  // pchip.hpp calls unqualified isnan
#include <boost/math/interpolators/pchip.hpp>

#include "vshuttle/fields.hpp"
#include "vshuttle/trap_analysis.hpp"

namespace vshuttle {

enum class TrajectoryKind { linear, sinusoidal, tanh };

std::string_view to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(std::string_view s);

/// Displacement along the transport direction after time t of a transport of
/// length L lasting T. Clamped to 0 before the start and L after the end.
double trajectory_position(TrajectoryKind kind, double L, double T, double N, double t);

/// Hyperbolic-tangent step from a1 to a2 centred at tt1 with steepness tau.
struct VoltageRamp {
  double a1 = 0;
  double a2 = 0;
  double tt1 = 0;   // s
  double tau = 1;   // s

  bool operator==(const VoltageRamp&) const = default;
};

double ramp_voltage(const VoltageRamp& r, double t);

struct CompensationOptions {
  double v_positive = 6.0;
  double bracket_low = -20.0;
  double bracket_high = 0.0;
  double tolerance = 1e-4;  // V
};

struct Compensation {
  double v_negative = 0;       // V on the negative DC node
  double residual_field = 0;   // |vertical + axial DC field| at the RF nil, V/m
  FieldPoint rf_nil;           // pseudopotential minimum used for the residual
};

/// Negative-node voltage that nulls the vertical DC field at the RF nil for
/// the given central-electrode amplitude; the positive node is held fixed.
Compensation compensate_dc(const TrapLayout& layout, const DriveState& drive,
                           const PhysicalConstants& consts, double v_ce,
                           const CompensationOptions& opts = {},
                           std::optional<FieldPoint> nil_guess = std::nullopt);

/// compensate_dc sampled on evenly spaced V_ce knots and interpolated with a
/// monotone cubic (PCHIP).
class CompensationTable {
 public:
  CompensationTable(const TrapLayout& layout, const DriveState& drive,
                    const PhysicalConstants& consts, double v_ce_begin, double v_ce_end,
                    int knots = 33, const CompensationOptions& opts = {});

  double operator()(double v_ce) const;
  const std::vector<double>& knots() const { return vce_; }
  const std::vector<double>& values() const { return vneg_; }
  const std::vector<double>& nil_heights_um() const { return nil_height_; }

 private:
  using Pchip = boost::math::interpolators::pchip<std::vector<double>>;
  std::vector<double> vce_, vneg_, nil_height_;
  std::shared_ptr<const Pchip> interp_;  // null when the knot range is a point
  double lo_ = 0, hi_ = 0;
};

/// How the trajectory shape enters the voltages: directly on V_ce (default),
/// or on the ion height with V_ce obtained by inverting h(V_ce).
enum class ShapingMode { voltage, height };
/// DC negative-node schedule: the compensation interpolant tracked along
/// V_ce(t) (default), or a tanh ramp between the compensated endpoints.
enum class DcSchedule { ramp, tracked };

std::string_view to_string(ShapingMode m);
std::string_view to_string(DcSchedule m);

struct ProtocolOptions {
  ShapingMode shaping = ShapingMode::voltage;
  DcSchedule dc_schedule = DcSchedule::tracked;
  CompensationOptions compensation;
  FieldPoint initial_guess{0, 120, 0};
  double voltage_limit = units::voltage_limit;
  int validation_samples = 10000;
};

/// Inverse of the RF-nil height curve, h -> V_ce, for the height shaping mode.
class HeightMap {
 public:
  explicit HeightMap(const CompensationTable& table);
  double vce_for_height(double height_um) const;
  double height_for_vce(double v_ce) const;
  double min_height() const { return h_lo_; }
  double max_height() const { return h_hi_; }

 private:
  using Pchip = boost::math::interpolators::pchip<std::vector<double>>;
  std::shared_ptr<const Pchip> inverse_, forward_;
  double h_lo_ = 0, h_hi_ = 0;
  double v_lo_ = 0, v_hi_ = 0;
};

struct ShuttleProtocol {
  TrajectoryKind kind = TrajectoryKind::tanh;
  double L_um = 0;          // vertical transport distance (start minus end height)
  double T_total = 0;       // s
  double N = 1;             // tanh smoothness
  double t0 = 0;            // s, start of transport
  VoltageRamp vce_ramp;     // endpoints of V_ce; shape follows trajectory_position
  VoltageRamp dc_ramp;      // negative DC node; times relative to t0, held outside the transport
  DriveState drive;         // initial drive
  PhysicalConstants consts;
  std::shared_ptr<const TrapLayout> layout;
  ShapingMode shaping = ShapingMode::voltage;
  DcSchedule dc_schedule = DcSchedule::tracked;
  std::string negative_node{nodes::dc_negative};
  double start_height_um = 0;
  double end_height_um = 0;
  std::shared_ptr<const CompensationTable> compensation;
  std::shared_ptr<const HeightMap> height_map;

  // Normalised progress in [0, 1] at absolute time t.
  double progress(double t) const;
  double vce_at(double t) const;
  double vneg_at(double t) const;
  DriveState drive_at(double t) const;
  double end_time() const { return t0 + T_total; }

  /// Throws voltage_limit when any scheduled |V| exceeds `limit` on `samples`
  /// evenly spaced times; invalid_protocol on bad T, L or N.
  void validate(double limit = units::voltage_limit, int samples = 10000) const;
};

/// Target of a transport: the final V_ce, or the vertical distance to cover.
struct ProtocolTarget {
  std::optional<double> final_vce;
  std::optional<double> distance_um;
};

ShuttleProtocol build_protocol(std::shared_ptr<const TrapLayout> layout, const DriveState& drive,
                               const PhysicalConstants& consts, const ProtocolTarget& target,
                               double T_total, double N, TrajectoryKind kind,
                               const ProtocolOptions& opts = {});

/// Same protocol run backwards in time (end state to start state).
ShuttleProtocol reversed(const ShuttleProtocol& p);

/// Columns t_s,V_rf_V,V_ce_V,V_dc_pos_V,V_dc_neg_V.
void write_waveform_csv(std::ostream& os, const ShuttleProtocol& p, double sample_rate = 1e6);

}  // namespace vshuttle
