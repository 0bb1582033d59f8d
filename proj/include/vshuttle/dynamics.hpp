#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "vshuttle/trap_analysis.hpp"
#include "vshuttle/waveforms.hpp"

namespace vshuttle {

enum class ForceMode { pseudopotential, full_rf };

std::string_view to_string(ForceMode m);
ForceMode force_mode_from_string(std::string_view s);  // accepts full_rf and full-rf

struct TrajectorySample {
  double t = 0;  // s
  Vec3 r = Vec3::Zero();  // m
  Vec3 v = Vec3::Zero();  // m/s
  double kinetic_energy = 0;  // J, 0.5 m |v|^2
  double secular_energy = 0;  // J, from the RF-period averaged velocity (= kinetic_energy in pseudopotential mode)
};

struct IndexRange {
  std::size_t begin = 0, end = 0;  // half-open
  bool empty() const { return end <= begin; }
};

// Largest secular kinetic energy seen in each phase at full step resolution.
struct WindowPeaks {
  double pre = 0, transport = 0, post = 0;
};

struct InitialState {
  Vec3 r = Vec3::Zero();  // m
  Vec3 v = Vec3::Zero();  // m/s
};

struct IntegrationOptions {
  double steps_per_secular_period = 200;  // against the fastest mode along the path
  double steps_per_rf_period = 100;       // full_rf mode
  double pre_window_periods = 10;         // of the slowest initial mode
  double post_window_periods = 10;        // of the slowest final mode
  int record_stride = 10;
  double lost_factor = 5.0;  // max distance from the instantaneous minimum, in ion heights
  bool energy_self_test = false;
  double energy_tolerance = 1e-6;
  int track_knots = 33;  // minima sampled along the transport for the lost-ion check
};

struct TrajectoryRecord {
  std::vector<TrajectorySample> samples;
  ForceMode mode = ForceMode::pseudopotential;
  ShuttleProtocol protocol;
  TrapPoint initial_minimum;
  TrapPoint final_minimum;
  std::optional<IndexRange> pre_window;
  std::optional<IndexRange> post_window;
  WindowPeaks peaks;
  double dt = 0;  // s
};

/// Classical motion under the protocol. Starts at rest at the initial minimum
/// unless `initial` is given, a pre-window before protocol.t0 and a frozen
/// post-window after the end.
TrajectoryRecord integrate_trajectory(const ShuttleProtocol& protocol,
                                      ForceMode mode = ForceMode::pseudopotential,
                                      std::optional<InitialState> initial = std::nullopt,
                                      const IntegrationOptions& opts = {});

/// Relative total-energy drift of RK4 in the static potential `pot`, starting
/// from `start` and running `periods` periods of the fastest mode.
double static_energy_drift(const EffectivePotential& pot, const InitialState& start,
                           double periods = 100, double steps_per_period = 200);

/// Thermal initial state around a minimum: Gaussian positions and velocities
/// per normal mode at temperature `kelvin`.
InitialState sample_thermal_state(const TrapPoint& minimum, const PhysicalConstants& consts,
                                  double kelvin, std::mt19937_64& rng);

struct QuantaResult {
  double n_shuttle = 0;       // peak gain over the transport and post-window
  double n_residual = 0;      // gain left in the frozen final potential
  double ke_max_final = 0;    // J
  double ke_max_initial = 0;  // J
  double ke_max_residual = 0; // J
  double omega_used = 0;      // rad/s
};

/// (ke_max_final - ke_max_initial) / (hbar omega). Throws missing_window
/// without a post-transport window.
QuantaResult motional_quanta(const TrajectoryRecord& record, double omega);
/// Same, with the final vertical secular frequency.
QuantaResult motional_quanta(const TrajectoryRecord& record);

/// A transport to be repeated over durations and smoothness values.
struct TransportScenario {
  std::shared_ptr<const TrapLayout> layout;
  DriveState drive;
  PhysicalConstants consts;
  ProtocolTarget target;
  TrajectoryKind kind = TrajectoryKind::tanh;
  ProtocolOptions protocol_options;
  IntegrationOptions integration;
  ForceMode mode = ForceMode::pseudopotential;
};

/// Builds the protocol of the scenario for one (T, N).
ShuttleProtocol make_protocol(const TransportScenario& s, double T_total, double N);

struct GainPoint {
  double T = 0;  // s
  QuantaResult quanta;
};

std::vector<GainPoint> ke_gain_vs_time(const TransportScenario& s, double N,
                                       const std::vector<double>& T_grid);

/// Columns t_s,x_um,y_um,z_um,vx,vy,vz,ke_J; every `stride`-th sample.
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record, int stride = 1);

}  // namespace vshuttle
