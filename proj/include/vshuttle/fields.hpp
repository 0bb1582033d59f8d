#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vshuttle/geometry.hpp"
#include "vshuttle/units.hpp"

namespace vshuttle {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Evaluation point above the trap plane, in micrometres (y is the height).
struct FieldPoint {
  double x = 0, y = 0, z = 0;

  Vec3 si() const { return Vec3(x, y, z) * units::micron; }
  static FieldPoint from_si(const Vec3& r) {
    return {r.x() / units::micron, r.y() / units::micron, r.z() / units::micron};
  }
};

/// Instantaneous voltage assignment. RF amplitudes are applied to nodes by
/// electrode role (rf_rail -> v_rf, central_rf -> v_ce); DC nodes take their
/// value from dc_voltages (missing nodes are grounded).
struct DriveState {
  double v_rf = 200.0;
  double v_ce = 0.0;
  double omega = units::mhz_to_angular(22.0);  // rad/s
  std::map<std::string, double, std::less<>> dc_voltages{{"dc_pos", 6.0}, {"dc_neg", -8.4}};

  double dc(std::string_view node) const;
  // Throws validation_error on omega <= 0 or any |V| above `limit`.
  void validate(double limit = units::voltage_limit) const;
  bool operator==(const DriveState&) const = default;
};

struct PhysicalConstants {
  double ion_mass = 0;    // kg
  double ion_charge = 0;  // C
  double hbar = units::hbar;

  static PhysicalConstants from_species(double mass_amu, double charge_e);
  // 226 amu singly charged: the species that reproduces the reported radial
  // frequencies for the default geometry and drive.
  static PhysicalConstants calibrated() { return from_species(226.0254, 1.0); }
  bool operator==(const PhysicalConstants&) const = default;
};

using NodeVoltages = std::map<std::string, double, std::less<>>;

NodeVoltages rf_node_voltages(const TrapLayout& layout, const DriveState& drive);
NodeVoltages dc_node_voltages(const TrapLayout& layout, const DriveState& drive);

/// Gapless-plane potential of one rectangular patch held at `applied_volts`.
double patch_potential(const Electrode& e, double applied_volts, const FieldPoint& p);

/// Potential of all patches of `node` at 1 V.
double node_basis_potential(const TrapLayout& layout, std::string_view node, const FieldPoint& p);

/// Superposition sum_i V_i * basis_i(p). Nodes absent from `voltages` are 0 V.
double layout_potential(const TrapLayout& layout, const NodeVoltages& voltages, const FieldPoint& p);

/// Potential (V), gradient (V/m) and Hessian (V/m^2) in SI.
struct FieldSample {
  double potential = 0;
  Vec3 gradient = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();
};

struct FdOptions {
  double relative_step = 1e-3;  // step = relative_step * height
  double min_step_um = 1e-5;
};

/// Central finite differences with one Richardson level; symmetric Hessian.
FieldSample field_and_hessian(const TrapLayout& layout, const NodeVoltages& voltages,
                              const FieldPoint& p, const FdOptions& opts = {});

/// Q^2 |grad phi_RF|^2 / (4 m Omega^2), joules.
double pseudopotential(const TrapLayout& layout, const DriveState& drive,
                       const PhysicalConstants& consts, const FieldPoint& p);

/// Pseudopotential plus Q * phi_DC, joules.
double total_effective_potential(const TrapLayout& layout, const DriveState& drive,
                                 const PhysicalConstants& consts, const FieldPoint& p);

/// Closed-form value, gradient and Hessian of one patch at 1 V (SI).
FieldSample patch_derivatives(const Electrode& e, const Vec3& r);

/// Secular potential evaluator with analytic field derivatives. Holds the
/// layout's patches in SI units; the drive can be swapped without
/// recompiling the geometry. Not thread-safe across set_drive calls.
class EffectivePotential {
 public:
  EffectivePotential(const TrapLayout& layout, const DriveState& drive,
                     const PhysicalConstants& consts);

  void set_drive(const DriveState& drive);
  const DriveState& drive() const { return drive_; }
  const PhysicalConstants& constants() const { return consts_; }

  // RF amplitude field and DC field (potential, gradient, Hessian).
  FieldSample rf_field(const Vec3& r) const;
  FieldSample dc_field(const Vec3& r) const;

  double pseudo_energy(const Vec3& r) const;
  double energy(const Vec3& r) const;
  Vec3 gradient(const Vec3& r) const;
  Vec3 pseudo_gradient(const Vec3& r) const;
  // Finite difference of the analytic gradient; symmetrised.
  Mat3 hessian(const Vec3& r) const;
  Mat3 pseudo_hessian(const Vec3& r) const;

  // Instantaneous Coulomb force with the RF nodes at amplitude * rf_cos.
  Vec3 instantaneous_force(const Vec3& r, double rf_cos) const;

 private:
  struct Patch {
    double x1, x2, z1, z2;  // metres
    double rf_weight = 0;
    double dc_weight = 0;
    ElectrodeRole role;
    std::string node;
  };
  void accumulate(const Vec3& r, FieldSample* rf, FieldSample* dc, bool want_hessian) const;

  std::vector<Patch> patches_;
  DriveState drive_;
  PhysicalConstants consts_;
};

/// Writes x,y,z,<column> rows for a regular grid (SI units).
struct GridSpec {
  FieldPoint origin;
  FieldPoint step;
  int nx = 1, ny = 1, nz = 1;
};
void write_field_map_csv(std::ostream& os, const TrapLayout& layout, const DriveState& drive,
                         const PhysicalConstants& consts, const GridSpec& grid, bool effective);

}  // namespace vshuttle
