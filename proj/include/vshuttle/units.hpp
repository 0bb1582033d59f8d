#pragma once

#include <numbers>

namespace vshuttle::units {

inline constexpr double micron = 1e-6;
inline constexpr double millisecond = 1e-3;
inline constexpr double mega = 1e6;

inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double atomic_mass = 1.66053906660e-27;      // kg
inline constexpr double hbar = 1.054571817e-34;               // J s

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Breakdown-safe amplitude for any electrode.
inline constexpr double voltage_limit = 500.0;

constexpr double um_to_m(double um) { return um * micron; }
constexpr double m_to_um(double m) { return m / micron; }
constexpr double joule_to_ev(double j) { return j / elementary_charge; }
constexpr double angular_to_mhz(double omega) { return omega / two_pi / mega; }
constexpr double mhz_to_angular(double mhz) { return mhz * mega * two_pi; }

}  // namespace vshuttle::units
