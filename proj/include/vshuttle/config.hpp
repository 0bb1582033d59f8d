#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vshuttle/dynamics.hpp"
#include "vshuttle/geometry.hpp"
#include "vshuttle/heating.hpp"
#include "vshuttle/sweep.hpp"
#include "vshuttle/waveforms.hpp"

namespace vshuttle {

struct ProtocolConfig {
  TrajectoryKind kind = TrajectoryKind::tanh;
  double N = 2.5;
  double T_ms = 0.45;
  double V_ce_final = 100.0;
  ShapingMode shaping = ShapingMode::voltage;
  DcSchedule dc_schedule = DcSchedule::tracked;

  bool operator==(const ProtocolConfig&) const = default;
};

struct SweepConfig {
  std::vector<double> N_values{2.5, 5.0, 10.0};
  std::vector<double> T_ms{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  bool operator==(const SweepConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  double waveform_rate_hz = 1e6;
  int trajectory_stride = 100;

  bool operator==(const OutputConfig&) const = default;
};

struct Config {
  // Exactly one of the two describes the layout.
  std::optional<LayoutParams> layout_params = LayoutParams{};
  std::optional<std::vector<Electrode>> electrodes;
  DriveState drive;
  double ion_mass_amu = 0;
  double ion_charge_e = 1.0;
  ProtocolConfig protocol;
  HeatingModel heating;
  SweepConfig sweep;
  OutputConfig output;

  TrapLayout layout() const;
  PhysicalConstants constants() const;
  TransportScenario scenario(ForceMode mode = ForceMode::pseudopotential) const;
  SweepSpec sweep_spec(ForceMode mode, int threads) const;

  bool operator==(const Config&) const = default;
};

/// Throws validation_error naming the offending field ("ion.mass_amu").
Config parse_config(const nlohmann::json& doc);
/// Throws parse_error on malformed JSON.
Config parse_config_text(std::string_view text);
Config load_config(const std::filesystem::path& path);

/// Fully explicit document (every default written out).
nlohmann::ordered_json to_json(const Config& c);

std::string_view tool_version();
/// FNV-1a 64 of the explicit document, 16 hex digits.
std::string config_hash(const Config& c);
Provenance provenance_of(const Config& c);
/// "# config_hash=<hash> version=<version>"
std::string provenance_header(const Config& c);

}  // namespace vshuttle
