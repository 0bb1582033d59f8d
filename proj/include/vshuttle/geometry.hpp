#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace vshuttle {

enum class ElectrodeRole { rf_rail, central_rf, dc_segment, ground };

std::string_view to_string(ElectrodeRole role);
ElectrodeRole role_from_string(std::string_view s);

// Voltage-node labels used by the default layout.
namespace nodes {
inline constexpr std::string_view rf = "rf";
inline constexpr std::string_view central = "ce";
inline constexpr std::string_view dc_positive = "dc_pos";
inline constexpr std::string_view dc_negative = "dc_neg";
}  // namespace nodes

/// Rectangular patch in the y = 0 plane. Corners are in micrometres.
struct Electrode {
  std::string id;
  ElectrodeRole role = ElectrodeRole::ground;
  double x1 = 0, x2 = 0;
  double z1 = 0, z2 = 0;
  std::string node;

  double width() const { return x2 - x1; }
  double length() const { return z2 - z1; }
  bool operator==(const Electrode&) const = default;
};

/// Parameters of the single-zone four-rail slice: two RF rails of width
/// `rf_width` around a central electrode of width `central_width`, with
/// `dc_segment_count` DC segments on each side of the rails.
struct LayoutParams {
  double rf_width = 300.0;
  double central_width = 85.0;
  double dc_segment_width = 310.0;   // axial (z) length of one segment
  double dc_segment_extent = 750.0;  // lateral (x) width of the segment column
  double rail_length = 3000.0;
  int dc_segment_count = 3;

  bool operator==(const LayoutParams&) const = default;
};

/// Immutable electrode set. Every electrode carries exactly one voltage node;
/// the uncovered plane is grounded.
class TrapLayout {
 public:
  TrapLayout() = default;
  explicit TrapLayout(std::vector<Electrode> electrodes, bool mirror_symmetric = false);

  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  const std::vector<std::string>& nodes() const { return nodes_; }
  bool has_node(std::string_view node) const;
  std::vector<const Electrode*> electrodes_of(std::string_view node) const;

  // True when the constructor that produced the layout guarantees mirror
  // symmetry about x = 0; validate_layout checks the claim.
  bool mirror_symmetric() const { return mirror_symmetric_; }

 private:
  std::vector<Electrode> electrodes_;
  std::vector<std::string> nodes_;
  bool mirror_symmetric_ = false;
};

TrapLayout build_paper_trap(const LayoutParams& params = {});

struct Diagnostic {
  enum class Kind { degenerate, overlap, duplicate_id, missing_node, asymmetric };
  Kind kind;
  std::string message;
};

std::vector<Diagnostic> validate_layout(const TrapLayout& layout);

/// Layout reflected about x = 0 (ids suffixed with "~").
TrapLayout mirror_x(const TrapLayout& layout);

nlohmann::ordered_json layout_to_json(const TrapLayout& layout);
TrapLayout layout_from_json(const nlohmann::json& doc);

}  // namespace vshuttle
