#include "vshuttle/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "vshuttle/errors.hpp"

namespace vshuttle {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_params: return "invalid-params";
    case ErrorCode::domain_error: return "domain-error";
    case ErrorCode::unknown_node: return "unknown-node";
    case ErrorCode::no_minimum: return "no-minimum";
    case ErrorCode::not_a_minimum: return "not-a-minimum";
    case ErrorCode::unbounded: return "unbounded";
    case ErrorCode::no_root: return "no-root";
    case ErrorCode::voltage_limit: return "voltage-limit";
    case ErrorCode::unreachable_target: return "unreachable-target";
    case ErrorCode::invalid_protocol: return "invalid-protocol";
    case ErrorCode::ion_lost: return "ion-lost";
    case ErrorCode::step_failure: return "step-failure";
    case ErrorCode::missing_window: return "missing-window";
    case ErrorCode::all_cells_failed: return "all-cells-failed";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::validation_error: return "validation-error";
  }
  return "unknown";
}

std::string_view to_string(ElectrodeRole role) {
  switch (role) {
    case ElectrodeRole::rf_rail: return "rf_rail";
    case ElectrodeRole::central_rf: return "central_rf";
    case ElectrodeRole::dc_segment: return "dc_segment";
    case ElectrodeRole::ground: return "ground";
  }
  return "ground";
}

ElectrodeRole role_from_string(std::string_view s) {
  if (s == "rf_rail") return ElectrodeRole::rf_rail;
  if (s == "central_rf") return ElectrodeRole::central_rf;
  if (s == "dc_segment") return ElectrodeRole::dc_segment;
  if (s == "ground") return ElectrodeRole::ground;
  throw Error(ErrorCode::invalid_params, "unknown electrode role '" + std::string(s) + "'");
}

TrapLayout::TrapLayout(std::vector<Electrode> electrodes, bool mirror_symmetric)
    : electrodes_(std::move(electrodes)), mirror_symmetric_(mirror_symmetric) {
  std::set<std::string> seen;
  for (const auto& e : electrodes_) {
    if (!e.node.empty() && seen.insert(e.node).second) nodes_.push_back(e.node);
  }
}

bool TrapLayout::has_node(std::string_view node) const {
  return std::find(nodes_.begin(), nodes_.end(), node) != nodes_.end();
}

std::vector<const Electrode*> TrapLayout::electrodes_of(std::string_view node) const {
  std::vector<const Electrode*> out;
  for (const auto& e : electrodes_)
    if (e.node == node) out.push_back(&e);
  return out;
}

TrapLayout build_paper_trap(const LayoutParams& p) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_params, msg); };
  if (!(p.rf_width > 0)) fail("rf_width must be > 0");
  if (!(p.central_width > 0)) fail("central_width must be > 0");
  if (!(p.dc_segment_width > 0)) fail("dc_segment_width must be > 0");
  if (!(p.dc_segment_extent > 0)) fail("dc_segment_extent must be > 0");
  if (!(p.rail_length > 0)) fail("rail_length must be > 0");
  if (p.dc_segment_count < 3) fail("dc_segment_count must be >= 3");
  if (p.dc_segment_count % 2 == 0) fail("dc_segment_count must be odd (one centre segment per zone)");

  const double half_a = 0.5 * p.central_width;
  const double rail_outer = half_a + p.rf_width;
  const double half_len = 0.5 * p.rail_length;

  std::vector<Electrode> es;
  es.push_back({"rf_left", ElectrodeRole::rf_rail, -rail_outer, -half_a, -half_len, half_len,
                std::string(nodes::rf)});
  es.push_back({"rf_right", ElectrodeRole::rf_rail, half_a, rail_outer, -half_len, half_len,
                std::string(nodes::rf)});
  es.push_back({"ce", ElectrodeRole::central_rf, -half_a, half_a, -half_len, half_len,
                std::string(nodes::central)});

  const int n = p.dc_segment_count;
  const double z_start = -0.5 * n * p.dc_segment_width;
  for (const char* side : {"left", "right"}) {
    const bool left = std::string_view(side) == "left";
    const double x1 = left ? -rail_outer - p.dc_segment_extent : rail_outer;
    const double x2 = left ? -rail_outer : rail_outer + p.dc_segment_extent;
    for (int k = 0; k < n; ++k) {
      const double z1 = z_start + k * p.dc_segment_width;
      const auto node = (k == n / 2) ? nodes::dc_negative : nodes::dc_positive;
      es.push_back({"dc_" + std::string(side) + "_" + std::to_string(k), ElectrodeRole::dc_segment,
                    x1, x2, z1, z1 + p.dc_segment_width, std::string(node)});
    }
  }
  return TrapLayout(std::move(es), true);
}

namespace {

bool overlaps(const Electrode& a, const Electrode& b) {
  const double dx = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double dz = std::min(a.z2, b.z2) - std::max(a.z1, b.z1);
  return dx > 0 && dz > 0;
}

bool same_rect(const Electrode& a, const Electrode& b, double tol) {
  return std::abs(a.x1 - b.x1) <= tol && std::abs(a.x2 - b.x2) <= tol &&
         std::abs(a.z1 - b.z1) <= tol && std::abs(a.z2 - b.z2) <= tol;
}

}  // namespace

std::vector<Diagnostic> validate_layout(const TrapLayout& layout) {
  std::vector<Diagnostic> out;
  const auto& es = layout.electrodes();
  std::set<std::string> ids;
  for (const auto& e : es) {
    if (!(e.x1 < e.x2) || !(e.z1 < e.z2)) {
      std::ostringstream os;
      os << "electrode '" << e.id << "' is degenerate (x1=" << e.x1 << ", x2=" << e.x2
         << ", z1=" << e.z1 << ", z2=" << e.z2 << ")";
      out.push_back({Diagnostic::Kind::degenerate, os.str()});
    }
    if (!ids.insert(e.id).second)
      out.push_back({Diagnostic::Kind::duplicate_id, "duplicate electrode id '" + e.id + "'"});
    if (e.node.empty())
      out.push_back({Diagnostic::Kind::missing_node, "electrode '" + e.id + "' has no voltage node"});
  }
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (std::size_t j = i + 1; j < es.size(); ++j) {
      if (es[i].node != es[j].node && overlaps(es[i], es[j]))
        out.push_back({Diagnostic::Kind::overlap,
                       "electrodes '" + es[i].id + "' and '" + es[j].id + "' overlap"});
    }
  }
  if (layout.mirror_symmetric()) {
    for (const auto& e : es) {
      Electrode m = e;
      m.x1 = -e.x2;
      m.x2 = -e.x1;
      const bool found = std::any_of(es.begin(), es.end(), [&](const Electrode& o) {
        return o.node == e.node && same_rect(o, m, 1e-9 * (1.0 + std::abs(e.x2)));
      });
      if (!found)
        out.push_back({Diagnostic::Kind::asymmetric,
                       "electrode '" + e.id + "' has no mirror partner about x=0"});
    }
  }
  return out;
}

TrapLayout mirror_x(const TrapLayout& layout) {
  std::vector<Electrode> es;
  for (const auto& e : layout.electrodes()) {
    Electrode m = e;
    m.id += "~";
    m.x1 = -e.x2;
    m.x2 = -e.x1;
    es.push_back(std::move(m));
  }
  return TrapLayout(std::move(es), layout.mirror_symmetric());
}

nlohmann::ordered_json layout_to_json(const TrapLayout& layout) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : layout.electrodes()) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["role"] = std::string(to_string(e.role));
    j["x1"] = e.x1;
    j["x2"] = e.x2;
    j["z1"] = e.z1;
    j["z2"] = e.z2;
    j["node"] = e.node;
    arr.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["electrodes"] = std::move(arr);
  return doc;
}

TrapLayout layout_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("electrodes") || !doc["electrodes"].is_array())
    throw Error(ErrorCode::invalid_params, "layout document needs an 'electrodes' array");
  std::vector<Electrode> es;
  std::size_t i = 0;
  for (const auto& j : doc["electrodes"]) {
    const std::string where = "electrodes[" + std::to_string(i++) + "]";
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known{"id", "role", "x1", "x2", "z1", "z2", "node"};
      if (!known.count(key)) throw Error(ErrorCode::invalid_params, where + "." + key + ": unknown key");
    }
    try {
      es.push_back({j.at("id").get<std::string>(), role_from_string(j.at("role").get<std::string>()),
                    j.at("x1").get<double>(), j.at("x2").get<double>(), j.at("z1").get<double>(),
                    j.at("z2").get<double>(), j.at("node").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::invalid_params, where + ": " + ex.what());
    }
  }
  return TrapLayout(std::move(es), false);
}

}  // namespace vshuttle
