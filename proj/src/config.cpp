#include "vshuttle/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "vshuttle/errors.hpp"

#ifndef VSHUTTLE_VERSION
#define VSHUTTLE_VERSION "0.0.0"
#endif

namespace vshuttle {

namespace {

using json = nlohmann::json;

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::validation_error, path + ": " + what);
}

// Object view that tracks its path and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path, std::set<std::string> known)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_.empty() ? "document" : path_, "expected an object");
    for (const auto& [key, _] : j_.items())
      if (!known.count(key)) invalid(at(key), "unknown key");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  double number(const std::string& key, double fallback) const {
    return has(key) ? required_number(key) : fallback;
  }
  double required_number(const std::string& key) const {
    if (!has(key)) invalid(at(key), "required field missing");
    const json& v = j_.at(key);
    if (!v.is_number()) invalid(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) invalid(at(key), "must be finite");
    return d;
  }
  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) invalid(at(key), "expected an integer");
    return v.get<int>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) invalid(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_array()) invalid(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) invalid(at(key) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  Section child(const std::string& key, std::set<std::string> known) const {
    static const json empty = json::object();
    return Section(has(key) ? j_.at(key) : empty, at(key), std::move(known));
  }

 private:
  const json& j_;
  std::string path_;
};

template <class F>
auto as_validation(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.is_config_error()) throw;
    invalid(path, e.what());
  }
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) invalid(path, what);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Config parse_config(const json& doc) {
  const Section root(doc, "", {"layout", "drive", "ion", "protocol", "heating", "sweep", "output"});
  Config c;

  // layout
  {
    const Section s = root.child("layout", {"params", "electrodes"});
    require(!(s.has("params") && s.has("electrodes")), "layout", "give either params or electrodes, not both");
    if (s.has("electrodes")) {
      c.layout_params.reset();
      c.electrodes = as_validation("layout.electrodes", [&] {
        return layout_from_json(json{{"electrodes", s.raw("electrodes")}}).electrodes();
      });
      const TrapLayout layout(*c.electrodes);
      const auto diags = validate_layout(layout);
      if (!diags.empty()) invalid("layout.electrodes", diags.front().message);
    } else {
      const Section p = s.child("params", {"rf_width_um", "central_width_um", "dc_segment_width_um",
                                           "dc_segment_extent_um", "rail_length_um", "dc_segment_count"});
      LayoutParams lp;
      lp.rf_width = p.number("rf_width_um", lp.rf_width);
      lp.central_width = p.number("central_width_um", lp.central_width);
      lp.dc_segment_width = p.number("dc_segment_width_um", lp.dc_segment_width);
      lp.dc_segment_extent = p.number("dc_segment_extent_um", lp.dc_segment_extent);
      lp.rail_length = p.number("rail_length_um", lp.rail_length);
      lp.dc_segment_count = p.integer("dc_segment_count", lp.dc_segment_count);
      as_validation("layout.params", [&] { return build_paper_trap(lp); });
      c.layout_params = lp;
    }
  }

  // drive
  {
    const Section s = root.child("drive", {"V_rf", "Omega_MHz", "V_ce", "dc"});
    c.drive.v_rf = s.number("V_rf", c.drive.v_rf);
    const double omega_mhz = s.number("Omega_MHz", units::angular_to_mhz(c.drive.omega));
    require(omega_mhz > 0, s.at("Omega_MHz"), "must be > 0");
    c.drive.omega = units::mhz_to_angular(omega_mhz);
    c.drive.v_ce = s.number("V_ce", c.drive.v_ce);
    if (s.has("dc")) {
      const json& dc = s.raw("dc");
      require(dc.is_object(), s.at("dc"), "expected an object of node voltages");
      c.drive.dc_voltages.clear();
      for (const auto& [node, v] : dc.items()) {
        require(v.is_number(), s.at("dc") + "." + node, "expected a number");
        c.drive.dc_voltages[node] = v.get<double>();
      }
    }
    const auto limit = units::voltage_limit;
    require(std::abs(c.drive.v_rf) <= limit, s.at("V_rf"),
            fmt(c.drive.v_rf) + " V exceeds the " + fmt(limit) + " V limit");
    require(std::abs(c.drive.v_ce) <= limit, s.at("V_ce"),
            fmt(c.drive.v_ce) + " V exceeds the " + fmt(limit) + " V limit");
    for (const auto& [node, v] : c.drive.dc_voltages)
      require(std::abs(v) <= limit, s.at("dc") + "." + node,
              fmt(v) + " V exceeds the " + fmt(limit) + " V limit");
  }

  // ion
  {
    const Section s = root.child("ion", {"mass_amu", "charge_e"});
    c.ion_mass_amu = s.required_number("mass_amu");
    require(c.ion_mass_amu > 0, s.at("mass_amu"), "must be > 0");
    c.ion_charge_e = s.number("charge_e", c.ion_charge_e);
    require(c.ion_charge_e != 0, s.at("charge_e"), "must be nonzero");
  }

  // protocol
  {
    const Section s = root.child("protocol", {"kind", "N", "T_ms", "V_ce_final", "shaping", "dc_schedule"});
    ProtocolConfig& p = c.protocol;
    p.kind = as_validation(s.at("kind"), [&] {
      return trajectory_kind_from_string(s.string("kind", std::string(to_string(p.kind))));
    });
    p.N = s.number("N", p.N);
    require(p.N > 0, s.at("N"), "must be > 0");
    p.T_ms = s.number("T_ms", p.T_ms);
    require(p.T_ms > 0, s.at("T_ms"), "must be > 0");
    p.V_ce_final = s.number("V_ce_final", p.V_ce_final);
    require(std::abs(p.V_ce_final) <= units::voltage_limit, s.at("V_ce_final"),
            fmt(p.V_ce_final) + " V exceeds the " + fmt(units::voltage_limit) + " V limit");
    const std::string shaping = s.string("shaping", std::string(to_string(p.shaping)));
    if (shaping == "voltage") p.shaping = ShapingMode::voltage;
    else if (shaping == "height") p.shaping = ShapingMode::height;
    else invalid(s.at("shaping"), "expected 'voltage' or 'height'");
    const std::string sched = s.string("dc_schedule", std::string(to_string(p.dc_schedule)));
    if (sched == "ramp") p.dc_schedule = DcSchedule::ramp;
    else if (sched == "tracked") p.dc_schedule = DcSchedule::tracked;
    else invalid(s.at("dc_schedule"), "expected 'ramp' or 'tracked'");
  }

  // heating
  {
    const Section s = root.child("heating", {"rate_per_ms", "reference_height_um"});
    c.heating.rate_at_reference = s.number("rate_per_ms", c.heating.rate_at_reference);
    require(c.heating.rate_at_reference > 0, s.at("rate_per_ms"), "must be > 0");
    c.heating.reference_height = s.number("reference_height_um", c.heating.reference_height);
    require(c.heating.reference_height > 0, s.at("reference_height_um"), "must be > 0");
  }

  // sweep
  {
    const Section s = root.child("sweep", {"N_values", "T_ms"});
    c.sweep.N_values = s.numbers("N_values", c.sweep.N_values);
    c.sweep.T_ms = s.numbers("T_ms", c.sweep.T_ms);
    require(!c.sweep.N_values.empty(), s.at("N_values"), "must not be empty");
    require(!c.sweep.T_ms.empty(), s.at("T_ms"), "must not be empty");
    for (double n : c.sweep.N_values) require(n > 0, s.at("N_values"), "entries must be > 0");
    for (std::size_t i = 0; i < c.sweep.T_ms.size(); ++i) {
      require(c.sweep.T_ms[i] > 0, s.at("T_ms"), "entries must be > 0");
      if (i > 0) require(c.sweep.T_ms[i] > c.sweep.T_ms[i - 1], s.at("T_ms"), "must be strictly ascending");
    }
  }

  // output
  {
    const Section s = root.child("output", {"directory", "waveform_rate_hz", "trajectory_stride"});
    c.output.directory = s.string("directory", c.output.directory);
    c.output.waveform_rate_hz = s.number("waveform_rate_hz", c.output.waveform_rate_hz);
    require(c.output.waveform_rate_hz > 0, s.at("waveform_rate_hz"), "must be > 0");
    c.output.trajectory_stride = s.integer("trajectory_stride", c.output.trajectory_stride);
    require(c.output.trajectory_stride >= 1, s.at("trajectory_stride"), "must be >= 1");
  }
  return c;
}

Config parse_config_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  return parse_config(doc);
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::parse_error, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

nlohmann::ordered_json to_json(const Config& c) {
  nlohmann::ordered_json j;
  if (c.electrodes) {
    j["layout"]["electrodes"] = layout_to_json(TrapLayout(*c.electrodes))["electrodes"];
  } else {
    const LayoutParams lp = c.layout_params.value_or(LayoutParams{});
    j["layout"]["params"] = {{"rf_width_um", lp.rf_width},
                             {"central_width_um", lp.central_width},
                             {"dc_segment_width_um", lp.dc_segment_width},
                             {"dc_segment_extent_um", lp.dc_segment_extent},
                             {"rail_length_um", lp.rail_length},
                             {"dc_segment_count", lp.dc_segment_count}};
  }
  nlohmann::ordered_json dc = nlohmann::ordered_json::object();
  for (const auto& [node, v] : c.drive.dc_voltages) dc[node] = v;
  j["drive"] = {{"V_rf", c.drive.v_rf},
                {"Omega_MHz", units::angular_to_mhz(c.drive.omega)},
                {"V_ce", c.drive.v_ce},
                {"dc", dc}};
  j["ion"] = {{"mass_amu", c.ion_mass_amu}, {"charge_e", c.ion_charge_e}};
  j["protocol"] = {{"kind", to_string(c.protocol.kind)},
                   {"N", c.protocol.N},
                   {"T_ms", c.protocol.T_ms},
                   {"V_ce_final", c.protocol.V_ce_final},
                   {"shaping", to_string(c.protocol.shaping)},
                   {"dc_schedule", to_string(c.protocol.dc_schedule)}};
  j["heating"] = {{"rate_per_ms", c.heating.rate_at_reference},
                  {"reference_height_um", c.heating.reference_height}};
  j["sweep"] = {{"N_values", c.sweep.N_values}, {"T_ms", c.sweep.T_ms}};
  j["output"] = {{"directory", c.output.directory},
                 {"waveform_rate_hz", c.output.waveform_rate_hz},
                 {"trajectory_stride", c.output.trajectory_stride}};
  return j;
}

TrapLayout Config::layout() const {
  if (electrodes) return TrapLayout(*electrodes);
  return build_paper_trap(layout_params.value_or(LayoutParams{}));
}

PhysicalConstants Config::constants() const {
  return PhysicalConstants::from_species(ion_mass_amu, ion_charge_e);
}

TransportScenario Config::scenario(ForceMode mode) const {
  TransportScenario s;
  s.layout = std::make_shared<const TrapLayout>(layout());
  s.drive = drive;
  s.consts = constants();
  s.target.final_vce = protocol.V_ce_final;
  s.kind = protocol.kind;
  s.protocol_options.shaping = protocol.shaping;
  s.protocol_options.dc_schedule = protocol.dc_schedule;
  const auto pos = drive.dc_voltages.find(std::string(nodes::dc_positive));
  if (pos != drive.dc_voltages.end()) s.protocol_options.compensation.v_positive = pos->second;
  s.mode = mode;
  return s;
}

SweepSpec Config::sweep_spec(ForceMode mode, int threads) const {
  SweepSpec spec;
  spec.N_values = sweep.N_values;
  for (double t : sweep.T_ms) spec.T_grid.push_back(t * units::millisecond);
  spec.scenario = scenario(mode);
  spec.model = heating;
  spec.threads = threads;
  spec.provenance = provenance_of(*this);
  return spec;
}

std::string_view tool_version() { return VSHUTTLE_VERSION; }

std::string config_hash(const Config& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Provenance provenance_of(const Config& c) {
  return {config_hash(c), std::string(tool_version())};
}

std::string provenance_header(const Config& c) {
  return "# config_hash=" + config_hash(c) + " version=" + std::string(tool_version());
}

}  // namespace vshuttle
