// vshuttle: vertical ion shuttling above a multi-rail surface trap.
//
//   vshuttle analyze  --config c.json [--vce V]
//   vshuttle curve    --config c.json [--vce-max V] [--samples n]
//   vshuttle waveform --config c.json [--N n] [--T-ms t]
//   vshuttle simulate --config c.json [--N n] [--T-ms t] [--mode pseudopotential|full-rf]
//   vshuttle sweep    --config c.json [--threads n] [--mode ...]
//
// Results go to --out (default: output.directory of the config). Exit status
// is 0 on success, 1 on physics errors, 2 on configuration errors.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vshuttle/config.hpp"
#include "vshuttle/dynamics.hpp"
#include "vshuttle/errors.hpp"
#include "vshuttle/heating.hpp"
#include "vshuttle/sweep.hpp"
#include "vshuttle/trap_analysis.hpp"
#include "vshuttle/waveforms.hpp"

namespace fs = std::filesystem;
using namespace vshuttle;
using ojson = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string mode = "pseudopotential";
  int threads = 1;
  std::optional<double> vce;
  std::optional<double> N;
  std::optional<double> T_ms;
  double vce_max = 100;
  int samples = 21;
};

struct Run {
  Config config;
  fs::path out;
};

Run prepare(const Options& o) {
  Run r{load_config(o.config_path), {}};
  r.out = o.out_dir.empty() ? fs::path(r.config.output.directory) : fs::path(o.out_dir);
  fs::create_directories(r.out);
  std::ofstream resolved(r.out / "config.resolved.json");
  ojson doc = to_json(r.config);
  doc["provenance"] = {{"config_hash", config_hash(r.config)}, {"version", tool_version()}};
  resolved << doc.dump(2) << '\n';
  return r;
}

std::ofstream open_csv(const Run& r, const std::string& name) {
  std::ofstream os(r.out / name);
  if (!os) throw Error(ErrorCode::invalid_params, "cannot write " + (r.out / name).string());
  os << provenance_header(r.config) << '\n';
  return os;
}

void write_json(const Run& r, const std::string& name, ojson doc) {
  doc["provenance"] = {{"config_hash", config_hash(r.config)}, {"version", tool_version()}};
  std::ofstream os(r.out / name);
  os << doc.dump(2) << '\n';
}

ojson modes_json(const SecularModes& m) {
  return {{"lateral_MHz", units::angular_to_mhz(m.omega_lateral)},
          {"vertical_MHz", units::angular_to_mhz(m.omega_vertical)},
          {"axial_MHz", units::angular_to_mhz(m.omega_axial)}};
}

int cmd_analyze(const Options& o) {
  const Run r = prepare(o);
  DriveState drive = r.config.drive;
  if (o.vce) drive.v_ce = *o.vce;
  drive.validate();
  const TrapLayout layout = r.config.layout();
  const TrapPoint tp = analyze_trap(layout, drive, r.config.constants(), FieldPoint{0, 120, 0});
  ojson doc;
  doc["V_ce_V"] = drive.v_ce;
  doc["position_um"] = {tp.position.x, tp.position.y, tp.position.z};
  doc["ion_height_um"] = tp.ion_height_um;
  doc["secular"] = modes_json(tp.modes);
  doc["trap_depth_eV"] = tp.trap_depth_ev;
  doc["mathieu"] = {{"q", tp.mathieu.q}, {"a", tp.mathieu.a}, {"stable", tp.mathieu.stable()}};
  write_json(r, "analyze.json", doc);
  std::cout << std::fixed << std::setprecision(3) << "V_ce " << drive.v_ce << " V: height "
            << tp.ion_height_um << " um, radial " << units::angular_to_mhz(tp.modes.omega_radial())
            << " MHz, axial " << units::angular_to_mhz(tp.modes.omega_axial) << " MHz, depth "
            << tp.trap_depth_ev << " eV\n";
  return 0;
}

int cmd_curve(const Options& o) {
  const Run r = prepare(o);
  if (o.samples < 2) throw Error(ErrorCode::validation_error, "--samples must be >= 2");
  std::vector<double> vs;
  for (int i = 0; i < o.samples; ++i) vs.push_back(o.vce_max * i / (o.samples - 1));
  const auto curve = height_vs_vce(r.config.layout(), r.config.drive, r.config.constants(), vs,
                                   FieldPoint{0, 120, 0});
  auto os = open_csv(r, "curve.csv");
  write_curve_csv(os, curve);
  std::cout << "wrote " << (r.out / "curve.csv").string() << " (" << curve.size() << " rows)\n";
  return 0;
}

ShuttleProtocol protocol_for(const Run& r, const Options& o, ForceMode mode) {
  const TransportScenario s = r.config.scenario(mode);
  const double N = o.N.value_or(r.config.protocol.N);
  const double T = o.T_ms.value_or(r.config.protocol.T_ms) * units::millisecond;
  return make_protocol(s, T, N);
}

int cmd_waveform(const Options& o) {
  const Run r = prepare(o);
  const ShuttleProtocol p = protocol_for(r, o, ForceMode::pseudopotential);
  auto os = open_csv(r, "waveform.csv");
  write_waveform_csv(os, p, r.config.output.waveform_rate_hz);
  std::cout << std::fixed << std::setprecision(3) << "height " << p.start_height_um << " -> "
            << p.end_height_um << " um over " << p.T_total / units::millisecond << " ms; wrote "
            << (r.out / "waveform.csv").string() << '\n';
  return 0;
}

int cmd_simulate(const Options& o) {
  const Run r = prepare(o);
  const ForceMode mode = force_mode_from_string(o.mode);
  const ShuttleProtocol p = protocol_for(r, o, mode);
  const TrajectoryRecord rec = integrate_trajectory(p, mode);
  const QuantaResult q = motional_quanta(rec);
  const HeatingBudget b = budget_from_record(rec, r.config.heating);
  {
    auto os = open_csv(r, "trajectory.csv");
    write_trajectory_csv(os, rec, r.config.output.trajectory_stride);
  }
  ojson doc;
  doc["mode"] = to_string(mode);
  doc["N"] = p.N;
  doc["T_ms"] = p.T_total / units::millisecond;
  doc["start_height_um"] = p.start_height_um;
  doc["end_height_um"] = p.end_height_um;
  doc["omega_used_MHz"] = units::angular_to_mhz(q.omega_used);
  doc["n_shuttle"] = q.n_shuttle;
  doc["n_residual"] = q.n_residual;
  doc["n_anomalous"] = b.n_anomalous;
  doc["n_total"] = b.n_total;
  doc["cycles"] = b.cycles;
  doc["dt_s"] = rec.dt;
  write_json(r, "simulate.json", doc);
  std::cout << std::fixed << std::setprecision(3) << "N " << p.N << ", T "
            << p.T_total / units::millisecond << " ms: n_shuttle " << q.n_shuttle
            << ", n_anomalous " << b.n_anomalous << ", n_total " << b.n_total << '\n';
  return 0;
}

int cmd_sweep(const Options& o) {
  const Run r = prepare(o);
  const ForceMode mode = force_mode_from_string(o.mode);
  const SweepResult res = run_sweep(r.config.sweep_spec(mode, o.threads));
  {
    auto os = open_csv(r, "sweep.csv");
    write_sweep_csv(os, res);
  }
  {
    std::ofstream os(r.out / "sweep_summary.json");
    write_sweep_summary(os, res);
  }
  const Optimum opt = optimal_n(res);
  std::cout << std::fixed << std::setprecision(3) << "best N " << opt.best_N << ": n_total "
            << opt.n_total_star << " at T " << opt.T_star / units::millisecond << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical ion shuttling simulator"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Configuration JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "Output directory");
  };
  auto* analyze = app.add_subcommand("analyze", "Trap point, frequencies, depth and Mathieu parameters");
  common(analyze);
  analyze->add_option("--vce", o.vce, "Central-electrode RF amplitude (V)");

  auto* curve = app.add_subcommand("curve", "Ion height and frequencies versus V_ce");
  common(curve);
  curve->add_option("--vce-max", o.vce_max, "Largest V_ce (V)");
  curve->add_option("--samples", o.samples, "Number of V_ce samples");

  auto* waveform = app.add_subcommand("waveform", "Export protocol voltages");
  common(waveform);
  waveform->add_option("--N", o.N, "tanh smoothness");
  waveform->add_option("--T-ms", o.T_ms, "Transport duration (ms)");

  auto* simulate = app.add_subcommand("simulate", "Integrate one transport and report quanta");
  common(simulate);
  simulate->add_option("--N", o.N, "tanh smoothness");
  simulate->add_option("--T-ms", o.T_ms, "Transport duration (ms)");
  simulate->add_option("--mode", o.mode, "Force law")->check(CLI::IsMember({"pseudopotential", "full-rf", "full_rf"}));

  auto* sweep = app.add_subcommand("sweep", "N x T heating budget table and optimum");
  common(sweep);
  sweep->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--mode", o.mode, "Force law")->check(CLI::IsMember({"pseudopotential", "full-rf", "full_rf"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(o);
    if (curve->parsed()) return cmd_curve(o);
    if (waveform->parsed()) return cmd_waveform(o);
    if (simulate->parsed()) return cmd_simulate(o);
    if (sweep->parsed()) return cmd_sweep(o);
  } catch (const Error& e) {
    std::cerr << "vshuttle: " << e.what() << '\n';
    return e.is_config_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "vshuttle: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
