#include "vshuttle/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vshuttle/errors.hpp"

namespace vshuttle {

void SweepSpec::validate() const {
  if (N_values.empty()) throw Error(ErrorCode::invalid_params, "sweep needs at least one N");
  if (T_grid.empty()) throw Error(ErrorCode::invalid_params, "sweep needs at least one T");
  for (std::size_t i = 1; i < T_grid.size(); ++i)
    if (!(T_grid[i] > T_grid[i - 1]))
      throw Error(ErrorCode::invalid_params, "sweep T grid must be strictly ascending");
  for (double T : T_grid)
    if (!(T > 0)) throw Error(ErrorCode::invalid_params, "sweep durations must be > 0");
  for (double N : N_values)
    if (!(N > 0)) throw Error(ErrorCode::invalid_params, "sweep N values must be > 0");
  if (threads < 1) throw Error(ErrorCode::invalid_params, "threads must be >= 1");
  model.validate();
}

std::vector<HeatingBudget> SweepResult::column(double N) const {
  std::vector<HeatingBudget> out;
  for (auto it = table.lower_bound({N, -INFINITY}); it != table.end() && it->first.first == N; ++it)
    if (it->second.ok) out.push_back(it->second.budget);
  return out;
}

SweepResult run_sweep(const SweepSpec& spec, const CellEvaluator& eval) {
  spec.validate();
  std::vector<double> Ns = spec.N_values;
  std::sort(Ns.begin(), Ns.end());
  Ns.erase(std::unique(Ns.begin(), Ns.end()), Ns.end());

  std::vector<SweepCell> cells;
  for (double N : Ns)
    for (double T : spec.T_grid) {
      SweepCell c;
      c.N = N;
      c.T = T;
      cells.push_back(c);
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& c = cells[i];
      try {
        c.budget = eval(c.N, c.T);
        c.ok = true;
      } catch (const Error& e) {
        c.status = std::string(to_string(e.code()));
        c.message = e.what();
      } catch (const std::exception& e) {
        c.status = "error";
        c.message = e.what();
      }
    }
  };
  const int n_threads = std::min<int>(spec.threads, static_cast<int>(cells.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  SweepResult r;
  r.provenance = spec.provenance;
  bool any_ok = false;
  for (auto& c : cells) {
    any_ok = any_ok || c.ok;
    r.table.emplace(std::make_pair(c.N, c.T), std::move(c));
  }
  if (!any_ok) {
    const auto& first = r.table.begin()->second;
    throw Error(ErrorCode::all_cells_failed, "every sweep cell failed; first: " + first.message);
  }
  for (double N : Ns) {
    SweepColumn col;
    col.N = N;
    const auto budgets = r.column(N);
    if (!budgets.empty()) {
      col.crossover = crossover(budgets);
      col.has_crossover_data = true;
      col.single_interior_minimum = has_single_interior_minimum(budgets);
    }
    r.columns.push_back(col);
  }
  return r;
}

SweepResult run_sweep(const SweepSpec& spec) {
  const TransportScenario& s = spec.scenario;
  if (!s.layout) throw Error(ErrorCode::invalid_params, "sweep scenario has no layout");
  return run_sweep(spec, [&](double N, double T) {
    const TrajectoryRecord rec =
        integrate_trajectory(make_protocol(s, T, N), s.mode, std::nullopt, s.integration);
    return budget_from_record(rec, spec.model);
  });
}

Optimum optimal_n(const SweepResult& result) {
  std::optional<Optimum> best;
  for (const auto& col : result.columns) {
    if (!col.has_crossover_data) continue;
    // Columns are ascending in N, so strict improvement keeps ties on the smaller N.
    if (!best || col.crossover.n_total_min < best->n_total_star)
      best = Optimum{col.N, col.crossover.T_min, col.crossover.n_total_min};
  }
  if (!best) throw Error(ErrorCode::all_cells_failed, "sweep has no successful column");
  return *best;
}

namespace {

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
  os << "N,T_ms,cycles,n_shuttle,n_anomalous,n_total,status\n";
  for (const auto& [key, c] : result.table) {
    os << number(c.N) << ',' << number(c.T / units::millisecond) << ',';
    if (c.ok)
      os << number(c.budget.cycles) << ',' << number(c.budget.n_shuttle) << ','
         << number(c.budget.n_anomalous) << ',' << number(c.budget.n_total);
    else
      os << ",,,";
    os << ',' << c.status << '\n';
  }
}

void write_sweep_summary(std::ostream& os, const SweepResult& result) {
  using json = nlohmann::ordered_json;
  json j;
  const Optimum opt = optimal_n(result);
  j["best_N"] = opt.best_N;
  j["T_star_ms"] = opt.T_star / units::millisecond;
  j["n_total_star"] = opt.n_total_star;
  json per_n = json::array();
  for (const auto& col : result.columns) {
    json c;
    c["N"] = col.N;
    if (col.has_crossover_data) {
      c["T_min_ms"] = col.crossover.T_min / units::millisecond;
      c["n_total_min"] = col.crossover.n_total_min;
      if (col.crossover.T_star) {
        c["T_cross_ms"] = *col.crossover.T_star / units::millisecond;
        c["n_cross"] = *col.crossover.n_at_crossover;
        c["cycles_cross"] = *col.crossover.cycles_at_crossover;
      } else {
        c["T_cross_ms"] = nullptr;
      }
      c["single_interior_minimum"] = col.single_interior_minimum;
    } else {
      c["status"] = "failed";
    }
    per_n.push_back(c);
  }
  j["per_N"] = per_n;
  j["provenance"] = {{"config_hash", result.provenance.config_hash},
                     {"version", result.provenance.version}};
  os << j.dump(2) << '\n';
}

}  // namespace vshuttle
