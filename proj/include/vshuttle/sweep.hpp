#pragma once

#include <iosfwd>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vshuttle/heating.hpp"

namespace vshuttle {

struct Provenance {
  std::string config_hash;  // 16 hex digits
  std::string version;
};

struct SweepSpec {
  std::vector<double> N_values;
  std::vector<double> T_grid;  // s, ascending
  TransportScenario scenario;
  HeatingModel model;
  int threads = 1;
  Provenance provenance;

  void validate() const;
};

struct SweepCell {
  double N = 0;
  double T = 0;
  bool ok = false;
  HeatingBudget budget;
  std::string status = "ok";  // error code name when the cell failed
  std::string message;
};

struct SweepColumn {
  double N = 0;
  Crossover crossover;
  bool has_crossover_data = false;  // false when every cell of the column failed
  bool single_interior_minimum = false;
};

struct SweepResult {
  std::map<std::pair<double, double>, SweepCell> table;  // keyed by (N, T)
  std::vector<SweepColumn> columns;                      // one per N, ascending
  Provenance provenance;

  // Successful budgets of one column in ascending T.
  std::vector<HeatingBudget> column(double N) const;
};

/// Evaluates every (N, T) cell, in parallel when threads > 1. Failed cells
/// carry their error; throws all_cells_failed only when none succeeds.
SweepResult run_sweep(const SweepSpec& spec);

/// Evaluates one cell through `eval`; used by run_sweep and by tests that
/// substitute synthetic budgets.
using CellEvaluator = std::function<HeatingBudget(double N, double T)>;
SweepResult run_sweep(const SweepSpec& spec, const CellEvaluator& eval);

struct Optimum {
  double best_N = 0;
  double T_star = 0;  // s
  double n_total_star = 0;
};

/// Per-N minimum of n_total; smallest across N, ties to the smaller N.
Optimum optimal_n(const SweepResult& result);

/// Columns N,T_ms,cycles,n_shuttle,n_anomalous,n_total,status.
void write_sweep_csv(std::ostream& os, const SweepResult& result);
/// {best_N, T_star_ms, n_total_star, per_N: [...], provenance}.
void write_sweep_summary(std::ostream& os, const SweepResult& result);

}  // namespace vshuttle
