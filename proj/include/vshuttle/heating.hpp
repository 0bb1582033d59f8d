#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "vshuttle/dynamics.hpp"

namespace vshuttle {

/// Anomalous heating rate scaling as (reference / h)^exponent.
struct HeatingModel {
  double rate_at_reference = 3.1;  // quanta/ms
  double reference_height = 134.0;  // um
  double exponent = 4.0;

  // quanta * um^exponent / ms
  double k() const;
  void validate() const;
  bool operator==(const HeatingModel&) const = default;
};

struct QuadratureOptions {
  double relative_tolerance = 1e-6;
  int max_depth = 40;
};

/// Integral of k / h(t)^exponent over [0, T]; t and T in seconds, h in um.
/// Adaptive Simpson. Throws domain_error where h <= 0.
double anomalous_quanta(const std::function<double(double)>& height_um_of_t, double T,
                        const HeatingModel& model, const QuadratureOptions& opts = {});

/// Ion height along a simulated transport, relative to the transport start
/// (t in [0, T]); linear interpolation of the recorded samples.
std::function<double(double)> simulated_height(const TrajectoryRecord& record);

struct HeatingBudget {
  double T = 0;  // s
  double cycles = 0;
  double n_shuttle = 0;
  double n_anomalous = 0;
  double n_total = 0;
  double omega = 0;  // rad/s, transported-mode frequency used for cycles
};

/// Budget of one simulated transport.
HeatingBudget budget_from_record(const TrajectoryRecord& record, const HeatingModel& model);

std::vector<HeatingBudget> total_budget(const TransportScenario& s, double N,
                                        const std::vector<double>& T_grid,
                                        const HeatingModel& model);

struct Crossover {
  std::optional<double> T_star;       // s, where n_shuttle and n_anomalous intersect
  std::optional<double> n_at_crossover;
  std::optional<double> cycles_at_crossover;
  double T_min = 0;                   // s, argmin of n_total on the grid
  double n_total_min = 0;
};

/// Intersection by the first sign change of n_shuttle - n_anomalous plus
/// linear interpolation; the n_total argmin is always reported.
Crossover crossover(const std::vector<HeatingBudget>& budgets);

/// True when the discrete differences of n_total change sign exactly once,
/// from falling to rising (a single interior minimum).
bool has_single_interior_minimum(const std::vector<HeatingBudget>& budgets);

/// Columns T_ms,cycles,n_shuttle,n_anomalous,n_total.
void write_budget_csv(std::ostream& os, const std::vector<HeatingBudget>& budgets);

}  // namespace vshuttle
