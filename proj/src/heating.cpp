#include "vshuttle/heating.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "vshuttle/errors.hpp"

namespace vshuttle {

double HeatingModel::k() const {
  return rate_at_reference * std::pow(reference_height, exponent);
}

void HeatingModel::validate() const {
  if (!(rate_at_reference > 0))
    throw Error(ErrorCode::validation_error, "heating rate must be > 0");
  if (!(reference_height > 0))
    throw Error(ErrorCode::validation_error, "heating reference height must be > 0");
  if (!(exponent > 0)) throw Error(ErrorCode::validation_error, "heating exponent must be > 0");
}

namespace {

struct Simpson {
  const std::function<double(double)>& f;
  double tol;
  int max_depth;

  static double rule(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  }

  double refine(double a, double b, double fa, double fm, double fb, double whole, double eps,
                int depth) const {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = rule(a, m, fa, flm, fm), right = rule(m, b, fm, frm, fb);
    const double diff = left + right - whole;
    if (depth >= max_depth || std::abs(diff) <= 15.0 * eps)
      return left + right + diff / 15.0;
    return refine(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1) +
           refine(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1);
  }
};

}  // namespace

double anomalous_quanta(const std::function<double(double)>& height_um_of_t, double T,
                        const HeatingModel& model, const QuadratureOptions& opts) {
  model.validate();
  if (!(T >= 0)) throw Error(ErrorCode::invalid_params, "duration must be >= 0");
  if (T == 0) return 0.0;
  const double k = model.k();
  const std::function<double(double)> rate = [&](double t) {
    const double h = height_um_of_t(t);
    if (!(h > 0))
      throw Error(ErrorCode::domain_error,
                  "height " + std::to_string(h) + " um at t = " + std::to_string(t) + " s");
    return k / std::pow(h, model.exponent);
  };
  // Rate is per ms; integrate in ms.
  const double T_ms = T / units::millisecond;
  const std::function<double(double)> f = [&](double t_ms) { return rate(t_ms * units::millisecond); };

  // Coarse pass fixes the absolute tolerance from the integral's scale.
  const int pieces = 16;
  double coarse = 0;
  std::vector<double> fx(2 * pieces + 1);
  for (int i = 0; i <= 2 * pieces; ++i) fx[i] = f(T_ms * i / (2 * pieces));
  for (int i = 0; i < pieces; ++i)
    coarse += Simpson::rule(T_ms * i / pieces, T_ms * (i + 1) / pieces, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2]);
  const double eps = opts.relative_tolerance * std::abs(coarse) / pieces;

  const Simpson s{f, eps, opts.max_depth};
  double total = 0;
  for (int i = 0; i < pieces; ++i) {
    const double a = T_ms * i / pieces, b = T_ms * (i + 1) / pieces;
    total += s.refine(a, b, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2],
                      Simpson::rule(a, b, fx[2 * i], fx[2 * i + 1], fx[2 * i + 2]), eps, 0);
  }
  return total;
}

std::function<double(double)> simulated_height(const TrajectoryRecord& record) {
  const auto& s = record.samples;
  if (s.empty()) throw Error(ErrorCode::missing_window, "empty trajectory");
  const double t0 = record.protocol.t0;
  std::vector<double> t, h;
  t.reserve(s.size());
  h.reserve(s.size());
  for (const auto& smp : s) {
    t.push_back(smp.t - t0);
    h.push_back(units::m_to_um(smp.r.y()));
  }
  return [t = std::move(t), h = std::move(h)](double x) {
    if (x <= t.front()) return h.front();
    if (x >= t.back()) return h.back();
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const auto i = static_cast<std::size_t>(it - t.begin());
    const double w = (x - t[i - 1]) / (t[i] - t[i - 1]);
    return (1 - w) * h[i - 1] + w * h[i];
  };
}

HeatingBudget budget_from_record(const TrajectoryRecord& record, const HeatingModel& model) {
  HeatingBudget b;
  b.T = record.protocol.T_total;
  const QuantaResult q = motional_quanta(record);
  b.omega = q.omega_used;
  b.cycles = b.T * b.omega / units::two_pi;
  b.n_shuttle = q.n_shuttle;
  b.n_anomalous = anomalous_quanta(simulated_height(record), b.T, model);
  b.n_total = b.n_shuttle + b.n_anomalous;
  return b;
}

std::vector<HeatingBudget> total_budget(const TransportScenario& s, double N,
                                        const std::vector<double>& T_grid,
                                        const HeatingModel& model) {
  if (!std::is_sorted(T_grid.begin(), T_grid.end()))
    throw Error(ErrorCode::invalid_params, "T grid must be ascending");
  std::vector<HeatingBudget> out;
  out.reserve(T_grid.size());
  for (double T : T_grid) {
    const TrajectoryRecord rec =
        integrate_trajectory(make_protocol(s, T, N), s.mode, std::nullopt, s.integration);
    out.push_back(budget_from_record(rec, model));
  }
  return out;
}

Crossover crossover(const std::vector<HeatingBudget>& budgets) {
  if (budgets.empty()) throw Error(ErrorCode::invalid_params, "no budgets");
  for (std::size_t i = 1; i < budgets.size(); ++i)
    if (!(budgets[i].T > budgets[i - 1].T))
      throw Error(ErrorCode::invalid_params, "budgets must be in ascending T");
  Crossover c;
  const auto best = std::min_element(budgets.begin(), budgets.end(),
                                     [](const auto& a, const auto& b) { return a.n_total < b.n_total; });
  c.T_min = best->T;
  c.n_total_min = best->n_total;

  auto diff = [](const HeatingBudget& b) { return b.n_shuttle - b.n_anomalous; };
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    const double d1 = diff(budgets[i]);
    if (d1 == 0) {
      c.T_star = budgets[i].T;
      c.n_at_crossover = budgets[i].n_shuttle;
      c.cycles_at_crossover = budgets[i].cycles;
      break;
    }
    if (i + 1 == budgets.size()) break;
    const double d2 = diff(budgets[i + 1]);
    if ((d1 > 0) != (d2 > 0) && d2 != 0) {
      const auto& a = budgets[i];
      const auto& b = budgets[i + 1];
      const double w = d1 / (d1 - d2);
      c.T_star = a.T + w * (b.T - a.T);
      c.n_at_crossover = a.n_shuttle + w * (b.n_shuttle - a.n_shuttle);
      c.cycles_at_crossover = a.cycles + w * (b.cycles - a.cycles);
      break;
    }
  }
  return c;
}

bool has_single_interior_minimum(const std::vector<HeatingBudget>& budgets) {
  if (budgets.size() < 3) return false;
  int changes = 0;
  int prev = 0;
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    const double d = budgets[i].n_total - budgets[i - 1].n_total;
    const int sign = d > 0 ? 1 : d < 0 ? -1 : 0;
    if (sign == 0) continue;
    if (prev != 0 && sign != prev) {
      if (!(prev < 0 && sign > 0)) return false;
      ++changes;
    }
    if (prev == 0 && sign > 0) return false;  // rising from the start: minimum at the edge
    prev = sign;
  }
  return changes == 1;
}

void write_budget_csv(std::ostream& os, const std::vector<HeatingBudget>& budgets) {
  os << "T_ms,cycles,n_shuttle,n_anomalous,n_total\n" << std::setprecision(10);
  for (const auto& b : budgets)
    os << b.T / units::millisecond << ',' << b.cycles << ',' << b.n_shuttle << ','
       << b.n_anomalous << ',' << b.n_total << '\n';
}

}  // namespace vshuttle
