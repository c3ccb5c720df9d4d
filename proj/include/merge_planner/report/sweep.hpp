#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "merge_planner/csv.hpp"
#include "merge_planner/pareto_dp.hpp"
#include "merge_planner/parallel.hpp"
#include "merge_planner/report/config.hpp"

namespace merge_planner::report {

struct StrategyObjectives {
  double vanilla;
  std::optional<double> progressive;  // empty when T is not a power of two
  double boot;
  double consistency;
};

struct SweepRecord {
  int T;
  double s;
  double lambda;
  StrategyObjectives objective;
  double dp;
};

/// lambda_min..lambda_max in `points` log-spaced values; endpoints are exact.
inline std::vector<double> log_grid(double lo, double hi, int points) {
  if (points < 1 || !(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("invalid log grid");
  if (points == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(points));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < points; ++i) out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

inline StrategyObjectives canonical_objectives(const NoiseSchedule& sched, const DiagGaussian& data,
                                               const ShrinkageProfile& shrink, const DiagOperator& surrogate) {
  const int T = sched.steps();
  auto obj = [&](const MergePlan& p) { return w2_objective(evaluate_plan(p, sched, data, shrink), surrogate); };
  StrategyObjectives out{obj(plan_vanilla(T)), std::nullopt, obj(plan_sequential_boot(T)),
                         obj(plan_sequential_consistency(T))};
  if (is_power_of_two(T)) out.progressive = obj(plan_progressive(T));
  return out;
}

inline SweepRecord sweep_point(const NoiseSchedule& sched, double s, double lambda) {
  const DiagGaussian data({lambda});
  const auto shrink = shrinkage(sched, data, s);
  const auto surrogate = surrogate_target(sched, data);
  DpOptions opts;
  opts.keep_plans = false;
  const auto dp = pareto_dp(sched, data, shrink, surrogate, opts);
  return {sched.steps(), s, lambda, canonical_objectives(sched, data, shrink, surrogate), dp.objective};
}

/// Evaluates every (T, s, lambda) grid point; rows are ordered by (T, s, lambda) regardless of scheduling.
inline std::vector<SweepRecord> run_sweep(const ExperimentConfig& c) {
  std::vector<int> Ts = c.T_grid.empty() ? std::vector<int>{c.T} : c.T_grid;
  if (c.schedule_kind == "file") Ts = {make_schedule(c).steps()};
  const std::vector<double> ss = c.s_grid.empty() ? std::vector<double>{c.s_train} : c.s_grid;
  const auto lambdas = log_grid(c.lambda_min, c.lambda_max, c.lambda_points);

  std::vector<NoiseSchedule> schedules;
  for (int T : Ts) schedules.push_back(make_schedule(c, T));
  std::vector<std::tuple<std::size_t, double, double>> grid;
  for (std::size_t ti = 0; ti < Ts.size(); ++ti) {
    for (double s : ss) {
      for (double l : lambdas) grid.emplace_back(ti, s, l);
    }
  }
  auto rows = parallel_map<std::optional<SweepRecord>>(grid.size(), c.workers(), [&](std::size_t i) {
    const auto& [ti, s, l] = grid[i];
    return std::optional<SweepRecord>(sweep_point(schedules[ti], s, l));
  });
  std::vector<SweepRecord> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(*r);
  std::stable_sort(out.begin(), out.end(), [](const SweepRecord& a, const SweepRecord& b) {
    return std::tie(a.T, a.s, a.lambda) < std::tie(b.T, b.s, b.lambda);
  });
  return out;
}

inline const char* kSweepHeader =
    "T,s,lambda,vanilla,progressive,boot,consistency,dp,gap_vanilla,gap_progressive,gap_boot,gap_consistency";

inline std::string sweep_to_csv(const std::vector<SweepRecord>& rows) {
  std::ostringstream out;
  out << kSweepHeader << '\n';
  using csv::format_double;
  for (const auto& r : rows) {
    const auto& o = r.objective;
    const std::string prog = o.progressive ? format_double(*o.progressive) : "null";
    const std::string prog_gap = o.progressive ? format_double(*o.progressive - r.dp) : "null";
    out << r.T << ',' << format_double(r.s) << ',' << format_double(r.lambda) << ',' << format_double(o.vanilla) << ','
        << prog << ',' << format_double(o.boot) << ',' << format_double(o.consistency) << ',' << format_double(r.dp) << ','
        << format_double(o.vanilla - r.dp) << ',' << prog_gap << ',' << format_double(o.boot - r.dp) << ','
        << format_double(o.consistency - r.dp) << '\n';
  }
  return out.str();
}

}  // namespace merge_planner::report
