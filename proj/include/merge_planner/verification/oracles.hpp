#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "merge_planner/linear_op.hpp"
#include "merge_planner/plan.hpp"

namespace merge_planner::verification {

/// Classical 4th-order Runge-Kutta for da/ds = -2 rate (a - target), sampled on s_grid.
inline std::vector<double> rk4_gradient_flow(double target, double init, double rate, std::span<const double> s_grid,
                                             double max_step = 1e-3) {
  if (!(max_step > 0.0)) throw std::invalid_argument("RK4 step must be positive");
  auto f = [&](double a) { return -2.0 * rate * (a - target); };
  std::vector<double> out;
  out.reserve(s_grid.size());
  double s = 0.0, a = init;
  for (double target_s : s_grid) {
    if (target_s < s) throw std::invalid_argument("time grid must be increasing");
    while (s < target_s) {
      const double h = std::min(max_step, target_s - s);
      const double k1 = f(a);
      const double k2 = f(a + 0.5 * h * k1);
      const double k3 = f(a + 0.5 * h * k2);
      const double k4 = f(a + h * k3);
      a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      s = (target_s - s <= max_step) ? target_s : s + h;
    }
    out.push_back(a);
  }
  return out;
}

/// Counts plan shapes by walking the enumeration.
inline std::uint64_t count_plans_by_enumeration(int T) {
  std::uint64_t n = 0;
  enumerate_plans(T, [&](const MergePlan&) { ++n; });
  return n;
}

struct ThreeStepOutcomes {
  double vanilla;
  double boot;
  double consistency;
};

/**
 * Scalar merges of three consecutive operators A1, A2, A3 (steps 1..3) with
 * gamma_end applied to merges ending at step 3 and gamma_mid to those ending
 * at step 2, evaluated through the library's merge rules.
 */
inline ThreeStepOutcomes three_step_outcomes(double a1, double a2, double a3, double gamma_end, double gamma_mid) {
  const auto shrink = ShrinkageProfile::from_values(3, 1, {1.0, gamma_mid, gamma_end});
  const DiagOperator s1({a1}, {1, 1}), s2({a2}, {2, 2}), s3({a3}, {3, 3});
  const double vanilla = direct_merge(std::vector<DiagOperator>{s1, s2, s3}, shrink)[0];
  const double boot = merge(s1, merge(s2, s3, shrink), shrink)[0];
  const double consistency = merge(merge(s1, s2, shrink), s3, shrink)[0];
  return {vanilla, boot, consistency};
}

/// The same three outcomes written out as closed-form products.
inline ThreeStepOutcomes three_step_closed_form(double a1, double a2, double a3, double g, double gp) {
  return {(1.0 - g) * a1 * a2 * a3 + g * a3, ((1.0 - g) * a2 * a3 + g * a3) * ((1.0 - g) * a1 + g),
          a3 * ((1.0 - g) * ((1.0 - gp) * a1 * a2 + gp * a2) + g)};
}

}  // namespace merge_planner::verification
