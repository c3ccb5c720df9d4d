#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "merge_planner/linear_op.hpp"
#include "merge_planner/plan.hpp"

namespace merge_planner {

/// rho_i = +1 (prefer larger entries) if lambda_i > 1, else -1.
class PreferenceVector {
 public:
  explicit PreferenceVector(const DiagGaussian& data) {
    rho_.reserve(data.dim());
    for (double l : data.lambdas()) rho_.push_back(l > 1.0 ? 1 : -1);
  }
  explicit PreferenceVector(std::vector<int> rho) : rho_(std::move(rho)) {
    for (int r : rho_) {
      if (r != 1 && r != -1) throw std::invalid_argument("preference entries must be +1 or -1");
    }
  }

  std::size_t dim() const { return rho_.size(); }
  int operator[](std::size_t i) const { return rho_[i]; }

 private:
  std::vector<int> rho_;
};

/// True iff rho_i B_i >= rho_i C_i everywhere and strictly somewhere. Exact comparisons.
inline bool dominates(const DiagOperator& b, const DiagOperator& c, const PreferenceVector& rho) {
  if (b.dim() != c.dim() || b.dim() != rho.dim()) throw std::invalid_argument("dominates: dimension mismatch");
  bool strict = false;
  for (std::size_t i = 0; i < b.dim(); ++i) {
    const double lhs = rho[i] * b[i];
    const double rhs = rho[i] * c[i];
    if (lhs < rhs) return false;
    if (lhs > rhs) strict = true;
  }
  return strict;
}

struct FrontierItem {
  DiagOperator op;
  PlanNodePtr plan;  // null when plans are not tracked
};

struct ParetoFrontier {
  StepInterval interval;
  std::vector<FrontierItem> items;
};

namespace detail {
inline bool plan_less(const PlanNodePtr& a, const PlanNodePtr& b) {
  if (!a || !b) return false;
  return serialize(a) < serialize(b);
}
}  // namespace detail

/**
 * Three-case insertion: drop a dominated candidate, evict incumbents the
 * candidate dominates, otherwise append. A candidate whose entries equal an
 * incumbent's bit for bit is not added; the incumbent keeps whichever plan
 * serializes smaller.
 */
inline void insert_and_prune(ParetoFrontier& frontier, FrontierItem candidate, const PreferenceVector& rho) {
  if (!(candidate.op.interval() == frontier.interval)) {
    throw std::invalid_argument("candidate interval " + to_string(candidate.op.interval()) + " != frontier interval " +
                                to_string(frontier.interval));
  }
  for (auto& item : frontier.items) {
    if (item.op.entries() == candidate.op.entries()) {
      if (detail::plan_less(candidate.plan, item.plan)) item.plan = std::move(candidate.plan);
      return;
    }
    if (dominates(item.op, candidate.op, rho)) return;
  }
  std::vector<FrontierItem> kept;
  kept.reserve(frontier.items.size() + 1);
  for (auto& item : frontier.items) {
    if (!dominates(candidate.op, item.op, rho)) kept.push_back(std::move(item));
  }
  kept.push_back(std::move(candidate));
  frontier.items = std::move(kept);
}

struct FrontierSize {
  int t1;
  int t2;
  std::size_t size;
};

struct DpOptions {
  bool keep_plans = true;
  std::size_t max_frontier = 0;  // 0 = unlimited; exceeding the cap throws
};

struct DpResult {
  DiagOperator best;
  double objective;
  std::optional<MergePlan> plan;
  std::vector<FrontierSize> frontier_sizes;  // ordered by (length, t1)
};

class FrontierCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Interval DP over Pareto frontiers. Cells are filled by increasing length,
 * then increasing t1. Each cell receives the one-shot merge of its raw steps
 * and every split merge of a left-frontier item with a right-frontier item.
 */
inline DpResult pareto_dp(const NoiseSchedule& sched, const DiagGaussian& data, const ShrinkageProfile& shrink,
                          const DiagOperator& surrogate, const DpOptions& opts = {}) {
  const int T = sched.steps();
  const std::size_t d = data.dim();
  if (shrink.steps() != T || shrink.dim() != d) throw std::invalid_argument("shrinkage profile shape mismatch");
  if (surrogate.dim() != d || !(surrogate.interval() == StepInterval{1, T})) {
    throw std::invalid_argument("surrogate must cover (1,T) with matching dimension");
  }
  const PreferenceVector rho(data);

  // cells[(t1-1)*T + (t2-1)]
  std::vector<ParetoFrontier> cells(static_cast<std::size_t>(T) * T);
  auto cell = [&](int t1, int t2) -> ParetoFrontier& { return cells[static_cast<std::size_t>(t1 - 1) * T + (t2 - 1)]; };

  std::vector<FrontierSize> sizes;
  sizes.reserve(static_cast<std::size_t>(T) * (T + 1) / 2);

  std::vector<double> gamma(d);
  std::vector<double> buf(d);
  for (int len = 1; len <= T; ++len) {
    for (int t1 = 1; t1 + len - 1 <= T; ++t1) {
      const int t2 = t1 + len - 1;
      ParetoFrontier& f = cell(t1, t2);
      f.interval = {t1, t2};
      if (len == 1) {
        f.items.push_back({single_step_operator(sched, data, t1), opts.keep_plans ? make_leaf(t1) : nullptr});
      } else {
        insert_and_prune(f, {direct_merge(sched, data, shrink, t1, t2), opts.keep_plans ? make_oneshot(t1, t2) : nullptr},
                         rho);
        for (std::size_t i = 0; i < d; ++i) gamma[i] = shrink.gamma(t2, i);
        for (int m = t1; m < t2; ++m) {
          const ParetoFrontier& left = cell(t1, m);
          const ParetoFrontier& right = cell(m + 1, t2);
          for (const auto& l : left.items) {
            for (const auto& r : right.items) {
              for (std::size_t i = 0; i < d; ++i) buf[i] = detail::merge_value(l.op[i], r.op[i], gamma[i]);
              insert_and_prune(f, {DiagOperator(buf, {t1, t2}), opts.keep_plans ? make_binary(l.plan, r.plan) : nullptr},
                               rho);
            }
          }
        }
      }
      if (opts.max_frontier != 0 && f.items.size() > opts.max_frontier) {
        throw FrontierCapExceeded("frontier for " + to_string(f.interval) + " reached " + std::to_string(f.items.size()) +
                                  " items, above the cap of " + std::to_string(opts.max_frontier));
      }
      sizes.push_back({t1, t2, f.items.size()});
    }
  }

  const ParetoFrontier& root = cell(1, T);
  const FrontierItem* best = nullptr;
  double best_obj = std::numeric_limits<double>::infinity();
  std::string best_text;
  for (const auto& item : root.items) {
    const double obj = w2_objective(item.op, surrogate);
    if (best == nullptr || obj < best_obj) {
      best = &item;
      best_obj = obj;
      if (item.plan) best_text = serialize(item.plan);
    } else if (obj == best_obj && item.plan) {
      std::string text = serialize(item.plan);
      if (text < best_text) {
        best = &item;
        best_text = std::move(text);
      }
    }
  }

  DpResult out{best->op, best_obj, std::nullopt, std::move(sizes)};
  if (best->plan) out.plan = MergePlan(best->plan);
  return out;
}

struct BruteForceResult {
  DiagOperator best;
  double objective;
  MergePlan plan;
};

inline constexpr int kMaxBruteForceSteps = 8;

/// Evaluates every plan shape; ties go to the smallest serialized plan.
inline BruteForceResult brute_force_optimum(const NoiseSchedule& sched, const DiagGaussian& data,
                                            const ShrinkageProfile& shrink, const DiagOperator& surrogate) {
  const int T = sched.steps();
  if (T > kMaxBruteForceSteps) throw std::invalid_argument("brute force limited to T <= " + std::to_string(kMaxBruteForceSteps));
  std::optional<BruteForceResult> best;
  std::string best_text;
  enumerate_plans(T, [&](const MergePlan& plan) {
    auto op = evaluate_plan(plan, sched, data, shrink);
    const double obj = w2_objective(op, surrogate);
    std::string text = plan.to_text();
    if (!best || obj < best->objective || (obj == best->objective && text < best_text)) {
      best.emplace(BruteForceResult{std::move(op), obj, plan});
      best_text = std::move(text);
    }
  });
  return *best;
}

inline std::string frontier_sizes_to_csv(const std::vector<FrontierSize>& sizes) {
  std::ostringstream out;
  out << "t1,t2,frontier_size\n";
  for (const auto& s : sizes) out << s.t1 << ',' << s.t2 << ',' << s.size << '\n';
  return out.str();
}

}  // namespace merge_planner
