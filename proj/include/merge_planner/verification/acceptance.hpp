#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "merge_planner/gmm/audit.hpp"
#include "merge_planner/pareto_dp.hpp"
#include "merge_planner/report/experiments.hpp"
#include "merge_planner/report/svg.hpp"
#include "merge_planner/report/sweep.hpp"
#include "merge_planner/verification/oracles.hpp"

namespace merge_planner::verification {

struct CriterionResult {
  int id;
  std::string name;
  std::string measured;
  std::string tolerance;
  bool pass;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240601;
  unsigned workers = 0;  // 0 = default_workers()
  std::size_t gmm_samples = 100000;
  unsigned resolved_workers() const { return workers == 0 ? default_workers() : workers; }
};

namespace detail {

inline std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

inline std::string fixed(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

inline double gap_of(const NoiseSchedule& sched, double lambda, double s, const MergePlan& plan) {
  const DiagGaussian data({lambda});
  const auto shrink = shrinkage(sched, data, s);
  const auto target = surrogate_target(sched, data);
  const double obj = w2_objective(evaluate_plan(plan, sched, data, shrink), target);
  DpOptions opts;
  opts.keep_plans = false;
  return obj - pareto_dp(sched, data, shrink, target, opts).objective;
}

}  // namespace detail

inline CriterionResult criterion_dp_optimality(const AcceptanceOptions& o) {
  std::mt19937_64 rng(gmm::stream_seed(o.seed, 101));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int cases = 0;
  for (int T = 2; T <= 6; ++T) {
    const auto sched = make_cosine_schedule(T);
    for (std::size_t d = 1; d <= 3; ++d) {
      for (int r = 0; r < 20; ++r) {
        std::vector<double> lambda(d);
        for (auto& l : lambda) l = 2.0 * (1.0 - u(rng));
        const DiagGaussian data(lambda);
        const auto target = surrogate_target(sched, data);
        for (double s : {1.6, 3.2, 6.4}) {
          const auto shrink = shrinkage(sched, data, s);
          const double dp = pareto_dp(sched, data, shrink, target).objective;
          const double bf = brute_force_optimum(sched, data, shrink, target).objective;
          worst = std::max(worst, std::abs(dp - bf));
          ++cases;
        }
      }
    }
  }
  return {1, "dp-optimality", "max |dp - brute force| = " + detail::sci(worst) + " over " + std::to_string(cases) + " cases",
          "<= 1e-12", worst <= 1e-12};
}

inline CriterionResult criterion_low_variance(const AcceptanceOptions&) {
  const auto sched = make_cosine_schedule(32);
  double worst = 0.0;
  for (double l : {0.2, 0.5, 1.0}) worst = std::max(worst, detail::gap_of(sched, l, 6.4, plan_sequential_boot(32)));
  return {2, "boot-optimal-low-variance", "max boot gap (lambda 0.2, 0.5, 1) = " + detail::sci(worst), "<= 1e-12",
          worst <= 1e-12};
}

inline CriterionResult criterion_high_variance(const AcceptanceOptions&) {
  const auto sched = make_cosine_schedule(32);
  const double gap = detail::gap_of(sched, 5.0, 6.4, plan_vanilla(32));
  const double thr = amplification_threshold(sched);
  return {3, "vanilla-optimal-high-variance",
          "vanilla gap (lambda 5) = " + detail::sci(gap) + "; max_t lambda0 = " + detail::fixed(thr) +
              (5.0 > thr ? " (lambda exceeds it)" : " (lambda does not exceed it)"),
          "<= 1e-12", gap <= 1e-12};
}

inline CriterionResult criterion_contraction(const AcceptanceOptions&) {
  double min_slack = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (int T : {32, 64}) {
    const auto sched = make_cosine_schedule(T);
    const auto cert = contraction_certificate(sched, DiagGaussian({0.2, 1.0, 2.0, 5.0}));
    for (const auto& e : cert) {
      min_slack = std::min(min_slack, e.slack);
      ok = ok && e.composite < e.bound && e.slack > 0.0;
    }
  }
  return {4, "teacher-contraction", "min slack sqrt(lambda) - c = " + detail::sci(min_slack), "> 0 strictly", ok};
}

inline CriterionResult criterion_gradient_flow(const AcceptanceOptions& o) {
  std::mt19937_64 rng(gmm::stream_seed(o.seed, 105));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double target = -2.0 + 4.0 * u(rng), init = -2.0 + 4.0 * u(rng);
    const double rate = 0.05 + 2.95 * u(rng);
    std::vector<double> grid(8);
    double s = 0.0;
    for (auto& g : grid) g = (s += 0.1 + 1.5 * u(rng));
    const auto exact = gradient_flow_trajectory(target, init, rate, grid);
    const auto numeric = rk4_gradient_flow(target, init, rate, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) worst = std::max(worst, std::abs(exact[j] - numeric[j]));
  }
  return {5, "gradient-flow-oracle", "max |closed form - RK4| = " + detail::sci(worst), "<= 1e-8", worst <= 1e-8};
}

inline CriterionResult criterion_three_step(const AcceptanceOptions& o) {
  std::mt19937_64 rng(gmm::stream_seed(o.seed, 106));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  double oracle = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double g = u(rng), gp = u(rng);
    const double c1 = u(rng), c2 = u(rng), c3 = u(rng);
    const auto lo = three_step_outcomes(c1, c2, c3, g, gp);
    if (!(lo.boot <= std::min(lo.vanilla, lo.consistency))) ++violations;
    const auto hi_args = std::array<double, 3>{1.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng)};
    const auto hi = three_step_outcomes(hi_args[0], hi_args[1], hi_args[2], g, gp);
    if (!(hi.vanilla >= std::max(hi.boot, hi.consistency))) ++violations;
    for (const auto& [got, args] : {std::pair{lo, std::array<double, 3>{c1, c2, c3}}, std::pair{hi, hi_args}}) {
      const auto cf = three_step_closed_form(args[0], args[1], args[2], g, gp);
      const double scale = std::max({1.0, std::abs(cf.vanilla), std::abs(cf.boot), std::abs(cf.consistency)});
      oracle = std::max({oracle, std::abs(got.vanilla - cf.vanilla) / scale, std::abs(got.boot - cf.boot) / scale,
                         std::abs(got.consistency - cf.consistency) / scale});
    }
  }
  const bool pass = violations == 0 && oracle <= 1e-14;
  return {6, "three-step-orderings",
          std::to_string(violations) + " ordering violations in 400 draws; max rel. deviation from closed form = " +
              detail::sci(oracle),
          "0 violations (exact); closed form <= 1e-14", pass};
}

inline CriterionResult criterion_expansion(const AcceptanceOptions& o) {
  using namespace gmm;
  const auto mix = make_circle_mixture(8, 5.0, 0.3);
  const auto sched = make_cosine_schedule(2);
  const auto ops = teacher_chain(mix, sched, 2, 1);
  const auto ex = compose_expand(ops);
  const unsigned w = o.resolved_workers();
  const auto z_gate = sample_marginal(mix, sched, 2, 1000, stream_seed(o.seed, 107), w);
  const auto z_dev = sample_marginal(mix, sched, 2, 500, stream_seed(o.seed, 108), w);
  double gate = 0.0, dev = 0.0;
  for (Eigen::Index i = 0; i < z_gate.cols(); ++i) {
    const VectorXd z = z_gate.col(i);
    gate = std::max(gate, std::abs(ex.gating().weights(z).sum() - 1.0));
  }
  for (Eigen::Index i = 0; i < z_dev.cols(); ++i) {
    const VectorXd z = z_dev.col(i);
    dev = std::max(dev, (ex.apply(z) - apply_sequence(ops, z)).lpNorm<Eigen::Infinity>());
  }
  const bool pass = ex.size() == 64 && gate <= 1e-10 && dev <= 1e-8;
  return {7, "mixture-expansion",
          "components = " + std::to_string(ex.size()) + "; max |sum w - 1| = " + detail::sci(gate) +
              "; max expansion deviation = " + detail::sci(dev),
          "64; <= 1e-10; <= 1e-8", pass};
}

inline CriterionResult criterion_approximation(const AcceptanceOptions& o) {
  report::ExperimentConfig c;
  c.seed = o.seed;
  c.threads = o.resolved_workers();
  c.samples = o.gmm_samples;
  c.k_grid = {1, 2, 3};
  const auto rows = report::run_gmm_approx(c);
  bool pass = true;
  std::string measured;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.status != "ok") pass = false;
    if (r.k == 1 && !(r.bound <= 1e-10)) pass = false;
    if (r.k >= 2 && !(r.bound > 0.0)) pass = false;
    if (i > 0 && !(r.bound >= rows[i - 1].bound)) pass = false;
    if (!(r.mc.mean <= r.bound + 3.0 * r.mc.std_error)) pass = false;
    if (!measured.empty()) measured += "; ";
    measured += "k=" + std::to_string(r.k) + " bound " + detail::sci(r.bound) + " mc " + detail::sci(r.mc.mean) + " +- " +
                detail::sci(r.mc.std_error);
  }
  return {8, "approximation-bound", measured,
          "bound(1) <= 1e-10; bound(k>=2) > 0; nondecreasing; mc <= bound + 3 se", pass};
}

inline CriterionResult criterion_propagation(const AcceptanceOptions& o) {
  report::ExperimentConfig c;
  c.seed = o.seed;
  c.threads = o.resolved_workers();
  c.samples = o.gmm_samples;
  const auto r = report::run_gmm_propagate(c);
  const auto& a = r.audit;
  return {9, "error-propagation-audit",
          "lhs " + detail::sci(a.final_error.mean) + " vs rhs " + detail::sci(a.rhs) + " (merge " +
              detail::sci(a.merge_error.mean) + ", shift " + detail::sci(a.shift.mean) + ", stage1 " +
              detail::sci(a.stage1_error.mean) + ", L " + detail::fixed(a.lipschitz, 5) + ", se " +
              detail::sci(a.combined_stderr) + ")",
          "lhs <= rhs + 3 se", a.holds};
}

inline CriterionResult criterion_linear_reduction(const AcceptanceOptions& o) {
  using namespace gmm;
  const std::vector<double> lambda{2.5, 1.0, 0.3};
  const Eigen::Index d = 3;
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) cov(i, i) = lambda[static_cast<std::size_t>(i)];
  const GaussianMixture mix({1.0}, {VectorXd::Zero(d)}, {cov});
  const DiagGaussian data(lambda);
  const auto sched = make_cosine_schedule(32);
  double worst = 0.0;
  for (int t = 1; t <= 32; ++t) {
    const auto moe = single_step_moe(mix, sched, t);
    const auto lin = single_step_operator(sched, data, t);
    MatrixXd expected = MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) expected(i, i) = lin[static_cast<std::size_t>(i)];
    worst = std::max({worst, (moe.expert(0).A - expected).cwiseAbs().maxCoeff(), moe.expert(0).b.cwiseAbs().maxCoeff()});
  }
  const auto chain = teacher_chain(mix, sched, 32, 1);
  const auto full = composite_operator(sched, data, 1, 32);
  std::mt19937_64 rng(gmm::stream_seed(o.seed, 110));
  std::normal_distribution<double> nd;
  for (int r = 0; r < 20; ++r) {
    VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = nd(rng);
    const VectorXd y = apply_sequence(chain, z);
    for (Eigen::Index i = 0; i < d; ++i) worst = std::max(worst, std::abs(y(i) - full[static_cast<std::size_t>(i)] * z(i)));
  }
  return {10, "linear-regime-reduction", "max deviation = " + detail::sci(worst), "<= 1e-12", worst <= 1e-12};
}

inline CriterionResult criterion_determinism(const AcceptanceOptions& o) {
  report::ExperimentConfig c;
  c.seed = o.seed;
  c.threads = o.resolved_workers();
  const std::string a = report::sweep_to_csv(report::run_sweep(c));
  const std::string b = report::sweep_to_csv(report::run_sweep(c));
  const auto plan = report::run_plan(c).dp.plan;
  const std::string s1 = report::render_arc_diagram(*plan, 32);
  const std::string s2 = report::render_arc_diagram(*report::run_plan(c).dp.plan, 32);
  const bool pass = a == b && s1 == s2;
  return {11, "determinism",
          std::string("sweep CSV ") + (a == b ? "identical" : "differs") + " (" + std::to_string(a.size()) +
              " bytes); SVG " + (s1 == s2 ? "identical" : "differs") + " (" + std::to_string(s1.size()) + " bytes)",
          "byte-identical", pass};
}

using CriterionFn = std::function<CriterionResult(const AcceptanceOptions&)>;

inline std::vector<CriterionFn> acceptance_criteria() {
  return {criterion_dp_optimality, criterion_low_variance,  criterion_high_variance,     criterion_contraction,
          criterion_gradient_flow, criterion_three_step,    criterion_expansion,         criterion_approximation,
          criterion_propagation,   criterion_linear_reduction, criterion_determinism};
}

inline std::string format_result(const CriterionResult& r) {
  char t[32];
  std::snprintf(t, sizeof(t), "%.2fs", r.seconds);
  return std::string(r.pass ? "PASS" : "FAIL") + "  [" + std::to_string(r.id) + "] " + r.name + ": " + r.measured +
         " | tolerance " + r.tolerance + " | " + t;
}

/// Runs every criterion, printing one line each as it finishes. Exceptions count as failures.
inline std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& o, std::ostream* log = nullptr) {
  std::vector<CriterionResult> out;
  int id = 0;
  for (const auto& fn : acceptance_criteria()) {
    ++id;
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = fn(o);
    } catch (const std::exception& e) {
      r = {id, "criterion-" + std::to_string(id), std::string("error: ") + e.what(), "-", false};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) *log << format_result(r) << std::endl;
    out.push_back(std::move(r));
  }
  return out;
}

inline bool all_pass(const std::vector<CriterionResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.pass; });
}

}  // namespace merge_planner::verification
