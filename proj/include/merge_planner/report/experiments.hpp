#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "merge_planner/csv.hpp"
#include "merge_planner/gmm/audit.hpp"
#include "merge_planner/gmm/cluster.hpp"
#include "merge_planner/gmm/mixture_io.hpp"
#include "merge_planner/pareto_dp.hpp"
#include "merge_planner/report/config.hpp"
#include "merge_planner/report/svg.hpp"
#include "merge_planner/report/sweep.hpp"

namespace merge_planner::report {

/// Parses "a b; c d" (rows split by ';', entries by ',' or whitespace) into a square matrix.
inline Eigen::MatrixXd parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::istringstream in(text);
  while (std::getline(in, row, ';')) {
    if (trim(row).empty()) continue;
    rows.push_back(detail::doubles("linear.covariance", row));
  }
  const auto n = rows.size();
  if (n == 0) throw std::invalid_argument("linear.covariance is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != n) throw std::invalid_argument("linear.covariance must be square");
    for (std::size_t c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

struct PlanReport {
  NoiseSchedule schedule;
  std::vector<double> lambda;              // eigenvalues, non-increasing
  std::optional<Eigen::MatrixXd> basis;    // set when a full covariance was given
  DpResult dp;
  DiagOperator surrogate;
  ShrinkageProfile shrink;
  StrategyObjectives strategies;
  double amplification_threshold;
};

inline PlanReport run_plan(const ExperimentConfig& c) {
  auto sched = make_schedule(c);
  std::vector<double> lambda = c.lambda;
  std::optional<Eigen::MatrixXd> basis;
  if (!c.covariance.empty()) {
    auto cb = diagonalize_covariance(parse_matrix(c.covariance));
    lambda = cb.lambda;
    basis = std::move(cb.basis);
  }
  const DiagGaussian data(lambda);
  auto shrink = shrinkage(sched, data, c.s_train);
  auto surrogate = surrogate_target(sched, data);
  auto dp = pareto_dp(sched, data, shrink, surrogate);
  auto strategies = canonical_objectives(sched, data, shrink, surrogate);
  const double thr = sched.steps() > 1 ? amplification_threshold(sched) : 0.0;
  return PlanReport{std::move(sched), data.lambdas(), std::move(basis), std::move(dp), std::move(surrogate),
                    std::move(shrink), strategies, thr};
}

inline std::string strategies_to_csv(const PlanReport& r) {
  std::ostringstream out;
  using csv::format_double;
  out << "strategy,objective,gap\n";
  const auto& o = r.strategies;
  const double dp = r.dp.objective;
  out << "vanilla," << format_double(o.vanilla) << ',' << format_double(o.vanilla - dp) << '\n';
  if (o.progressive) {
    out << "progressive," << format_double(*o.progressive) << ',' << format_double(*o.progressive - dp) << '\n';
  } else {
    out << "progressive,null,null\n";
  }
  out << "boot," << format_double(o.boot) << ',' << format_double(o.boot - dp) << '\n';
  out << "consistency," << format_double(o.consistency) << ',' << format_double(o.consistency - dp) << '\n';
  out << "dp," << format_double(dp) << ",0\n";
  return out.str();
}

inline std::string matrix_to_csv(const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out << "row,col,value\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (r + 1) << ',' << (c + 1) << ',' << csv::format_double(m(r, c)) << '\n';
  }
  return out.str();
}

/// Writes strategies.csv, frontier.csv, operator.csv, surrogate.csv, shrinkage.csv, plan.txt and plan.svg into `dir`.
inline void write_plan_outputs(const PlanReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  csv::write_file(path("strategies.csv"), strategies_to_csv(r));
  csv::write_file(path("frontier.csv"), frontier_sizes_to_csv(r.dp.frontier_sizes));
  csv::write_file(path("operator.csv"), operator_to_csv(r.dp.best));
  csv::write_file(path("surrogate.csv"), operator_to_csv(r.surrogate));
  csv::write_file(path("shrinkage.csv"), shrinkage_to_csv(r.shrink));
  csv::write_file(path("plan.txt"), r.dp.plan->to_text() + "\n");
  csv::write_file(path("plan.svg"), render_arc_diagram(*r.dp.plan, r.schedule.steps()));
  if (r.basis) csv::write_file(path("operator_matrix.csv"), matrix_to_csv(to_full_matrix(r.dp.best, *r.basis)));
}

struct GmmApproxRow {
  int k;
  std::size_t components;  // K^k, 0 if it overflows
  std::string status;      // ok | expansion_cap_exceeded
  std::size_t clusters = 0;
  double bound = 0.0, bias = 0.0, variance = 0.0;
  gmm::McEstimate mc;
  std::uint64_t seed;
};

inline gmm::GaussianMixture make_mixture(const ExperimentConfig& c) {
  if (!c.mixture_file.empty()) return gmm::read_mixture(csv::read_file(c.mixture_file));
  return gmm::make_circle_mixture(c.K, c.radius, c.iso_std);
}

inline std::size_t clusters_for(const gmm::GaussianMixture& mix) { return mix.components(); }

/**
 * One-step distillation of a k-step teacher (schedule with T = k, from pure
 * noise to data). Fit and Monte-Carlo samples use independent streams.
 */
inline GmmApproxRow gmm_approx_row(const gmm::GaussianMixture& mix, int k, const std::string& partition,
                                   std::size_t n, std::uint64_t seed, unsigned workers) {
  using namespace gmm;
  const auto sched = make_cosine_schedule(k);
  const auto ops = teacher_chain(mix, sched, k, 1);
  const std::size_t K = mix.components();
  std::size_t total = 1;
  bool overflow = false;
  for (int i = 0; i < k; ++i) {
    if (total > kDefaultExpansionCap) {
      overflow = true;
      break;
    }
    total *= K;
  }
  GmmApproxRow row{k, overflow ? 0 : total, "ok", 0, 0.0, 0.0, 0.0, {}, seed};
  const auto fit_samples = sample_marginal(mix, sched, k, n, stream_seed(seed, 2 * static_cast<std::uint64_t>(k)), workers);
  const auto mc_samples =
      sample_marginal(mix, sched, k, n, stream_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1), workers);

  std::optional<ClusterFit> fit;
  if (partition == "final_expert") {
    fit.emplace(fit_cluster_student(FinalExpertClusters(ops), fit_samples, workers));
  } else {
    if (overflow || total > kDefaultExpansionCap) {
      row.status = "expansion_cap_exceeded";
      return row;
    }
    const auto ex = compose_expand(ops);
    const auto method = partition == "exhaustive" ? PartitionMethod::Exhaustive : PartitionMethod::GreedyAffine;
    const auto part = choose_partition(ex, fit_samples, method, clusters_for(mix), workers);
    fit.emplace(fit_cluster_student(ex, part, fit_samples, workers));
  }
  row.clusters = fit->student.size();
  row.bound = fit->bound;
  row.bias = fit->bias;
  row.variance = fit->variance;
  const MoeOperator& student = fit->student;
  row.mc = mc_distillation_loss([&](const VectorXd& z) { return student.apply(z); },
                                [&](const VectorXd& z) { return apply_sequence(ops, z); }, mc_samples, workers);
  return row;
}

inline std::vector<GmmApproxRow> run_gmm_approx(const ExperimentConfig& c) {
  const auto mix = make_mixture(c);
  std::vector<GmmApproxRow> rows;
  for (int k : c.k_grid) rows.push_back(gmm_approx_row(mix, k, c.partition, c.samples, c.seed, c.workers()));
  return rows;
}

inline std::string gmm_approx_to_csv(const std::vector<GmmApproxRow>& rows) {
  std::ostringstream out;
  using csv::format_double;
  out << "k,components,clusters,bound,bias,variance,mc_loss,mc_stderr,seed,status\n";
  for (const auto& r : rows) {
    out << r.k << ',' << (r.components ? std::to_string(r.components) : "null") << ',';
    if (r.status == "ok") {
      out << r.clusters << ',' << format_double(r.bound) << ',' << format_double(r.bias) << ','
          << format_double(r.variance) << ',' << format_double(r.mc.mean) << ',' << format_double(r.mc.std_error);
    } else {
      out << "null,null,null,null,null,null";
    }
    out << ',' << r.seed << ',' << r.status << '\n';
  }
  return out.str();
}

struct PropagationReport {
  int T;
  int k1;  // steps T..split+1
  int k2;  // steps split..1
  std::size_t samples;
  double stage1_bound, stage2_bound, merged_bound;
  gmm::AuditRecord audit;
};

/**
 * Two-stage merge on the mixture teacher: stage 1 distills steps T..split+1
 * (fit on p_T), stage 2 distills split..1 (fit on p_split), and the merged
 * student compresses their composition into K experts (fit on p_T).
 */
inline PropagationReport run_gmm_propagate(const ExperimentConfig& c) {
  using namespace gmm;
  const auto mix = make_mixture(c);
  const auto sched = make_cosine_schedule(c.gmm_T);
  const int T = c.gmm_T, split = c.split;
  const unsigned w = c.workers();
  const auto teacher1 = teacher_chain(mix, sched, T, split + 1);
  const auto teacher2 = teacher_chain(mix, sched, split, 1);
  const auto zT = sample_marginal(mix, sched, T, c.samples, stream_seed(c.seed, 1), w);
  const auto zs = sample_marginal(mix, sched, split, c.samples, stream_seed(c.seed, 2), w);

  const auto fit1 = fit_cluster_student(FinalExpertClusters(teacher1), zT, w);
  const auto fit2 = fit_cluster_student(FinalExpertClusters(teacher2), zs, w);
  const auto ex = compose_expand({fit1.student, fit2.student});
  const auto part = choose_partition(ex, zT, PartitionMethod::GreedyAffine, clusters_for(mix), w);
  const auto merged = fit_cluster_student(ex, part, zT, w);

  const double L = estimate_lipschitz([&](const VectorXd& z) { return apply_sequence(teacher2, z); }, zs,
                                      c.lipschitz_pairs, c.lipschitz_scale, stream_seed(c.seed, 4));
  const auto audit_samples = sample_marginal(mix, sched, T, c.samples, stream_seed(c.seed, 3), w);
  auto audit = error_propagation_audit(fit1.student, fit2.student, merged.student, teacher1, teacher2, audit_samples, L, w);
  return {T, T - split, split, c.samples, fit1.bound, fit2.bound, merged.bound, audit};
}

inline std::string propagation_to_csv(const PropagationReport& r) {
  std::ostringstream out;
  using csv::format_double;
  const auto& a = r.audit;
  out << "T,k1,k2,samples,stage1_bound,stage2_bound,merged_bound,lipschitz,final_error,final_stderr,merge_error,"
         "merge_stderr,shift,shift_stderr,stage1_error,stage1_stderr,rhs,slack,combined_stderr,holds\n";
  out << r.T << ',' << r.k1 << ',' << r.k2 << ',' << r.samples << ',' << format_double(r.stage1_bound) << ','
      << format_double(r.stage2_bound) << ',' << format_double(r.merged_bound) << ',' << format_double(a.lipschitz) << ','
      << format_double(a.final_error.mean) << ',' << format_double(a.final_error.std_error) << ','
      << format_double(a.merge_error.mean) << ',' << format_double(a.merge_error.std_error) << ','
      << format_double(a.shift.mean) << ',' << format_double(a.shift.std_error) << ','
      << format_double(a.stage1_error.mean) << ',' << format_double(a.stage1_error.std_error) << ','
      << format_double(a.rhs) << ',' << format_double(a.slack) << ',' << format_double(a.combined_stderr) << ','
      << (a.holds ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace merge_planner::report
