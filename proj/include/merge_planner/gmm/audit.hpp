#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "merge_planner/gmm/cluster.hpp"

namespace merge_planner::gmm {

struct AuditRecord {
  McEstimate final_error;   // E||merged(z) - T2(T1(z))||^2
  McEstimate merge_error;   // E||merged(z) - s2(s1(z))||^2
  McEstimate shift;         // E||s2(s1(z)) - T2(s1(z))||^2
  McEstimate stage1_error;  // E||s1(z) - T1(z)||^2
  double lipschitz = 0.0;   // empirical lower estimate for T2
  double rhs = 0.0;         // 2 merge + 4 shift + 4 L^2 stage1
  double slack = 0.0;       // mean of per-sample (rhs - lhs)
  double combined_stderr = 0.0;
  bool holds = false;       // lhs <= rhs + 3 combined_stderr
};

/**
 * Two-stage propagation check. Every term is estimated on the same samples;
 * the verdict uses the standard error of the per-sample difference rhs - lhs.
 */
inline AuditRecord error_propagation_audit(const MoeOperator& stage1, const MoeOperator& stage2, const MoeOperator& merged,
                                           const std::vector<MoeOperator>& teacher1,
                                           const std::vector<MoeOperator>& teacher2, const MatrixXd& samples,
                                           double lipschitz, unsigned workers = 1) {
  check_chain(teacher1);
  check_chain(teacher2);
  if (!(stage1.interval() == chain_interval(teacher1)) || !(stage2.interval() == chain_interval(teacher2))) {
    throw std::invalid_argument("audit: stage intervals do not match their teachers");
  }
  if (stage2.interval().last + 1 != stage1.interval().first) throw std::invalid_argument("audit: stages are not contiguous");
  if (!(merged.interval() == StepInterval{stage2.interval().first, stage1.interval().last})) {
    throw std::invalid_argument("audit: merged operator must cover both stages");
  }
  if (!(lipschitz >= 0.0)) throw std::invalid_argument("audit: Lipschitz estimate must be nonnegative");

  const auto n = static_cast<std::size_t>(samples.cols());
  if (n < 2) throw std::invalid_argument("audit needs n >= 2");
  std::vector<double> lhs(n), merge(n), shift(n), first(n), diff(n);
  const double l2 = lipschitz * lipschitz;
  parallel_for((n + detail::kFitChunk - 1) / detail::kFitChunk, workers, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * detail::kFitChunk);
    for (std::size_t i = c * detail::kFitChunk; i < end; ++i) {
      const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
      const VectorXd t1 = apply_sequence(teacher1, z);
      const VectorXd teacher = apply_sequence(teacher2, t1);
      const VectorXd f1 = stage1.apply(z);
      const VectorXd f2f1 = stage2.apply(f1);
      const VectorXd t2f1 = apply_sequence(teacher2, f1);
      const VectorXd m = merged.apply(z);
      lhs[i] = (m - teacher).squaredNorm();
      merge[i] = (m - f2f1).squaredNorm();
      shift[i] = (f2f1 - t2f1).squaredNorm();
      first[i] = (f1 - t1).squaredNorm();
      diff[i] = 2.0 * merge[i] + 4.0 * shift[i] + 4.0 * l2 * first[i] - lhs[i];
    }
  });

  AuditRecord out;
  out.final_error = summarize(lhs);
  out.merge_error = summarize(merge);
  out.shift = summarize(shift);
  out.stage1_error = summarize(first);
  out.lipschitz = lipschitz;
  out.rhs = 2.0 * out.merge_error.mean + 4.0 * out.shift.mean + 4.0 * l2 * out.stage1_error.mean;
  const McEstimate d = summarize(diff);
  out.slack = d.mean;
  out.combined_stderr = d.std_error;
  out.holds = out.final_error.mean <= out.rhs + 3.0 * out.combined_stderr;
  return out;
}

}  // namespace merge_planner::gmm
