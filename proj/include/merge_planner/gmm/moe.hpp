#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "merge_planner/gmm/mixture.hpp"
#include "merge_planner/linear_op.hpp"

namespace merge_planner::gmm {

struct AffineExpert {
  MatrixXd A;
  VectorXd b;
};

/// Nonnegative weights over experts that sum to 1 for every input.
class GatingRule {
 public:
  virtual ~GatingRule() = default;
  virtual std::size_t size() const = 0;
  virtual void weights(const VectorXd& z, VectorXd& out) const = 0;

  VectorXd weights(const VectorXd& z) const {
    VectorXd out;
    weights(z, out);
    return out;
  }
};

using GatingPtr = std::shared_ptr<const GatingRule>;

class PosteriorGating final : public GatingRule {
 public:
  using GatingRule::weights;
  PosteriorGating(const GaussianMixture& mix, const NoiseSchedule& sched, int t) : model_(mix, sched, t), t_(t) {}
  std::size_t size() const override { return model_.components(); }
  void weights(const VectorXd& z, VectorXd& out) const override { model_.weights(z, out); }
  int step() const { return t_; }

 private:
  PosteriorModel model_;
  int t_;
};

/// z -> sum_k gamma_k(z) (A_k z + b_k) over the reverse steps in `interval`.
class MoeOperator {
 public:
  MoeOperator(std::vector<AffineExpert> experts, GatingPtr gating, StepInterval interval)
      : experts_(std::move(experts)), gating_(std::move(gating)), interval_(interval) {
    if (experts_.empty()) throw std::invalid_argument("operator needs at least one expert");
    if (!gating_ || gating_->size() != experts_.size()) throw std::invalid_argument("gating size != expert count");
    const Eigen::Index d = experts_.front().b.size();
    for (const auto& e : experts_) {
      if (e.A.rows() != d || e.A.cols() != d || e.b.size() != d) throw std::invalid_argument("expert shape mismatch");
      if (!e.A.allFinite() || !e.b.allFinite()) throw std::invalid_argument("expert parameters must be finite");
    }
  }

  std::size_t size() const { return experts_.size(); }
  Eigen::Index dim() const { return experts_.front().b.size(); }
  const AffineExpert& expert(std::size_t k) const { return experts_[k]; }
  const std::vector<AffineExpert>& experts() const { return experts_; }
  const GatingRule& gating() const { return *gating_; }
  const GatingPtr& gating_ptr() const { return gating_; }
  const StepInterval& interval() const { return interval_; }

  /// Output for precomputed gating weights.
  VectorXd apply_weighted(const VectorXd& z, const VectorXd& w) const {
    VectorXd out = VectorXd::Zero(dim());
    for (std::size_t k = 0; k < experts_.size(); ++k) {
      const double wk = w(static_cast<Eigen::Index>(k));
      if (wk == 0.0) continue;
      out.noalias() += wk * (experts_[k].A * z);
      out += wk * experts_[k].b;
    }
    return out;
  }

  VectorXd apply(const VectorXd& z) const {
    VectorXd w;
    gating_->weights(z, w);
    return apply_weighted(z, w);
  }

  VectorXd operator()(const VectorXd& z) const { return apply(z); }

 private:
  std::vector<AffineExpert> experts_;
  GatingPtr gating_;
  StepInterval interval_;
};

/// Per-component DDIM step under the mixture posterior, gated by PosteriorGating at t.
inline MoeOperator single_step_moe(const GaussianMixture& mix, const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.steps()) throw std::out_of_range("single_step_moe: step out of range");
  const double a0 = sched.alpha(t - 1), a1 = sched.alpha(t);
  const double s0 = sched.sigma(t - 1), s1 = sched.sigma(t);
  const Eigen::Index d = mix.dim();
  std::vector<AffineExpert> experts;
  experts.reserve(mix.components());
  for (std::size_t k = 0; k < mix.components(); ++k) {
    const VectorXd& e = mix.eigenvalues(k);
    const VectorXd ratio = (a0 * a1 * e.array() + s0 * s1) / (a1 * a1 * e.array() + s1 * s1);
    const MatrixXd& U = mix.basis(k);
    MatrixXd A = U * ratio.asDiagonal() * U.transpose();
    VectorXd b = (a0 * MatrixXd::Identity(d, d) - a1 * A) * mix.mu(k);
    experts.push_back({std::move(A), std::move(b)});
  }
  return MoeOperator(std::move(experts), std::make_shared<PosteriorGating>(mix, sched, t), {t, t});
}

/// DDIM update applied to the optimal denoiser; an independent path to single_step_moe(...)(z).
inline VectorXd ddim_step(const GaussianMixture& mix, const NoiseSchedule& sched, int t, const VectorXd& z) {
  const VectorXd x0 = optimal_mixture_denoiser(mix, sched, t, z);
  return sched.alpha(t - 1) * x0 + sched.sigma(t - 1) * (z - sched.alpha(t) * x0) / sched.sigma(t);
}

/// Teacher steps t_hi, t_hi - 1, ..., t_lo in application order.
inline std::vector<MoeOperator> teacher_chain(const GaussianMixture& mix, const NoiseSchedule& sched, int t_hi, int t_lo) {
  if (t_lo < 1 || t_hi < t_lo || t_hi > sched.steps()) throw std::out_of_range("teacher chain interval invalid");
  std::vector<MoeOperator> ops;
  ops.reserve(static_cast<std::size_t>(t_hi - t_lo + 1));
  for (int t = t_hi; t >= t_lo; --t) ops.push_back(single_step_moe(mix, sched, t));
  return ops;
}

inline void check_chain(const std::vector<MoeOperator>& ops) {
  if (ops.empty()) throw std::invalid_argument("operator chain is empty");
  for (std::size_t i = 1; i < ops.size(); ++i) {
    if (ops[i].dim() != ops[0].dim()) throw std::invalid_argument("operator chain dimension mismatch");
    if (ops[i].interval().last + 1 != ops[i - 1].interval().first) {
      throw std::invalid_argument("operator " + std::to_string(i) + " " + to_string(ops[i].interval()) +
                                  " does not continue " + to_string(ops[i - 1].interval()));
    }
  }
}

inline StepInterval chain_interval(const std::vector<MoeOperator>& ops) {
  return {ops.back().interval().first, ops.front().interval().last};
}

/// Applies the operators one after another.
inline VectorXd apply_sequence(const std::vector<MoeOperator>& ops, const VectorXd& z) {
  VectorXd y = z;
  for (const auto& op : ops) y = op.apply(y);
  return y;
}

/**
 * Weight of an index path (i_1, ..., i_k): the product of each stage's gating
 * evaluated along the actual sequential trajectory. Path index is
 * i_1 K^{k-1} + ... + i_k, so the first stage is most significant.
 */
class PathGating final : public GatingRule {
 public:
  using GatingRule::weights;
  explicit PathGating(std::vector<MoeOperator> stages) : stages_(std::move(stages)) {
    check_chain(stages_);
    size_ = 1;
    for (const auto& s : stages_) size_ *= s.size();
  }

  std::size_t size() const override { return size_; }

  void weights(const VectorXd& z, VectorXd& out) const override {
    out.resize(static_cast<Eigen::Index>(size_));
    out(0) = 1.0;
    std::size_t filled = 1;
    VectorXd y = z, g;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      stages_[s].gating().weights(y, g);
      const std::size_t K = stages_[s].size();
      // Expand in place from the back so earlier entries are read before being overwritten.
      for (std::size_t p = filled; p-- > 0;) {
        const double wp = out(static_cast<Eigen::Index>(p));
        for (std::size_t j = K; j-- > 0;) out(static_cast<Eigen::Index>(p * K + j)) = wp * g(static_cast<Eigen::Index>(j));
      }
      filled *= K;
      if (s + 1 < stages_.size()) y = stages_[s].apply_weighted(y, g);
    }
  }

  const std::vector<MoeOperator>& stages() const { return stages_; }

 private:
  std::vector<MoeOperator> stages_;
  std::size_t size_;
};

using Partition = std::vector<std::vector<std::size_t>>;

/// Checks that `partition` splits {0..n-1} into nonempty disjoint blocks.
inline void check_partition(const Partition& partition, std::size_t n) {
  std::vector<char> seen(n, 0);
  std::size_t count = 0;
  for (const auto& block : partition) {
    if (block.empty()) throw std::invalid_argument("partition has an empty block");
    for (std::size_t i : block) {
      if (i >= n) throw std::invalid_argument("partition index out of range");
      if (seen[i]) throw std::invalid_argument("partition blocks overlap at index " + std::to_string(i));
      seen[i] = 1;
      ++count;
    }
  }
  if (count != n) throw std::invalid_argument("partition does not cover all components");
}

/// W_c(z) = sum of the base weights over block c.
class AggregatedGating final : public GatingRule {
 public:
  using GatingRule::weights;
  AggregatedGating(GatingPtr base, Partition partition) : base_(std::move(base)), partition_(std::move(partition)) {
    check_partition(partition_, base_->size());
  }

  std::size_t size() const override { return partition_.size(); }

  void weights(const VectorXd& z, VectorXd& out) const override {
    base_->weights(z, scratch_);
    out.resize(static_cast<Eigen::Index>(partition_.size()));
    for (std::size_t c = 0; c < partition_.size(); ++c) {
      double s = 0.0;
      for (std::size_t i : partition_[c]) s += scratch_(static_cast<Eigen::Index>(i));
      out(static_cast<Eigen::Index>(c)) = s;
    }
  }

  const Partition& partition() const { return partition_; }

 private:
  GatingPtr base_;
  Partition partition_;
  static thread_local inline VectorXd scratch_;
};

/**
 * Gating of the last stage evaluated after running all earlier stages. Equals
 * the path weights aggregated by final expert index.
 */
class FinalExpertGating final : public GatingRule {
 public:
  using GatingRule::weights;
  explicit FinalExpertGating(std::vector<MoeOperator> stages) : stages_(std::move(stages)) { check_chain(stages_); }

  std::size_t size() const override { return stages_.back().size(); }

  void weights(const VectorXd& z, VectorXd& out) const override {
    VectorXd y = z;
    for (std::size_t s = 0; s + 1 < stages_.size(); ++s) y = stages_[s].apply(y);
    stages_.back().gating().weights(y, out);
  }

 private:
  std::vector<MoeOperator> stages_;
};

inline constexpr std::size_t kDefaultExpansionCap = 4096;

class ExpansionCapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

/**
 * The k-fold composition rewritten as one operator with prod_s K_s experts:
 * A_path = A_{i_k} ... A_{i_1}, b_path accumulated stage by stage, gated by
 * PathGating.
 */
class CompositionExpansion {
 public:
  CompositionExpansion(std::vector<MoeOperator> stages, std::size_t cap = kDefaultExpansionCap)
      : gating_(nullptr), op_(nullptr) {
    check_chain(stages);
    std::size_t total = 1;
    for (const auto& s : stages) {
      if (total > cap / s.size()) {
        throw ExpansionCapExceeded("expansion would exceed the cap of " + std::to_string(cap) + " components");
      }
      total *= s.size();
    }
    const Eigen::Index d = stages.front().dim();
    std::vector<AffineExpert> cur{{MatrixXd::Identity(d, d), VectorXd::Zero(d)}};
    for (const auto& stage : stages) {
      std::vector<AffineExpert> next;
      next.reserve(cur.size() * stage.size());
      for (const auto& path : cur) {
        for (const auto& e : stage.experts()) next.push_back({e.A * path.A, e.A * path.b + e.b});
      }
      cur = std::move(next);
    }
    interval_ = chain_interval(stages);
    gating_ = std::make_shared<PathGating>(std::move(stages));
    op_ = std::make_shared<MoeOperator>(std::move(cur), gating_, interval_);
  }

  std::size_t size() const { return op_->size(); }
  Eigen::Index dim() const { return op_->dim(); }
  const AffineExpert& expert(std::size_t p) const { return op_->expert(p); }
  const MoeOperator& op() const { return *op_; }
  const PathGating& gating() const { return *gating_; }
  std::shared_ptr<const PathGating> gating_ptr() const { return gating_; }
  const std::vector<MoeOperator>& stages() const { return gating_->stages(); }
  const StepInterval& interval() const { return interval_; }

  VectorXd apply(const VectorXd& z) const { return op_->apply(z); }

 private:
  StepInterval interval_;
  std::shared_ptr<const PathGating> gating_;
  std::shared_ptr<const MoeOperator> op_;
};

inline CompositionExpansion compose_expand(std::vector<MoeOperator> ops, std::size_t cap = kDefaultExpansionCap) {
  return CompositionExpansion(std::move(ops), cap);
}

}  // namespace merge_planner::gmm
