#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "merge_planner/gmm/moe.hpp"
#include "merge_planner/parallel.hpp"

namespace merge_planner::gmm {

/// Per-sample cluster statistics: mass W_c = sum w_p, G_c = sum w_p g_p (column c),
/// V_c = sum w_p ||g_p - G_c / W_c||^2, over the paths p in cluster c.
struct ClusterStats {
  VectorXd W;
  MatrixXd G;
  VectorXd V;
};

/// A composite teacher whose paths are grouped into clusters.
class ClusterSource {
 public:
  virtual ~ClusterSource() = default;
  virtual std::size_t clusters() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual StepInterval interval() const = 0;
  virtual void evaluate(const VectorXd& z, ClusterStats& out) const = 0;
  /// Gating of the aggregated student: W_c(z).
  virtual GatingPtr student_gating() const = 0;
};

/// Clusters given by an explicit partition of the expanded paths.
class ExpansionClusters final : public ClusterSource {
 public:
  ExpansionClusters(const CompositionExpansion& expansion, Partition partition)
      : gating_(expansion.gating_ptr()), partition_(std::move(partition)), interval_(expansion.interval()) {
    check_partition(partition_, expansion.size());
    const Eigen::Index d = expansion.dim();
    const auto P = static_cast<Eigen::Index>(expansion.size());
    stacked_A_.resize(P * d, d);
    stacked_b_.resize(P * d);
    for (Eigen::Index p = 0; p < P; ++p) {
      stacked_A_.middleRows(p * d, d) = expansion.expert(static_cast<std::size_t>(p)).A;
      stacked_b_.segment(p * d, d) = expansion.expert(static_cast<std::size_t>(p)).b;
    }
  }

  std::size_t clusters() const override { return partition_.size(); }
  Eigen::Index dim() const override { return stacked_A_.cols(); }
  StepInterval interval() const override { return interval_; }
  const Partition& partition() const { return partition_; }

  void evaluate(const VectorXd& z, ClusterStats& out) const override {
    const Eigen::Index d = dim();
    const auto C = static_cast<Eigen::Index>(partition_.size());
    thread_local VectorXd w, g;
    gating_->weights(z, w);
    g.noalias() = stacked_A_ * z;
    g += stacked_b_;
    out.W.setZero(C);
    out.G.setZero(d, C);
    out.V.setZero(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      for (std::size_t p : partition_[static_cast<std::size_t>(c)]) {
        const auto ip = static_cast<Eigen::Index>(p);
        out.W(c) += w(ip);
        out.G.col(c) += w(ip) * g.segment(ip * d, d);
      }
      if (out.W(c) > 0.0) {
        const VectorXd centroid = out.G.col(c) / out.W(c);
        double v = 0.0;
        for (std::size_t p : partition_[static_cast<std::size_t>(c)]) {
          const auto ip = static_cast<Eigen::Index>(p);
          v += w(ip) * (g.segment(ip * d, d) - centroid).squaredNorm();
        }
        out.V(c) = v;
      }
    }
  }

  GatingPtr student_gating() const override { return std::make_shared<AggregatedGating>(gating_, partition_); }

 private:
  std::shared_ptr<const PathGating> gating_;
  Partition partition_;
  StepInterval interval_;
  MatrixXd stacked_A_;
  VectorXd stacked_b_;
};

/**
 * Paths of a long chain grouped by their final expert, without expanding.
 * Runs the chain once per sample while tracking the weighted mean and
 * covariance of the path outputs (law of total variance), so cost is linear
 * in the number of stages.
 */
class FinalExpertClusters final : public ClusterSource {
 public:
  explicit FinalExpertClusters(std::vector<MoeOperator> stages) : stages_(std::move(stages)) { check_chain(stages_); }

  std::size_t clusters() const override { return stages_.back().size(); }
  Eigen::Index dim() const override { return stages_.front().dim(); }
  StepInterval interval() const override { return chain_interval(stages_); }

  void evaluate(const VectorXd& z, ClusterStats& out) const override {
    const Eigen::Index d = dim();
    VectorXd y = z, g, m, y_next;
    MatrixXd cov = MatrixXd::Zero(d, d), cov_next(d, d);
    std::vector<VectorXd> means;
    for (std::size_t s = 0; s + 1 < stages_.size(); ++s) {
      const MoeOperator& op = stages_[s];
      op.gating().weights(y, g);
      means.resize(op.size());
      y_next.setZero(d);
      for (std::size_t j = 0; j < op.size(); ++j) {
        means[j] = op.expert(j).A * y + op.expert(j).b;
        y_next += g(static_cast<Eigen::Index>(j)) * means[j];
      }
      cov_next.setZero();
      for (std::size_t j = 0; j < op.size(); ++j) {
        const double gj = g(static_cast<Eigen::Index>(j));
        if (gj == 0.0) continue;
        const MatrixXd& A = op.expert(j).A;
        m = means[j] - y_next;
        cov_next.noalias() += gj * (A * cov * A.transpose());
        cov_next.noalias() += gj * (m * m.transpose());
      }
      y.swap(y_next);
      cov.swap(cov_next);
    }
    const MoeOperator& last = stages_.back();
    last.gating().weights(y, g);
    const auto C = static_cast<Eigen::Index>(last.size());
    out.W = g;
    out.G.resize(d, C);
    out.V.resize(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      const MatrixXd& A = last.expert(static_cast<std::size_t>(c)).A;
      out.G.col(c) = g(c) * (A * y + last.expert(static_cast<std::size_t>(c)).b);
      out.V(c) = g(c) * (A * cov * A.transpose()).trace();
    }
  }

  GatingPtr student_gating() const override { return std::make_shared<FinalExpertGating>(stages_); }

 private:
  std::vector<MoeOperator> stages_;
};

/// Affine design x = [z; 1].
inline VectorXd affine_design(const VectorXd& z) {
  VectorXd x(z.size() + 1);
  x.head(z.size()) = z;
  x(z.size()) = 1.0;
  return x;
}

struct ClusterFit {
  MoeOperator student;
  double bound;     // bias + variance, averaged over samples
  double bias;      // mean of sum_c W_c ||A_c z + b_c - centroid_c||^2
  double variance;  // mean of sum_c V_c
  std::vector<double> mass;  // mean W_c per cluster
  bool regularized;          // some normal equations needed the ridge
  std::size_t samples;
};

inline constexpr double kNormalEquationRidge = 1e-10;

namespace detail {

inline constexpr std::size_t kFitChunk = 4096;

template <class Acc, class Fn>
std::vector<Acc> chunked(std::size_t n, unsigned workers, Acc init, Fn&& fn) {
  const std::size_t chunks = (n + kFitChunk - 1) / kFitChunk;
  std::vector<Acc> parts(chunks, init);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * kFitChunk);
    for (std::size_t i = c * kFitChunk; i < end; ++i) fn(parts[c], i);
  });
  return parts;
}

/// Solves theta S = R for theta (d x (d+1)); adds a ridge when S is numerically singular.
inline MatrixXd solve_normal(const MatrixXd& S, const MatrixXd& R, bool& regularized) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  MatrixXd Sreg = S;
  if (!(es.eigenvalues().minCoeff() > 1e-12 * top) || top == 0.0) {
    Sreg += kNormalEquationRidge * MatrixXd::Identity(S.rows(), S.cols());
    regularized = true;
  }
  return Sreg.ldlt().solve(R.transpose()).transpose();
}

}  // namespace detail

/**
 * Constructive K-cluster student: for each cluster, weighted least squares of
 * the path outputs on [z; 1] with weights W_c; gating is the aggregated path
 * weight. Returns the empirical bias + variance bound on `samples` (d x n).
 */
inline ClusterFit fit_cluster_student(const ClusterSource& source, const MatrixXd& samples, unsigned workers = 1) {
  const Eigen::Index d = source.dim();
  const auto n = static_cast<std::size_t>(samples.cols());
  if (samples.rows() != d) throw std::invalid_argument("sample dimension mismatch");
  if (n == 0) throw std::invalid_argument("fit needs at least one sample");
  const std::size_t C = source.clusters();

  struct Normal {
    std::vector<MatrixXd> S, R;
    std::vector<double> mass;
  };
  Normal init{std::vector<MatrixXd>(C, MatrixXd::Zero(d + 1, d + 1)), std::vector<MatrixXd>(C, MatrixXd::Zero(d, d + 1)),
              std::vector<double>(C, 0.0)};
  auto parts = detail::chunked(n, workers, init, [&](Normal& acc, std::size_t i) {
    thread_local ClusterStats st;
    const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
    source.evaluate(z, st);
    const VectorXd x = affine_design(z);
    for (std::size_t c = 0; c < C; ++c) {
      const double wc = st.W(static_cast<Eigen::Index>(c));
      if (wc == 0.0) continue;
      acc.S[c].noalias() += wc * (x * x.transpose());
      acc.R[c].noalias() += st.G.col(static_cast<Eigen::Index>(c)) * x.transpose();
      acc.mass[c] += wc;
    }
  });
  Normal total = init;
  for (const auto& p : parts) {
    for (std::size_t c = 0; c < C; ++c) {
      total.S[c] += p.S[c];
      total.R[c] += p.R[c];
      total.mass[c] += p.mass[c];
    }
  }

  bool regularized = false;
  std::vector<AffineExpert> experts;
  experts.reserve(C);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t c = 0; c < C; ++c) {
    const MatrixXd theta = detail::solve_normal(total.S[c] * inv_n, total.R[c] * inv_n, regularized);
    experts.push_back({theta.leftCols(d), theta.col(d)});
  }

  struct Terms {
    double bias = 0.0, variance = 0.0;
  };
  auto terms = detail::chunked(n, workers, Terms{}, [&](Terms& acc, std::size_t i) {
    thread_local ClusterStats st;
    const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
    source.evaluate(z, st);
    for (std::size_t c = 0; c < C; ++c) {
      const auto ic = static_cast<Eigen::Index>(c);
      const double wc = st.W(ic);
      if (wc > 0.0) {
        const VectorXd r = wc * (experts[c].A * z + experts[c].b) - st.G.col(ic);
        acc.bias += r.squaredNorm() / wc;
      }
      acc.variance += st.V(ic);
    }
  });
  Terms sum;
  for (const auto& t : terms) {
    sum.bias += t.bias;
    sum.variance += t.variance;
  }

  std::vector<double> mass(C);
  for (std::size_t c = 0; c < C; ++c) mass[c] = total.mass[c] * inv_n;
  const double bias = sum.bias * inv_n, variance = sum.variance * inv_n;
  return ClusterFit{MoeOperator(std::move(experts), source.student_gating(), source.interval()),
                    bias + variance,
                    bias,
                    variance,
                    std::move(mass),
                    regularized,
                    n};
}

inline ClusterFit fit_cluster_student(const CompositionExpansion& expansion, const Partition& partition,
                                      const MatrixXd& samples, unsigned workers = 1) {
  return fit_cluster_student(ExpansionClusters(expansion, partition), samples, workers);
}

enum class PartitionMethod { GreedyAffine, Exhaustive };

/// Sorted blocks, ordered by smallest member.
inline Partition canonical_partition(Partition p) {
  for (auto& block : p) std::sort(block.begin(), block.end());
  std::erase_if(p, [](const auto& b) { return b.empty(); });
  std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return p;
}

inline Partition singleton_partition(std::size_t n) {
  Partition p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = {i};
  return p;
}

/// Paths grouped by their last-stage expert index (path index mod K_last).
inline Partition final_expert_partition(const CompositionExpansion& expansion) {
  const std::size_t K = expansion.stages().back().size();
  Partition p(K);
  for (std::size_t i = 0; i < expansion.size(); ++i) p[i % K].push_back(i);
  return canonical_partition(std::move(p));
}

namespace detail {

/// Mean path mass and second moment of [z; 1] over the samples.
inline void path_moments(const CompositionExpansion& expansion, const MatrixXd& samples, unsigned workers,
                         VectorXd& mass, MatrixXd& second) {
  const Eigen::Index d = expansion.dim();
  const auto n = static_cast<std::size_t>(samples.cols());
  struct Acc {
    VectorXd mass;
    MatrixXd second;
  };
  const Acc init{VectorXd::Zero(static_cast<Eigen::Index>(expansion.size())), MatrixXd::Zero(d + 1, d + 1)};
  auto parts = chunked(n, workers, init, [&](Acc& acc, std::size_t i) {
    thread_local VectorXd w;
    const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
    expansion.gating().weights(z, w);
    acc.mass += w;
    const VectorXd x = affine_design(z);
    acc.second.noalias() += x * x.transpose();
  });
  mass = init.mass;
  second = init.second;
  for (const auto& p : parts) {
    mass += p.mass;
    second += p.second;
  }
  mass /= static_cast<double>(n);
  second /= static_cast<double>(n);
}

inline Partition greedy_affine(const CompositionExpansion& expansion, const MatrixXd& samples, std::size_t clusters,
                               unsigned workers) {
  const std::size_t P = expansion.size();
  const Eigen::Index d = expansion.dim();
  VectorXd mass;
  MatrixXd second;
  path_moments(expansion, samples, workers, mass, second);
  second += 1e-12 * MatrixXd::Identity(d + 1, d + 1);
  const MatrixXd L = second.llt().matrixL();

  // Embedding whose squared distance is E ||(theta_p - theta_q) [z; 1]||^2.
  MatrixXd emb(d * (d + 1), static_cast<Eigen::Index>(P));
  for (std::size_t p = 0; p < P; ++p) {
    MatrixXd theta(d, d + 1);
    theta << expansion.expert(p).A, expansion.expert(p).b;
    const MatrixXd t = theta * L;
    emb.col(static_cast<Eigen::Index>(p)) = Eigen::Map<const VectorXd>(t.data(), t.size());
  }
  auto dist2 = [&](std::size_t p, const VectorXd& c) { return (emb.col(static_cast<Eigen::Index>(p)) - c).squaredNorm(); };

  // Farthest-first seeding from the heaviest path, scored by mass * distance^2.
  std::vector<VectorXd> centers;
  Eigen::Index heaviest = 0;
  mass.maxCoeff(&heaviest);
  centers.push_back(emb.col(heaviest));
  std::vector<double> nearest(P);
  while (centers.size() < clusters) {
    double best = 0.0;
    std::size_t arg = P;
    for (std::size_t p = 0; p < P; ++p) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) m = std::min(m, dist2(p, c));
      const double score = mass(static_cast<Eigen::Index>(p)) * m;
      if (score > best) {
        best = score;
        arg = p;
      }
    }
    if (arg == P) break;
    centers.push_back(emb.col(static_cast<Eigen::Index>(arg)));
  }

  std::vector<std::size_t> assign(P, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = iter == 0;
    for (std::size_t p = 0; p < P; ++p) {
      std::size_t arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double v = dist2(p, centers[c]);
        if (v < best) {
          best = v;
          arg = c;
        }
      }
      if (assign[p] != arg) changed = true;
      assign[p] = arg;
    }
    if (!changed) break;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      VectorXd acc = VectorXd::Zero(emb.rows());
      double wsum = 0.0, count = 0.0;
      VectorXd plain = VectorXd::Zero(emb.rows());
      for (std::size_t p = 0; p < P; ++p) {
        if (assign[p] != c) continue;
        acc += mass(static_cast<Eigen::Index>(p)) * emb.col(static_cast<Eigen::Index>(p));
        wsum += mass(static_cast<Eigen::Index>(p));
        plain += emb.col(static_cast<Eigen::Index>(p));
        count += 1.0;
      }
      if (wsum > 0.0) {
        centers[c] = acc / wsum;
      } else if (count > 0.0) {
        centers[c] = plain / count;
      }
    }
  }

  Partition out(centers.size());
  for (std::size_t p = 0; p < P; ++p) out[assign[p]].push_back(p);
  return canonical_partition(std::move(out));
}

inline Partition exhaustive(const CompositionExpansion& expansion, const MatrixXd& samples, std::size_t clusters,
                            unsigned workers) {
  const std::size_t P = expansion.size();
  const Eigen::Index d = expansion.dim();
  const auto n = static_cast<std::size_t>(samples.cols());

  // Per-path sufficient statistics: S_p = sum w x x^T, R_p = sum w g x^T, Q_p = sum w ||g||^2.
  struct Acc {
    std::vector<MatrixXd> S, R;
    std::vector<double> Q;
  };
  const Acc init{std::vector<MatrixXd>(P, MatrixXd::Zero(d + 1, d + 1)), std::vector<MatrixXd>(P, MatrixXd::Zero(d, d + 1)),
                 std::vector<double>(P, 0.0)};
  auto parts = chunked(n, workers, init, [&](Acc& acc, std::size_t i) {
    thread_local VectorXd w;
    const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
    expansion.gating().weights(z, w);
    const VectorXd x = affine_design(z);
    const MatrixXd xx = x * x.transpose();
    for (std::size_t p = 0; p < P; ++p) {
      const double wp = w(static_cast<Eigen::Index>(p));
      if (wp == 0.0) continue;
      const VectorXd g = expansion.expert(p).A * z + expansion.expert(p).b;
      acc.S[p] += wp * xx;
      acc.R[p].noalias() += wp * g * x.transpose();
      acc.Q[p] += wp * g.squaredNorm();
    }
  });
  Acc total = init;
  for (const auto& a : parts) {
    for (std::size_t p = 0; p < P; ++p) {
      total.S[p] += a.S[p];
      total.R[p] += a.R[p];
      total.Q[p] += a.Q[p];
    }
  }

  auto block_cost = [&](const std::vector<std::size_t>& block) {
    MatrixXd S = MatrixXd::Zero(d + 1, d + 1), R = MatrixXd::Zero(d, d + 1);
    double Q = 0.0;
    for (std::size_t p : block) {
      S += total.S[p];
      R += total.R[p];
      Q += total.Q[p];
    }
    bool flag = false;
    const MatrixXd theta = solve_normal(S, R, flag);
    return (theta * S * theta.transpose()).trace() - 2.0 * (theta * R.transpose()).trace() + Q;
  };

  // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[0..i-1]), at most `clusters` blocks.
  std::vector<std::size_t> a(P, 0), best_a;
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t blocks) {
    if (i == P) {
      Partition part(blocks);
      for (std::size_t p = 0; p < P; ++p) part[a[p]].push_back(p);
      double cost = 0.0;
      for (const auto& b : part) cost += block_cost(b);
      if (cost < best) {
        best = cost;
        best_a = a;
      }
      return;
    }
    for (std::size_t v = 0; v <= blocks && v < clusters; ++v) {
      a[i] = v;
      rec(i + 1, std::max(blocks, v + 1));
    }
  };
  rec(1, 1);
  std::size_t blocks = 0;
  for (std::size_t v : best_a) blocks = std::max(blocks, v + 1);
  Partition out(blocks);
  for (std::size_t p = 0; p < P; ++p) out[best_a[p]].push_back(p);
  return canonical_partition(std::move(out));
}

}  // namespace detail

/// Groups the expanded paths into at most `clusters` blocks.
inline Partition choose_partition(const CompositionExpansion& expansion, const MatrixXd& samples, PartitionMethod method,
                                  std::size_t clusters, unsigned workers = 1) {
  if (clusters == 0) throw std::invalid_argument("need at least one cluster");
  if (samples.rows() != expansion.dim() || samples.cols() == 0) throw std::invalid_argument("bad sample matrix");
  if (clusters >= expansion.size()) return singleton_partition(expansion.size());
  if (method == PartitionMethod::Exhaustive) {
    if (expansion.size() > 9 || clusters > 3) {
      throw std::invalid_argument("exhaustive partition search needs at most 9 paths and 3 clusters");
    }
    return detail::exhaustive(expansion, samples, clusters, workers);
  }
  return detail::greedy_affine(expansion, samples, clusters, workers);
}

using Evaluable = std::function<VectorXd(const VectorXd&)>;

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

inline McEstimate summarize(const std::vector<double>& values) {
  McEstimate out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
  return out;
}

/// Mean and standard error of ||student(z) - target(z)||^2 over the columns of `samples`.
inline McEstimate mc_distillation_loss(const Evaluable& student, const Evaluable& target, const MatrixXd& samples,
                                       unsigned workers = 1) {
  const auto n = static_cast<std::size_t>(samples.cols());
  if (n < 2) throw std::invalid_argument("Monte-Carlo loss needs n >= 2");
  std::vector<double> loss(n);
  parallel_for((n + detail::kFitChunk - 1) / detail::kFitChunk, workers, [&](std::size_t c) {
    const std::size_t end = std::min(n, (c + 1) * detail::kFitChunk);
    for (std::size_t i = c * detail::kFitChunk; i < end; ++i) {
      const VectorXd z = samples.col(static_cast<Eigen::Index>(i));
      loss[i] = (student(z) - target(z)).squaredNorm();
    }
  });
  return summarize(loss);
}

/// max ||op(z + delta) - op(z)|| / ||delta|| over random pairs with ||delta|| = scale; a lower estimate.
inline double estimate_lipschitz(const Evaluable& op, const MatrixXd& base, std::size_t pairs, double scale,
                                 std::uint64_t seed) {
  if (pairs == 0) throw std::invalid_argument("need at least one pair");
  if (!(scale > 0.0)) throw std::invalid_argument("perturbation scale must be positive");
  if (base.cols() == 0) throw std::invalid_argument("need base points");
  std::mt19937_64 rng(stream_seed(seed, 0x11b));
  std::normal_distribution<double> normal;
  double best = 0.0;
  VectorXd delta(base.rows());
  for (std::size_t i = 0; i < pairs; ++i) {
    const VectorXd z = base.col(static_cast<Eigen::Index>(i % static_cast<std::size_t>(base.cols())));
    do {
      for (Eigen::Index j = 0; j < delta.size(); ++j) delta(j) = normal(rng);
    } while (delta.norm() == 0.0);
    delta *= scale / delta.norm();
    best = std::max(best, (op(z + delta) - op(z)).norm() / delta.norm());
  }
  return best;
}

}  // namespace merge_planner::gmm
