#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <istream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "merge_planner/csv.hpp"
#include "merge_planner/schedule.hpp"

namespace merge_planner {

/// Closed step range [first, last] of reverse steps, 1-based.
struct StepInterval {
  int first = 1;
  int last = 1;

  int length() const { return last - first + 1; }
  friend bool operator==(const StepInterval&, const StepInterval&) = default;
};

inline std::string to_string(const StepInterval& iv) {
  return "(" + std::to_string(iv.first) + "," + std::to_string(iv.last) + ")";
}

/// Centered Gaussian with diagonal covariance; variances kept sorted non-increasing.
class DiagGaussian {
 public:
  explicit DiagGaussian(std::vector<double> lambda) : lambda_(std::move(lambda)) {
    if (lambda_.empty()) throw std::invalid_argument("DiagGaussian needs d >= 1");
    for (double v : lambda_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("variances must be finite and nonnegative");
    }
    std::sort(lambda_.begin(), lambda_.end(), std::greater<>());
  }

  std::size_t dim() const { return lambda_.size(); }
  double lambda(std::size_t i) const { return lambda_[i]; }
  const std::vector<double>& lambdas() const { return lambda_; }

 private:
  std::vector<double> lambda_;
};

/// (alpha_t sqrt(lambda_i), sigma_t): per-coordinate signal and noise strength at step t.
struct SignalNoiseVector {
  double signal = 0.0;
  double noise = 0.0;

  double dot(const SignalNoiseVector& o) const { return signal * o.signal + noise * o.noise; }
  double squared_norm() const { return dot(*this); }
};

inline SignalNoiseVector signal_noise_vector(const NoiseSchedule& sched, int t, double lambda) {
  return {sched.alpha(t) * std::sqrt(lambda), sched.sigma(t)};
}

/// Per-coordinate scale factors acting on z, tagged with the steps they cover.
class DiagOperator {
 public:
  DiagOperator(std::vector<double> entries, StepInterval interval)
      : entries_(std::move(entries)), interval_(interval) {
    if (entries_.empty()) throw std::invalid_argument("DiagOperator needs d >= 1");
    if (interval_.first < 1 || interval_.last < interval_.first) {
      throw std::invalid_argument("invalid operator interval " + to_string(interval_));
    }
  }

  std::size_t dim() const { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<double>& entries() const { return entries_; }
  const StepInterval& interval() const { return interval_; }

  friend bool operator==(const DiagOperator&, const DiagOperator&) = default;

 private:
  std::vector<double> entries_;
  StepInterval interval_;
};

/**
 * Shrinkage factors gamma_t^i = exp(-2 s ||v_t^i||^2) for t = 1..T, i = 1..d.
 *
 * gamma is the weight left on the student's initialization after training for
 * time s; gamma = 1 means the student never moved.
 */
class ShrinkageProfile {
 public:
  /// Explicit factors, row-major by step: values[(t-1)*d + i].
  static ShrinkageProfile from_values(int T, std::size_t d, std::vector<double> values, double s_train = 0.0) {
    if (T < 1 || d == 0) throw std::invalid_argument("shrinkage profile needs T >= 1 and d >= 1");
    if (values.size() != static_cast<std::size_t>(T) * d) throw std::invalid_argument("shrinkage value count != T*d");
    for (double g : values) {
      if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("shrinkage factors must lie in [0, 1]");
    }
    return ShrinkageProfile(T, d, s_train, std::move(values));
  }

  int steps() const { return T_; }
  std::size_t dim() const { return d_; }
  double s_train() const { return s_train_; }

  double gamma(int t, std::size_t i) const {
    if (t < 1 || t > T_) throw std::out_of_range("shrinkage step out of range");
    return gamma_[static_cast<std::size_t>(t - 1) * d_ + i];
  }

 private:
  ShrinkageProfile(int T, std::size_t d, double s, std::vector<double> g)
      : T_(T), d_(d), s_train_(s), gamma_(std::move(g)) {}

  int T_;
  std::size_t d_;
  double s_train_;
  std::vector<double> gamma_;
};

inline void check_step(const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.steps()) {
    throw std::out_of_range("step " + std::to_string(t) + " outside [1," + std::to_string(sched.steps()) + "]");
  }
}

inline void check_interval(const NoiseSchedule& sched, StepInterval iv) {
  if (iv.first < 1 || iv.last < iv.first || iv.last > sched.steps()) {
    throw std::out_of_range("interval " + to_string(iv) + " invalid for T=" + std::to_string(sched.steps()));
  }
}

/// DDIM step under the optimal Gaussian denoiser:
/// (a_{t-1} a_t l + s_{t-1} s_t) / (a_t^2 l + s_t^2) per coordinate.
inline DiagOperator single_step_operator(const NoiseSchedule& sched, const DiagGaussian& data, int t) {
  check_step(sched, t);
  const double a0 = sched.alpha(t - 1), a1 = sched.alpha(t);
  const double s0 = sched.sigma(t - 1), s1 = sched.sigma(t);
  std::vector<double> entries(data.dim());
  for (std::size_t i = 0; i < data.dim(); ++i) {
    const double lam = data.lambda(i);
    const double denom = a1 * a1 * lam + s1 * s1;
    if (!(denom > 0.0)) throw std::domain_error("degenerate single-step denominator at t=" + std::to_string(t));
    entries[i] = (a0 * a1 * lam + s0 * s1) / denom;
  }
  return DiagOperator(std::move(entries), {t, t});
}

/// Coordinate-wise product of the single-step operators over [t1, t2].
inline DiagOperator composite_operator(const NoiseSchedule& sched, const DiagGaussian& data, int t1, int t2) {
  check_interval(sched, {t1, t2});
  std::vector<double> prod = single_step_operator(sched, data, t1).entries();
  for (int t = t1 + 1; t <= t2; ++t) {
    const auto step = single_step_operator(sched, data, t);
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= step[i];
  }
  return DiagOperator(std::move(prod), {t1, t2});
}

struct ContractionEntry {
  double lambda;
  double composite;  // c_i, entry of the full-trajectory teacher operator
  double bound;      // sqrt(lambda_i)
  double slack;      // bound - composite
  bool holds;        // composite <= bound
};

inline std::vector<ContractionEntry> contraction_certificate(const NoiseSchedule& sched, const DiagGaussian& data) {
  const auto full = composite_operator(sched, data, 1, sched.steps());
  std::vector<ContractionEntry> out;
  out.reserve(data.dim());
  for (std::size_t i = 0; i < data.dim(); ++i) {
    const double bound = std::sqrt(data.lambda(i));
    out.push_back({data.lambda(i), full[i], bound, bound - full[i], full[i] <= bound});
  }
  return out;
}

inline ShrinkageProfile shrinkage(const NoiseSchedule& sched, const DiagGaussian& data, double s_train) {
  if (!(s_train >= 0.0)) throw std::invalid_argument("training time s must be nonnegative");
  const int T = sched.steps();
  const std::size_t d = data.dim();
  std::vector<double> g(static_cast<std::size_t>(T) * d);
  for (int t = 1; t <= T; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double norm2 = signal_noise_vector(sched, t, data.lambda(i)).squared_norm();
      g[static_cast<std::size_t>(t - 1) * d + i] = std::exp(-2.0 * s_train * norm2);
    }
  }
  return ShrinkageProfile::from_values(T, d, std::move(g), s_train);
}

/// Closed-form solution of da/ds = -2 rate (a - target), a(0) = init.
inline std::vector<double> gradient_flow_trajectory(double target, double init, double rate,
                                                    std::span<const double> s_grid) {
  if (!(rate > 0.0)) throw std::invalid_argument("gradient-flow rate must be positive");
  std::vector<double> out;
  out.reserve(s_grid.size());
  double prev = 0.0;
  for (double s : s_grid) {
    if (!(s >= prev)) throw std::invalid_argument("time grid must be nonnegative and increasing");
    prev = s;
    const double g = std::exp(-2.0 * rate * s);
    out.push_back((1.0 - g) * target + g * init);
  }
  return out;
}

namespace detail {
inline double merge_value(double left, double right, double gamma) {
  return (1.0 - gamma) * (left * right) + gamma * right;
}
}  // namespace detail

/**
 * Merge two adjacent blocks: (1 - g) * L * R + g * R with g taken at the END
 * step of the merged block.
 */
inline DiagOperator merge(const DiagOperator& left, const DiagOperator& right, const ShrinkageProfile& shrink) {
  if (left.dim() != right.dim() || left.dim() != shrink.dim()) throw std::invalid_argument("merge: dimension mismatch");
  if (left.interval().last + 1 != right.interval().first) {
    throw std::invalid_argument("merge: blocks " + to_string(left.interval()) + " and " + to_string(right.interval()) +
                                " are not contiguous");
  }
  const int end = right.interval().last;
  std::vector<double> out(left.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::merge_value(left[i], right[i], shrink.gamma(end, i));
  return DiagOperator(std::move(out), {left.interval().first, end});
}

/// One-shot merge of consecutive single-step operators: (1 - g) * prod + g * last, g at the last step.
inline DiagOperator direct_merge(const std::vector<DiagOperator>& steps, const ShrinkageProfile& shrink) {
  if (steps.empty()) throw std::invalid_argument("direct_merge: no steps");
  for (std::size_t k = 1; k < steps.size(); ++k) {
    if (steps[k].dim() != steps[0].dim()) throw std::invalid_argument("direct_merge: dimension mismatch");
    if (steps[k - 1].interval().last + 1 != steps[k].interval().first) {
      throw std::invalid_argument("direct_merge: steps are not contiguous");
    }
  }
  if (steps.size() == 1) return steps.front();
  const DiagOperator& last = steps.back();
  if (last.dim() != shrink.dim()) throw std::invalid_argument("direct_merge: dimension mismatch");
  std::vector<double> prod = steps.front().entries();
  for (std::size_t k = 1; k < steps.size(); ++k) {
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] *= steps[k][i];
  }
  const int end = last.interval().last;
  std::vector<double> out(prod.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = shrink.gamma(end, i);
    out[i] = (1.0 - g) * prod[i] + g * last[i];
  }
  return DiagOperator(std::move(out), {steps.front().interval().first, end});
}

/// One-shot merge of the raw single-step operators over [t1, t2].
inline DiagOperator direct_merge(const NoiseSchedule& sched, const DiagGaussian& data, const ShrinkageProfile& shrink,
                                 int t1, int t2) {
  check_interval(sched, {t1, t2});
  std::vector<DiagOperator> steps;
  steps.reserve(static_cast<std::size_t>(t2 - t1 + 1));
  for (int t = t1; t <= t2; ++t) steps.push_back(single_step_operator(sched, data, t));
  return direct_merge(steps, shrink);
}

/// Variance-corrected target: contracting factors are replaced by 1 in coordinates with lambda > 1.
inline DiagOperator surrogate_target(const NoiseSchedule& sched, const DiagGaussian& data) {
  const int T = sched.steps();
  std::vector<double> out(data.dim(), 1.0);
  for (int t = 1; t <= T; ++t) {
    const auto step = single_step_operator(sched, data, t);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const bool keep = data.lambda(i) <= 1.0 || step[i] >= 1.0;
      out[i] *= keep ? step[i] : 1.0;
    }
  }
  return DiagOperator(std::move(out), {1, T});
}

/// Squared W2 between centered diagonal Gaussians pushed through the two operators.
inline double w2_objective(const DiagOperator& candidate, const DiagOperator& target) {
  if (candidate.dim() != target.dim()) throw std::invalid_argument("w2_objective: dimension mismatch");
  if (!(candidate.interval() == target.interval())) throw std::invalid_argument("w2_objective: interval mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidate.dim(); ++i) {
    const double diff = target[i] - candidate[i];
    sum += diff * diff;
  }
  return sum;
}

/// Largest lambda_0(t) = s_t (s_t - s_{t-1}) / (a_t (a_{t-1} - a_t)) over t < T.
/// For lambda above it every single-step factor before the last one exceeds 1.
inline double amplification_threshold(const NoiseSchedule& sched) {
  double best = -std::numeric_limits<double>::infinity();
  for (int t = 1; t < sched.steps(); ++t) {
    const double v = sched.sigma(t) * (sched.sigma(t) - sched.sigma(t - 1)) /
                     (sched.alpha(t) * (sched.alpha(t - 1) - sched.alpha(t)));
    best = std::max(best, v);
  }
  return best;
}

struct CovarianceBasis {
  Eigen::MatrixXd basis;       // orthogonal U, columns are eigenvectors
  std::vector<double> lambda;  // non-increasing
};

/// Sigma = U diag(lambda) U^T via symmetric eigendecomposition.
inline CovarianceBasis diagonalize_covariance(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw std::invalid_argument("covariance must be square");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw std::invalid_argument("covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma + sigma.transpose()));
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::Index d = sigma.rows();
  if (eig.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("covariance is indefinite");

  // Eigen returns ascending order.
  CovarianceBasis out{Eigen::MatrixXd(d, d), std::vector<double>(static_cast<std::size_t>(d))};
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::Index src = d - 1 - k;
    out.basis.col(k) = eig.eigenvectors().col(src);
    out.lambda[static_cast<std::size_t>(k)] = std::max(0.0, eig.eigenvalues()(src));
  }
  return out;
}

/// U diag(entries) U^T: the operator expressed back in the original coordinates.
inline Eigen::MatrixXd to_full_matrix(const DiagOperator& op, const Eigen::MatrixXd& basis) {
  Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(op.entries().data(), static_cast<Eigen::Index>(op.dim()));
  return basis * diag.asDiagonal() * basis.transpose();
}

inline std::string operator_to_csv(const DiagOperator& op) {
  std::ostringstream out;
  out << "i,entry\n";
  for (std::size_t i = 0; i < op.dim(); ++i) out << (i + 1) << ',' << csv::format_double(op[i]) << '\n';
  return out.str();
}

inline DiagOperator operator_from_csv(std::istream& in, StepInterval interval) {
  const auto rows = csv::read_table(in, {"i", "entry"});
  std::vector<double> entries(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (csv::parse_int(rows[r][0]) != static_cast<long>(r + 1)) throw std::invalid_argument("operator CSV must list i = 1..d");
    entries[r] = csv::parse_double(rows[r][1]);
  }
  return DiagOperator(std::move(entries), interval);
}

inline std::string shrinkage_to_csv(const ShrinkageProfile& p) {
  std::ostringstream out;
  out << "t,i,gamma\n";
  for (int t = 1; t <= p.steps(); ++t) {
    for (std::size_t i = 0; i < p.dim(); ++i) out << t << ',' << (i + 1) << ',' << csv::format_double(p.gamma(t, i)) << '\n';
  }
  return out.str();
}

inline ShrinkageProfile shrinkage_from_csv(std::istream& in, int T, std::size_t d, double s_train = 0.0) {
  const auto rows = csv::read_table(in, {"t", "i", "gamma"});
  if (rows.size() != static_cast<std::size_t>(T) * d) throw std::invalid_argument("shrinkage CSV row count != T*d");
  std::vector<double> values(rows.size());
  for (const auto& row : rows) {
    const long t = csv::parse_int(row[0]);
    const long i = csv::parse_int(row[1]);
    if (t < 1 || t > T || i < 1 || i > static_cast<long>(d)) throw std::invalid_argument("shrinkage CSV index out of range");
    values[static_cast<std::size_t>(t - 1) * d + static_cast<std::size_t>(i - 1)] = csv::parse_double(row[2]);
  }
  return ShrinkageProfile::from_values(T, d, std::move(values), s_train);
}

}  // namespace merge_planner
