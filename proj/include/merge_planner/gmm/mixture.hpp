#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "merge_planner/parallel.hpp"
#include "merge_planner/schedule.hpp"

namespace merge_planner::gmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPsdTolerance = -1e-10;
inline constexpr double kWeightSumTolerance = 1e-12;

/// p_0 = sum_k pi_k N(mu_k, Lambda_k). Each covariance is eigendecomposed once at construction.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> pi, std::vector<VectorXd> mu, std::vector<MatrixXd> lambda)
      : pi_(std::move(pi)), mu_(std::move(mu)), lambda_(std::move(lambda)) {
    const std::size_t K = pi_.size();
    if (K == 0) throw std::invalid_argument("mixture needs K >= 1");
    if (mu_.size() != K || lambda_.size() != K) throw std::invalid_argument("mixture: pi, mu, Lambda counts differ");
    const Eigen::Index d = mu_.front().size();
    if (d == 0) throw std::invalid_argument("mixture dimension must be >= 1");
    double sum = 0.0;
    for (double p : pi_) {
      if (!(p > 0.0)) throw std::invalid_argument("mixture weights must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) throw std::invalid_argument("mixture weights must sum to 1");
    basis_.reserve(K);
    eig_.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
      if (mu_[k].size() != d || lambda_[k].rows() != d || lambda_[k].cols() != d) {
        throw std::invalid_argument("mixture component " + std::to_string(k) + " has the wrong dimension");
      }
      if (!mu_[k].allFinite() || !lambda_[k].allFinite()) throw std::invalid_argument("mixture parameters must be finite");
      if ((lambda_[k] - lambda_[k].transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
        throw std::invalid_argument("covariance " + std::to_string(k) + " is not symmetric");
      }
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (lambda_[k] + lambda_[k].transpose()));
      if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
      if (es.eigenvalues().minCoeff() < kPsdTolerance) {
        throw std::invalid_argument("covariance " + std::to_string(k) + " is not positive semidefinite");
      }
      basis_.push_back(es.eigenvectors());
      eig_.push_back(es.eigenvalues().cwiseMax(0.0));
    }
  }

  std::size_t components() const { return pi_.size(); }
  Eigen::Index dim() const { return mu_.front().size(); }
  double pi(std::size_t k) const { return pi_[k]; }
  const VectorXd& mu(std::size_t k) const { return mu_[k]; }
  const MatrixXd& lambda(std::size_t k) const { return lambda_[k]; }
  const std::vector<double>& weights() const { return pi_; }

  /// Lambda_k = U_k diag(e_k) U_k^T.
  const MatrixXd& basis(std::size_t k) const { return basis_[k]; }
  const VectorXd& eigenvalues(std::size_t k) const { return eig_[k]; }

 private:
  std::vector<double> pi_;
  std::vector<VectorXd> mu_;
  std::vector<MatrixXd> lambda_;
  std::vector<MatrixXd> basis_;
  std::vector<VectorXd> eig_;
};

/// K equal-weight isotropic components with means evenly spaced on a circle in R^2.
inline GaussianMixture make_circle_mixture(std::size_t K, double radius, double iso_std) {
  if (K == 0) throw std::invalid_argument("circle mixture needs K >= 1");
  if (!(radius >= 0.0) || !(iso_std >= 0.0)) throw std::invalid_argument("radius and std must be nonnegative");
  std::vector<double> pi(K, 1.0 / static_cast<double>(K));
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> lambda;
  for (std::size_t k = 0; k < K; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
    mu.push_back((VectorXd(2) << radius * std::cos(angle), radius * std::sin(angle)).finished());
    lambda.push_back(iso_std * iso_std * MatrixXd::Identity(2, 2));
  }
  // Equal weights may not sum to exactly 1 in floating point; renormalize the last one.
  double head = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) head += pi[k];
  pi.back() = 1.0 - head;
  return GaussianMixture(std::move(pi), std::move(mu), std::move(lambda));
}

/**
 * Posterior component probabilities of the noisy marginal at step t:
 * gamma_k proportional to pi_k N(z; alpha_t mu_k, alpha_t^2 Lambda_k + sigma_t^2 I).
 * Per-component whitening data is precomputed so evaluation is allocation-light.
 */
class PosteriorModel {
 public:
  PosteriorModel(const GaussianMixture& mix, const NoiseSchedule& sched, int t)
      : alpha_(sched.alpha(t)), log_pi_(mix.components()), center_(mix.components()), basis_(mix.components()),
        inv_var_(mix.components()), log_det_(mix.components()) {
    if (t < 1 || t > sched.steps()) throw std::out_of_range("posterior step out of range");
    const double s2 = sched.sigma(t) * sched.sigma(t);
    for (std::size_t k = 0; k < mix.components(); ++k) {
      const VectorXd var = (alpha_ * alpha_) * mix.eigenvalues(k).array() + s2;
      log_pi_[k] = std::log(mix.pi(k));
      center_[k] = alpha_ * mix.mu(k);
      basis_[k] = mix.basis(k);
      inv_var_[k] = var.cwiseInverse();
      log_det_[k] = var.array().log().sum();
    }
  }

  std::size_t components() const { return log_pi_.size(); }

  void weights(const VectorXd& z, VectorXd& out) const {
    const std::size_t K = components();
    out.resize(static_cast<Eigen::Index>(K));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const VectorXd w = basis_[k].transpose() * (z - center_[k]);
      const double quad = w.cwiseAbs2().dot(inv_var_[k]);
      const double lp = log_pi_[k] - 0.5 * (log_det_[k] + quad);
      out(static_cast<Eigen::Index>(k)) = lp;
      mx = std::max(mx, lp);
    }
    out = (out.array() - mx).exp();
    out /= out.sum();
  }

 private:
  double alpha_;
  std::vector<double> log_pi_;
  std::vector<VectorXd> center_;
  std::vector<MatrixXd> basis_;
  std::vector<VectorXd> inv_var_;
  std::vector<double> log_det_;
};

inline VectorXd posterior_weights(const GaussianMixture& mix, const NoiseSchedule& sched, int t, const VectorXd& z) {
  VectorXd out;
  PosteriorModel(mix, sched, t).weights(z, out);
  return out;
}

/// E[x_0 | z_t] = sum_k gamma_k (mu_k + alpha_t Lambda_k (alpha_t^2 Lambda_k + sigma_t^2 I)^{-1} (z - alpha_t mu_k)).
inline VectorXd optimal_mixture_denoiser(const GaussianMixture& mix, const NoiseSchedule& sched, int t, const VectorXd& z) {
  const VectorXd gamma = posterior_weights(mix, sched, t, z);
  const double a = sched.alpha(t);
  const double s2 = sched.sigma(t) * sched.sigma(t);
  VectorXd out = VectorXd::Zero(mix.dim());
  for (std::size_t k = 0; k < mix.components(); ++k) {
    const auto& U = mix.basis(k);
    const VectorXd gain = (a * mix.eigenvalues(k).array()) / (a * a * mix.eigenvalues(k).array() + s2);
    const VectorXd est = mix.mu(k) + U * gain.asDiagonal() * (U.transpose() * (z - a * mix.mu(k)));
    out += gamma(static_cast<Eigen::Index>(k)) * est;
  }
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the `stream`-th independent RNG derived from a root seed.
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline constexpr std::size_t kSampleChunk = 4096;

/**
 * n ancestral samples from p_t (column-major d x n): draw a component, draw
 * x_0 from it, then z = alpha_t x_0 + sigma_t eps. Chunk c of 4096 columns
 * uses its own RNG stream, so output depends only on (seed, n).
 */
inline MatrixXd sample_marginal(const GaussianMixture& mix, const NoiseSchedule& sched, int t, std::size_t n,
                                std::uint64_t seed, unsigned workers = 1) {
  if (t < 0 || t > sched.steps()) throw std::out_of_range("sampling step out of range");
  const Eigen::Index d = mix.dim();
  const double a = sched.alpha(t), s = sched.sigma(t);
  std::vector<MatrixXd> scale(mix.components());
  for (std::size_t k = 0; k < mix.components(); ++k) {
    scale[k] = mix.basis(k) * mix.eigenvalues(k).cwiseSqrt().asDiagonal();
  }
  MatrixXd out(d, static_cast<Eigen::Index>(n));
  const std::size_t chunks = (n + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    std::mt19937_64 rng(stream_seed(seed, c));
    std::discrete_distribution<std::size_t> pick(mix.weights().begin(), mix.weights().end());
    std::normal_distribution<double> normal;
    VectorXd e0(d), e1(d);
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    for (std::size_t i = c * kSampleChunk; i < end; ++i) {
      const std::size_t k = pick(rng);
      for (Eigen::Index j = 0; j < d; ++j) e0(j) = normal(rng);
      for (Eigen::Index j = 0; j < d; ++j) e1(j) = normal(rng);
      out.col(static_cast<Eigen::Index>(i)) = a * (mix.mu(k) + scale[k] * e0) + s * e1;
    }
  });
  return out;
}

}  // namespace merge_planner::gmm
