#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "merge_planner/linear_op.hpp"
#include "merge_planner/verification/oracles.hpp"

using namespace merge_planner;

TEST(SingleStep, LastStepIsSigmaBefore) {
  const auto s = make_cosine_schedule(8);
  const auto op = single_step_operator(s, DiagGaussian({0.3, 1.0, 7.0}), 8);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(op[i], s.sigma(7));
  EXPECT_EQ(op.interval(), (StepInterval{8, 8}));
}

TEST(SingleStep, ZeroVarianceRatio) {
  const auto s = make_cosine_schedule(10);
  for (int t = 1; t <= 10; ++t) EXPECT_DOUBLE_EQ(single_step_operator(s, DiagGaussian({0.0}), t)[0], s.sigma(t - 1) / s.sigma(t));
}

TEST(SingleStep, UnitVarianceIsCosineOfAngle) {
  const auto s = make_cosine_schedule(32);
  EXPECT_NEAR(single_step_operator(s, DiagGaussian({1.0}), 5)[0], std::cos(std::numbers::pi / 64), 1e-15);
  EXPECT_NEAR(single_step_operator(s, DiagGaussian({1.0}), 5)[0], 0.998795, 1e-6);
}

TEST(SingleStep, RejectsStepOutOfRange) {
  const auto s = make_cosine_schedule(4);
  EXPECT_THROW(single_step_operator(s, DiagGaussian({1.0}), 0), std::out_of_range);
  EXPECT_THROW(single_step_operator(s, DiagGaussian({1.0}), 5), std::out_of_range);
}

TEST(SingleStep, ProjectionIdentity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  const auto s = make_cosine_schedule(40);
  for (int rep = 0; rep < 200; ++rep) {
    const double l = u(rng);
    const int t = 1 + static_cast<int>(rng() % 40);
    const auto v0 = signal_noise_vector(s, t - 1, l), v1 = signal_noise_vector(s, t, l);
    EXPECT_NEAR(single_step_operator(s, DiagGaussian({l}), t)[0], v0.dot(v1) / v1.squared_norm(), 1e-14);
  }
}

TEST(DiagGaussian, SortsDescendingAndRejectsNegative) {
  EXPECT_EQ(DiagGaussian({0.5, 2.0, 1.0}).lambdas(), (std::vector<double>{2.0, 1.0, 0.5}));
  EXPECT_THROW(DiagGaussian({-1.0}), std::invalid_argument);
}

TEST(Composite, SingleIntervalEqualsStep) {
  const auto s = make_cosine_schedule(6);
  const DiagGaussian g({0.4, 3.0});
  EXPECT_EQ(composite_operator(s, g, 3, 3), single_step_operator(s, g, 3));
}

TEST(Composite, CosineFourUnitVariance) {
  const auto s = make_cosine_schedule(4);
  EXPECT_NEAR(composite_operator(s, DiagGaussian({1.0}), 1, 4)[0], std::pow(std::cos(std::numbers::pi / 8), 4), 1e-15);
  EXPECT_NEAR(composite_operator(s, DiagGaussian({1.0}), 1, 4)[0], 0.72856, 1e-5);
}

TEST(Composite, RejectsBadInterval) {
  const auto s = make_cosine_schedule(4);
  EXPECT_THROW(composite_operator(s, DiagGaussian({1.0}), 3, 2), std::out_of_range);
}

TEST(Contraction, ZeroVarianceHasZeroSlack) {
  const auto cert = contraction_certificate(make_cosine_schedule(32), DiagGaussian({0.0}));
  EXPECT_EQ(cert[0].composite, 0.0);
  EXPECT_EQ(cert[0].slack, 0.0);
  EXPECT_TRUE(cert[0].holds);
}

TEST(Contraction, StrictForPositiveVariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1e-3, 20.0);
  for (int T : {1, 2, 5, 32, 64, 200}) {
    const auto s = make_cosine_schedule(T);
    for (int rep = 0; rep < 20; ++rep) {
      for (const auto& e : contraction_certificate(s, DiagGaussian({u(rng)}))) {
        EXPECT_LT(e.composite, e.bound);
        EXPECT_GT(e.slack, 0.0);
      }
    }
  }
  const auto unit = contraction_certificate(make_cosine_schedule(32), DiagGaussian({1.0}));
  EXPECT_NEAR(unit[0].composite, std::pow(std::cos(std::numbers::pi / 64), 32), 1e-14);
}

TEST(Shrinkage, Limits) {
  const auto s = make_cosine_schedule(8);
  const DiagGaussian g({0.2, 1.0, 4.0});
  const auto none = shrinkage(s, g, 0.0);
  const auto lots = shrinkage(s, g, 1e3);
  const auto unit = shrinkage(s, DiagGaussian({1.0}), 2.5);
  for (int t = 1; t <= 8; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(none.gamma(t, i), 1.0);
      EXPECT_LT(lots.gamma(t, i), 1e-100);
    }
    EXPECT_NEAR(unit.gamma(t, 0), std::exp(-5.0), 1e-15);
  }
  EXPECT_THROW(shrinkage(s, g, -1.0), std::invalid_argument);
}

TEST(Shrinkage, NonIncreasingInTrainingTime) {
  const auto s = make_cosine_schedule(8);
  const DiagGaussian g({0.2, 4.0});
  const auto a = shrinkage(s, g, 1.0), b = shrinkage(s, g, 2.0);
  for (int t = 1; t <= 8; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_LE(b.gamma(t, i), a.gamma(t, i));
      EXPECT_GT(b.gamma(t, i), 0.0);
    }
  }
}

TEST(GradientFlow, Examples) {
  const std::vector<double> grid{0.0, 0.5, 50.0};
  const auto a = gradient_flow_trajectory(0.0, 1.0, 1.0, grid);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_NEAR(a[1], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(a[2], 0.0, 1e-15);
  EXPECT_THROW(gradient_flow_trajectory(0.0, 1.0, 0.0, grid), std::invalid_argument);
  const std::vector<double> bad{1.0, 0.5};
  EXPECT_THROW(gradient_flow_trajectory(0.0, 1.0, 1.0, bad), std::invalid_argument);
}

TEST(GradientFlow, MatchesRungeKuttaOnRandomTriples) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.5 * i);
  for (int rep = 0; rep < 100; ++rep) {
    const double rate = 0.01 + 3.0 * u(rng), init = 4.0 * u(rng) - 2.0, target = 4.0 * u(rng) - 2.0;
    const auto exact = gradient_flow_trajectory(target, init, rate, grid);
    const auto rk = verification::rk4_gradient_flow(target, init, rate, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) ASSERT_NEAR(exact[i], rk[i], 1e-8);
  }
}

TEST(Merge, Examples) {
  const DiagOperator l({0.9}, {1, 1}), r({0.8}, {2, 2});
  EXPECT_NEAR(merge(l, r, ShrinkageProfile::from_values(2, 1, {0.3, 0.5}))[0], 0.76, 1e-15);
  EXPECT_DOUBLE_EQ(merge(l, r, ShrinkageProfile::from_values(2, 1, {0.3, 0.0}))[0], 0.72);
  EXPECT_EQ(merge(l, r, ShrinkageProfile::from_values(2, 1, {0.3, 1.0}))[0], 0.8);
  EXPECT_EQ(merge(l, r, ShrinkageProfile::from_values(2, 1, {0.3, 1.0})).interval(), (StepInterval{1, 2}));
}

TEST(Merge, UsesEndTimeShrinkage) {
  const DiagOperator a({0.5}, {1, 2}), b({0.7}, {3, 3});
  const auto p = ShrinkageProfile::from_values(3, 1, {0.9, 0.1, 0.25});
  EXPECT_NEAR(merge(a, b, p)[0], 0.75 * 0.35 + 0.25 * 0.7, 1e-15);
}

TEST(Merge, RejectsNonContiguousOrMismatched) {
  const auto p = ShrinkageProfile::from_values(3, 1, {0.5, 0.5, 0.5});
  EXPECT_THROW(merge(DiagOperator({0.5}, {1, 1}), DiagOperator({0.5}, {3, 3}), p), std::invalid_argument);
  const auto p2 = ShrinkageProfile::from_values(2, 2, {0.5, 0.5, 0.5, 0.5});
  EXPECT_THROW(merge(DiagOperator({0.5}, {1, 1}), DiagOperator({0.5, 0.1}, {2, 2}), p2), std::invalid_argument);
}

TEST(Merge, StaysBetweenCompositionAndRight) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 500; ++rep) {
    const double x = u(rng), y = u(rng), g = u(rng) / 2.0;
    const double m = merge(DiagOperator({x}, {1, 1}), DiagOperator({y}, {2, 2}), ShrinkageProfile::from_values(2, 1, {0.5, g}))[0];
    EXPECT_GE(m, std::min(x * y, y) - 1e-15);
    EXPECT_LE(m, std::max(x * y, y) + 1e-15);
  }
}

TEST(DirectMerge, Examples) {
  const auto s = make_cosine_schedule(2);
  const DiagGaussian g({1.0});
  const auto shrink = ShrinkageProfile::from_values(2, 1, {0.5, 0.5});
  const double a1 = single_step_operator(s, g, 1)[0], a2 = single_step_operator(s, g, 2)[0];
  EXPECT_NEAR(direct_merge(s, g, shrink, 1, 2)[0], 0.5 * a1 * a2 + 0.5 * a2, 1e-15);
  EXPECT_EQ(direct_merge(s, g, shrink, 2, 2), single_step_operator(s, g, 2));
  EXPECT_THROW(direct_merge(s, g, shrink, 2, 1), std::out_of_range);
}

TEST(Surrogate, LowVarianceEqualsComposite) {
  const auto s = make_cosine_schedule(16);
  const DiagGaussian g({1.0, 0.7, 0.1});
  EXPECT_EQ(surrogate_target(s, g).entries(), composite_operator(s, g, 1, 16).entries());
}

TEST(Surrogate, HighVarianceClampsContractingFactors) {
  const auto s = make_cosine_schedule(16);
  const DiagGaussian g({3.0});
  double expected = 1.0;
  for (int t = 1; t <= 16; ++t) {
    const double a = single_step_operator(s, g, t)[0];
    expected *= a >= 1.0 ? a : 1.0;
  }
  EXPECT_LT(single_step_operator(s, g, 16)[0], 1.0);
  EXPECT_DOUBLE_EQ(surrogate_target(s, g)[0], expected);
  EXPECT_GE(surrogate_target(s, g)[0], composite_operator(s, g, 1, 16)[0]);
}

TEST(W2, Examples) {
  EXPECT_EQ(w2_objective(DiagOperator({0.3, 0.2}, {1, 4}), DiagOperator({0.3, 0.2}, {1, 4})), 0.0);
  EXPECT_NEAR(w2_objective(DiagOperator({0.9}, {1, 4}), DiagOperator({1.0}, {1, 4})), 0.01, 1e-15);
  EXPECT_EQ(w2_objective(DiagOperator({2.0, 1.0}, {1, 4}), DiagOperator({1.0, 1.0}, {1, 4})), 1.0);
  EXPECT_THROW(w2_objective(DiagOperator({2.0}, {1, 4}), DiagOperator({1.0, 1.0}, {1, 4})), std::invalid_argument);
}

TEST(Covariance, DiagonalInput) {
  Eigen::MatrixXd sigma = Eigen::Vector3d(1.0, 3.0, 2.0).asDiagonal();
  const auto cb = diagonalize_covariance(sigma);
  EXPECT_EQ(cb.lambda, (std::vector<double>{3.0, 2.0, 1.0}));
  EXPECT_NEAR((cb.basis.cwiseAbs().colwise().sum().array() - 1.0).abs().maxCoeff(), 0.0, 1e-14);
}

TEST(Covariance, TwoByTwo) {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2, 1, 1, 2;
  const auto cb = diagonalize_covariance(sigma);
  EXPECT_NEAR(cb.lambda[0], 3.0, 1e-14);
  EXPECT_NEAR(cb.lambda[1], 1.0, 1e-14);
}

TEST(Covariance, RandomReconstructionAndErrors) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  Eigen::MatrixXd B(5, 5);
  for (Eigen::Index i = 0; i < 25; ++i) B(i / 5, i % 5) = n(rng);
  const Eigen::MatrixXd sigma = B * B.transpose();
  const auto cb = diagonalize_covariance(sigma);
  Eigen::VectorXd l = Eigen::Map<const Eigen::VectorXd>(cb.lambda.data(), 5);
  EXPECT_LE((cb.basis * l.asDiagonal() * cb.basis.transpose() - sigma).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(std::is_sorted(cb.lambda.rbegin(), cb.lambda.rend()));
  Eigen::MatrixXd asym = sigma;
  asym(0, 1) += 1e-3;
  EXPECT_THROW(diagonalize_covariance(asym), std::invalid_argument);
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  EXPECT_THROW(diagonalize_covariance(indefinite), std::invalid_argument);
}

TEST(Covariance, ObjectiveInvariantUnderRotation) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n;
  Eigen::MatrixXd B(4, 4);
  for (Eigen::Index i = 0; i < 16; ++i) B(i / 4, i % 4) = n(rng);
  const Eigen::MatrixXd sigma = B * B.transpose() / 4.0;
  const auto cb = diagonalize_covariance(sigma);
  const auto s = make_cosine_schedule(8);
  const DiagGaussian g(cb.lambda);
  const auto shrink = shrinkage(s, g, 3.2);
  const auto cand = direct_merge(s, g, shrink, 1, 8);
  const auto target = surrogate_target(s, g);
  const double diag_obj = w2_objective(cand, target);
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(B).householderQ();
  const Eigen::MatrixXd U = Q * cb.basis;
  const double full_obj = (to_full_matrix(cand, U) - to_full_matrix(target, U)).squaredNorm();
  EXPECT_NEAR(diag_obj, full_obj, 1e-10);
}

TEST(LinearCsv, RoundTrips) {
  const DiagOperator op({0.1234567890123456789, 2.0 / 3.0}, {2, 5});
  std::istringstream in(operator_to_csv(op));
  EXPECT_EQ(operator_from_csv(in, {2, 5}), op);
  const auto p = shrinkage(make_cosine_schedule(5), DiagGaussian({0.3, 2.0}), 1.7);
  std::istringstream pin(shrinkage_to_csv(p));
  const auto back = shrinkage_from_csv(pin, 5, 2);
  for (int t = 1; t <= 5; ++t) {
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back.gamma(t, i), p.gamma(t, i));
  }
}

TEST(Threshold, CosineThirtyTwo) {
  const double thr = amplification_threshold(make_cosine_schedule(32));
  EXPECT_GT(thr, 2.0);
  EXPECT_LT(thr, 5.0);
}
