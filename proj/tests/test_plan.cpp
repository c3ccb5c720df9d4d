#include <random>
#include <set>

#include <gtest/gtest.h>

#include "merge_planner/plan.hpp"
#include "merge_planner/verification/oracles.hpp"

using namespace merge_planner;

namespace {

int covered_steps(const PlanNode& n) {
  if (n.kind == NodeKind::Binary) return covered_steps(*n.left) + covered_steps(*n.right);
  return n.interval.length();
}

void collect_binary(const PlanNode& n, std::vector<const PlanNode*>& out) {
  if (n.kind != NodeKind::Binary) return;
  out.push_back(&n);
  collect_binary(*n.left, out);
  collect_binary(*n.right, out);
}

}  // namespace

TEST(Canonical, Vanilla) {
  EXPECT_EQ(plan_vanilla(1).to_text(), "(1:1)");
  EXPECT_EQ(plan_vanilla(3).to_text(), "(1:3 oneshot)");
  EXPECT_EQ(plan_vanilla(3).label(), PlanLabel::Vanilla);
}

TEST(Canonical, Progressive) {
  EXPECT_EQ(plan_progressive(2).to_text(), "((1:1)(2:2))");
  EXPECT_EQ(plan_progressive(4).to_text(), "(((1:1)(2:2))((3:3)(4:4)))");
  for (int T : {1, 2, 4, 8, 16, 32}) EXPECT_EQ(merge_depth(*plan_progressive(T).root()), static_cast<int>(std::log2(T)));
  EXPECT_THROW(plan_progressive(6), std::invalid_argument);
}

TEST(Canonical, SequentialBoot) {
  EXPECT_EQ(plan_sequential_boot(3).to_text(), "((1:1)((2:2)(3:3)))");
  EXPECT_EQ(plan_sequential_boot(1).to_text(), "(1:1)");
  std::vector<const PlanNode*> nodes;
  collect_binary(*plan_sequential_boot(9).root(), nodes);
  EXPECT_EQ(nodes.size(), 8u);
  for (const auto* n : nodes) {
    EXPECT_EQ(n->right->interval.last, 9);
    EXPECT_EQ(n->left->kind, NodeKind::Leaf);
  }
}

TEST(Canonical, SequentialConsistency) {
  EXPECT_EQ(plan_sequential_consistency(3).to_text(), "(((1:1)(2:2))(3:3))");
  EXPECT_EQ(plan_sequential_consistency(1).to_text(), "(1:1)");
  std::vector<const PlanNode*> nodes;
  collect_binary(*plan_sequential_consistency(7).root(), nodes);
  for (const auto* n : nodes) {
    EXPECT_EQ(n->left->interval.first, 1);
    EXPECT_EQ(n->right->kind, NodeKind::Leaf);
  }
}

TEST(Serialization, RoundTrip) {
  for (const auto& text : {"(1:4 oneshot)", "((1:1)((2:2)(3:3)))", "((1:2 oneshot)((3:3)(4:5 oneshot)))", "(1:1)"}) {
    EXPECT_EQ(parse_plan(text).to_text(), text);
  }
  for (const auto& p : enumerate_plans(5)) EXPECT_EQ(parse_plan(p.to_text()), p);
}

TEST(Serialization, RejectsMalformed) {
  for (const auto& text : {"", "(1:2)", "((1:1)(3:3))", "(2:2)", "((1:1)(2:2)", "(1:3 twoshot)", "((1:1)(2:2))x", "(0:0)"}) {
    EXPECT_THROW(parse_plan(text), std::invalid_argument) << text;
  }
}

TEST(Evaluate, VanillaEqualsDirectMerge) {
  const auto s = make_cosine_schedule(7);
  const DiagGaussian g({0.4, 2.2});
  const auto shrink = shrinkage(s, g, 3.2);
  EXPECT_EQ(evaluate_plan(plan_vanilla(7), s, g, shrink), direct_merge(s, g, shrink, 1, 7));
}

TEST(Evaluate, RejectsWrongLength) {
  const auto s = make_cosine_schedule(4);
  const DiagGaussian g({1.0});
  EXPECT_THROW(evaluate_plan(plan_vanilla(3), s, g, shrinkage(s, g, 1.0)), std::invalid_argument);
}

TEST(Evaluate, NonnegativeAndCoversRoot) {
  const auto s = make_cosine_schedule(5);
  const DiagGaussian g({3.0, 1.0, 0.0});
  const auto shrink = shrinkage(s, g, 1.6);
  for (const auto& p : enumerate_plans(5)) {
    const auto op = evaluate_plan(p, s, g, shrink);
    EXPECT_EQ(op.interval(), (StepInterval{1, 5}));
    for (double e : op.entries()) EXPECT_GE(e, 0.0);
  }
}

TEST(Evaluate, ThreeStepOrderingAtUnitVariance) {
  const auto s = make_cosine_schedule(3);
  const DiagGaussian g({1.0});
  const auto shrink = shrinkage(s, g, 6.4);
  const double boot = evaluate_plan(plan_sequential_boot(3), s, g, shrink)[0];
  const double cons = evaluate_plan(plan_sequential_consistency(3), s, g, shrink)[0];
  const double van = evaluate_plan(plan_vanilla(3), s, g, shrink)[0];
  const double target = surrogate_target(s, g)[0];
  EXPECT_LE(boot, cons);
  EXPECT_LE(boot, van);
  EXPECT_GT(boot, target);
}

TEST(Evaluate, BootBelowEverySplitPlanAtThreeSteps) {
  const auto s = make_cosine_schedule(3);
  const DiagGaussian g({0.6});
  const std::vector<double> A{single_step_operator(s, g, 1)[0], single_step_operator(s, g, 2)[0], single_step_operator(s, g, 3)[0]};
  for (double gm = 0.05; gm < 1.0; gm += 0.1) {
    for (double ge = 0.05; ge < 1.0; ge += 0.1) {
      const auto shrink = ShrinkageProfile::from_values(3, 1, {0.5, gm, ge});
      const double boot = evaluate_plan(plan_sequential_boot(3), s, g, shrink)[0];
      const double cons = evaluate_plan(plan_sequential_consistency(3), s, g, shrink)[0];
      EXPECT_LE(boot, cons);
      for (const auto& p : enumerate_plans(3)) {
        if (p.root()->kind == NodeKind::Binary) EXPECT_LE(boot, evaluate_plan(p, s, g, shrink)[0] + 1e-16);
      }
    }
  }
}

TEST(Oracle, ThreeStepClosedFormMatchesLibrary) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 300; ++rep) {
    const double a1 = u(rng), a2 = u(rng), a3 = u(rng), g = u(rng) / 2, gp = u(rng) / 2;
    const auto lib = verification::three_step_outcomes(a1, a2, a3, g, gp);
    const auto cf = verification::three_step_closed_form(a1, a2, a3, g, gp);
    EXPECT_NEAR(lib.vanilla, cf.vanilla, 1e-14);
    EXPECT_NEAR(lib.boot, cf.boot, 1e-14);
    EXPECT_NEAR(lib.consistency, cf.consistency, 1e-14);
  }
}

TEST(Oracle, StartTimeShrinkageIsDetected) {
  // gamma read at the start of each block instead of its end
  const double a1 = 0.6, a2 = 0.7, a3 = 0.8, g_end = 0.3, g_mid = 0.6, g_first = 0.9;
  const auto cf = verification::three_step_closed_form(a1, a2, a3, g_end, g_mid);
  const double tampered_boot = ((1 - g_mid) * a2 * a3 + g_mid * a3) * ((1 - g_first) * a1 + g_first);
  EXPECT_GT(std::abs(tampered_boot - cf.boot), 1e-3);
}

TEST(Enumerate, CountsMatchRecurrence) {
  const std::vector<std::uint64_t> expected{1, 2, 5, 15, 51, 188, 731, 2950};
  for (int T = 1; T <= 8; ++T) {
    EXPECT_EQ(count_plans(T), expected[static_cast<std::size_t>(T - 1)]);
    EXPECT_EQ(verification::count_plans_by_enumeration(T), count_plans(T));
  }
}

TEST(Enumerate, PlansAreDistinctAndValid) {
  const auto plans = enumerate_plans(6);
  std::set<std::string> seen;
  for (const auto& p : plans) {
    EXPECT_TRUE(seen.insert(p.to_text()).second);
    EXPECT_EQ(covered_steps(*p.root()), 6);
    EXPECT_EQ(p.steps(), 6);
  }
  EXPECT_EQ(seen.size(), 188u);
}

TEST(Enumerate, TwoShapesEvaluateIdentically) {
  const auto s = make_cosine_schedule(2);
  const DiagGaussian g({1.7, 0.2});
  const auto shrink = shrinkage(s, g, 2.0);
  const auto plans = enumerate_plans(2);
  ASSERT_EQ(plans.size(), 2u);
  const auto a = evaluate_plan(plans[0], s, g, shrink), b = evaluate_plan(plans[1], s, g, shrink);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(a[i], b[i], 1e-16);
}

TEST(Enumerate, GuardsLargeT) { EXPECT_THROW(enumerate_plans(kMaxEnumerationSteps + 1), std::invalid_argument); }
