#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "merge_planner/schedule.hpp"

using namespace merge_planner;

namespace {

bool mentions(const std::vector<ScheduleViolation>& report, const std::string& needle, int index) {
  for (const auto& v : report) {
    if (v.message.find(needle) != std::string::npos && v.index == index) return true;
  }
  return false;
}

}  // namespace

TEST(CosineSchedule, TwoSteps) {
  const auto s = make_cosine_schedule(2);
  EXPECT_EQ(s.steps(), 2);
  EXPECT_EQ(s.alpha(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.7071067811865476);
  EXPECT_EQ(s.alpha(2), 0.0);
}

TEST(CosineSchedule, OneStepEndpoints) {
  const auto s = make_cosine_schedule(1);
  EXPECT_EQ(s.alphas(), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(s.sigmas(), (std::vector<double>{0.0, 1.0}));
}

TEST(CosineSchedule, MidpointOf32) {
  const auto s = make_cosine_schedule(32);
  EXPECT_NEAR(s.alpha(16), std::cos(std::numbers::pi / 4), 1e-15);
  EXPECT_NEAR(s.alpha(16), 0.70710678, 1e-8);
}

TEST(CosineSchedule, RejectsZero) { EXPECT_THROW(make_cosine_schedule(0), std::invalid_argument); }

TEST(CosineSchedule, ValidForAllSizesUpTo1024) {
  for (int T = 1; T <= 1024; ++T) {
    const auto s = make_cosine_schedule(T);
    ASSERT_TRUE(is_valid_schedule(s)) << "T=" << T;
    for (int t = 1; t <= T; ++t) {
      ASSERT_GT(s.alpha(t - 1) - s.alpha(t), 0.0);
      ASSERT_GT(s.sigma(t) - s.sigma(t - 1), 0.0);
    }
  }
}

TEST(ValidateSchedule, CosineIsClean) { EXPECT_TRUE(validate_schedule(make_cosine_schedule(32)).empty()); }

TEST(ValidateSchedule, BadAlphaZero) {
  auto a = make_cosine_schedule(4).alphas();
  auto s = make_cosine_schedule(4).sigmas();
  a[0] = 0.9;
  s[0] = std::sqrt(1 - 0.81);
  const auto report = validate_schedule(NoiseSchedule(a, s));
  EXPECT_TRUE(mentions(report, "boundary alpha[0]≠1", 0));
}

TEST(ValidateSchedule, NonMonotoneAtThree) {
  auto a = make_cosine_schedule(6).alphas();
  a[3] = a[2] + 0.01;
  std::vector<double> s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = std::sqrt(1 - a[i] * a[i]);
  const auto report = validate_schedule(NoiseSchedule(a, s));
  EXPECT_TRUE(mentions(report, "monotonicity", 3));
  EXPECT_THROW(require_valid_schedule(NoiseSchedule(a, s)), std::invalid_argument);
}

TEST(ValidateSchedule, NormViolationReportsMagnitude) {
  auto a = make_cosine_schedule(3).alphas();
  auto s = make_cosine_schedule(3).sigmas();
  s[1] += 1e-6;
  const auto report = validate_schedule(NoiseSchedule(a, s));
  ASSERT_FALSE(report.empty());
  EXPECT_EQ(report.front().index, 1);
  EXPECT_GT(report.front().magnitude, 1e-7);
}

TEST(ScheduleCsv, RoundTripIsExact) {
  const auto s = make_cosine_schedule(17);
  const auto back = schedule_from_csv(schedule_to_csv(s));
  EXPECT_EQ(back.alphas(), s.alphas());
  EXPECT_TRUE(is_valid_schedule(back));
  EXPECT_EQ(schedule_to_csv(back), schedule_to_csv(s));
}

TEST(ScheduleCsv, HeaderRequired) {
  EXPECT_THROW(schedule_from_csv(std::string("0,1\n1,0\n")), std::invalid_argument);
  EXPECT_THROW(schedule_from_csv(std::string("t,alpha\n0,1\n2,0\n")), std::invalid_argument);
}
