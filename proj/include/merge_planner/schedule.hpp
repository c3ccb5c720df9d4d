#pragma once

#include <cmath>
#include <istream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "merge_planner/csv.hpp"

namespace merge_planner {

/**
 * Discrete noise schedule {alpha_t, sigma_t}, t = 0..T, stored explicitly so
 * user-supplied schedules can be validated and replayed bit-exactly.
 *
 * The type only enforces shape (equal lengths, T >= 1). Use validate_schedule()
 * to check the signal/noise invariants.
 */
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma)
      : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
    if (alpha_.size() != sigma_.size()) throw std::invalid_argument("alpha and sigma lengths differ");
    if (alpha_.size() < 2) throw std::invalid_argument("schedule needs at least T = 1 (two entries)");
  }

  int steps() const { return static_cast<int>(alpha_.size()) - 1; }
  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigma_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& sigmas() const { return sigma_; }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

/// alpha_t = cos((t/T) pi/2), sigma_t = sin((t/T) pi/2); endpoints clamped to exact 0/1.
inline NoiseSchedule make_cosine_schedule(int T) {
  if (T < 1) throw std::invalid_argument("cosine schedule requires T >= 1");
  std::vector<double> alpha(static_cast<std::size_t>(T) + 1);
  std::vector<double> sigma(alpha.size());
  for (int t = 0; t <= T; ++t) {
    const double angle = (static_cast<double>(t) / T) * (std::numbers::pi / 2.0);
    alpha[t] = std::cos(angle);
    sigma[t] = std::sin(angle);
  }
  alpha.front() = 1.0;
  sigma.front() = 0.0;
  alpha.back() = 0.0;
  sigma.back() = 1.0;
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

struct ScheduleViolation {
  enum class Kind { Norm, Boundary, AlphaMonotonicity, SigmaMonotonicity };
  Kind kind;
  int index;
  double magnitude;
  std::string message;
};

inline constexpr double kScheduleNormTolerance = 1e-12;

/// Every violated invariant with its index and magnitude; empty iff the schedule is valid.
inline std::vector<ScheduleViolation> validate_schedule(const NoiseSchedule& s) {
  std::vector<ScheduleViolation> report;
  const int T = s.steps();
  auto add = [&](ScheduleViolation::Kind kind, int index, double magnitude, std::string message) {
    report.push_back({kind, index, magnitude, std::move(message)});
  };

  for (int t = 0; t <= T; ++t) {
    const double err = std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0);
    if (!(err <= kScheduleNormTolerance)) {
      add(ScheduleViolation::Kind::Norm, t, err, "norm alpha^2+sigma^2≠1 at t=" + std::to_string(t));
    }
  }

  if (s.alpha(0) != 1.0) add(ScheduleViolation::Kind::Boundary, 0, std::abs(s.alpha(0) - 1.0), "boundary alpha[0]≠1");
  if (s.sigma(0) != 0.0) add(ScheduleViolation::Kind::Boundary, 0, std::abs(s.sigma(0)), "boundary sigma[0]≠0");
  if (s.alpha(T) != 0.0) add(ScheduleViolation::Kind::Boundary, T, std::abs(s.alpha(T)), "boundary alpha[T]≠0");
  if (s.sigma(T) != 1.0) add(ScheduleViolation::Kind::Boundary, T, std::abs(s.sigma(T) - 1.0), "boundary sigma[T]≠1");

  for (int t = 1; t <= T; ++t) {
    const double da = s.alpha(t - 1) - s.alpha(t);
    if (!(da > 0.0)) {
      add(ScheduleViolation::Kind::AlphaMonotonicity, t, -da,
          "monotonicity: alpha not strictly decreasing at index " + std::to_string(t));
    }
    const double ds = s.sigma(t) - s.sigma(t - 1);
    if (!(ds > 0.0)) {
      add(ScheduleViolation::Kind::SigmaMonotonicity, t, -ds,
          "monotonicity: sigma not strictly increasing at index " + std::to_string(t));
    }
  }
  return report;
}

inline bool is_valid_schedule(const NoiseSchedule& s) { return validate_schedule(s).empty(); }

inline void require_valid_schedule(const NoiseSchedule& s) {
  const auto report = validate_schedule(s);
  if (!report.empty()) throw std::invalid_argument("invalid noise schedule: " + report.front().message);
}

/// Two-column CSV `t,alpha`; sigma is recomputed as sqrt(1 - alpha^2).
inline std::string schedule_to_csv(const NoiseSchedule& s) {
  std::ostringstream out;
  out << "t,alpha\n";
  for (int t = 0; t <= s.steps(); ++t) out << t << ',' << csv::format_double(s.alpha(t)) << '\n';
  return out.str();
}

inline NoiseSchedule schedule_from_csv(std::istream& in) {
  const auto rows = csv::read_table(in, {"t", "alpha"});
  std::vector<double> alpha(rows.size());
  std::vector<double> sigma(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (csv::parse_int(rows[r][0]) != static_cast<long>(r)) {
      throw std::invalid_argument("schedule CSV rows must list t = 0..T in order");
    }
    alpha[r] = csv::parse_double(rows[r][1]);
    if (std::abs(alpha[r]) > 1.0) throw std::invalid_argument("schedule alpha outside [-1, 1]");
    sigma[r] = std::sqrt(1.0 - alpha[r] * alpha[r]);
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

inline NoiseSchedule schedule_from_csv(const std::string& text) {
  std::istringstream in(text);
  return schedule_from_csv(in);
}

}  // namespace merge_planner
