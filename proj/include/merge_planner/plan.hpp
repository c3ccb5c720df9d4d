#pragma once

#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "merge_planner/linear_op.hpp"

namespace merge_planner {

enum class NodeKind { Leaf, OneShot, Binary };

/// Immutable plan node. Subtrees may be shared between plans.
struct PlanNode {
  NodeKind kind;
  StepInterval interval;
  std::shared_ptr<const PlanNode> left;
  std::shared_ptr<const PlanNode> right;
};

using PlanNodePtr = std::shared_ptr<const PlanNode>;

inline PlanNodePtr make_leaf(int t) {
  if (t < 1) throw std::invalid_argument("leaf step must be >= 1");
  return std::make_shared<const PlanNode>(PlanNode{NodeKind::Leaf, {t, t}, nullptr, nullptr});
}

inline PlanNodePtr make_oneshot(int t1, int t2) {
  if (t1 < 1 || t2 <= t1) throw std::invalid_argument("one-shot node needs 1 <= t1 < t2");
  return std::make_shared<const PlanNode>(PlanNode{NodeKind::OneShot, {t1, t2}, nullptr, nullptr});
}

inline PlanNodePtr make_binary(PlanNodePtr left, PlanNodePtr right) {
  if (!left || !right) throw std::invalid_argument("binary node needs two children");
  if (left->interval.last + 1 != right->interval.first) {
    throw std::invalid_argument("children " + to_string(left->interval) + " and " + to_string(right->interval) +
                                " are not adjacent");
  }
  const StepInterval iv{left->interval.first, right->interval.last};
  return std::make_shared<const PlanNode>(PlanNode{NodeKind::Binary, iv, std::move(left), std::move(right)});
}

enum class PlanLabel { Vanilla, Progressive, SequentialBoot, SequentialConsistency, Custom };

inline std::string to_string(PlanLabel label) {
  switch (label) {
    case PlanLabel::Vanilla: return "vanilla";
    case PlanLabel::Progressive: return "progressive";
    case PlanLabel::SequentialBoot: return "boot";
    case PlanLabel::SequentialConsistency: return "consistency";
    case PlanLabel::Custom: return "custom";
  }
  return "custom";
}

inline void serialize_node(const PlanNode& n, std::string& out) {
  switch (n.kind) {
    case NodeKind::Leaf:
      out += "(" + std::to_string(n.interval.first) + ":" + std::to_string(n.interval.last) + ")";
      break;
    case NodeKind::OneShot:
      out += "(" + std::to_string(n.interval.first) + ":" + std::to_string(n.interval.last) + " oneshot)";
      break;
    case NodeKind::Binary:
      out += "(";
      serialize_node(*n.left, out);
      serialize_node(*n.right, out);
      out += ")";
      break;
  }
}

inline std::string serialize(const PlanNodePtr& node) {
  std::string out;
  serialize_node(*node, out);
  return out;
}

/// A merge plan over [1, T]: leaves cover every step once, children are adjacent, root covers (1, T).
class MergePlan {
 public:
  MergePlan(PlanNodePtr root, PlanLabel label = PlanLabel::Custom) : root_(std::move(root)), label_(label) {
    if (!root_) throw std::invalid_argument("plan root is null");
    if (root_->interval.first != 1) throw std::invalid_argument("plan root must start at step 1");
    check(*root_);
  }

  int steps() const { return root_->interval.last; }
  const PlanNodePtr& root() const { return root_; }
  PlanLabel label() const { return label_; }
  std::string to_text() const { return serialize(root_); }

  /// Structural equality; the label is metadata.
  friend bool operator==(const MergePlan& a, const MergePlan& b) { return a.to_text() == b.to_text(); }

 private:
  static void check(const PlanNode& n) {
    if (n.interval.first < 1 || n.interval.last < n.interval.first) throw std::invalid_argument("malformed plan node");
    switch (n.kind) {
      case NodeKind::Leaf:
        if (n.interval.first != n.interval.last) throw std::invalid_argument("leaf must cover a single step");
        break;
      case NodeKind::OneShot:
        if (n.interval.first == n.interval.last) throw std::invalid_argument("one-shot node must cover >= 2 steps");
        break;
      case NodeKind::Binary:
        if (!n.left || !n.right) throw std::invalid_argument("binary node missing a child");
        if (n.left->interval.first != n.interval.first || n.right->interval.last != n.interval.last ||
            n.left->interval.last + 1 != n.right->interval.first) {
          throw std::invalid_argument("binary node children do not tile " + to_string(n.interval));
        }
        check(*n.left);
        check(*n.right);
        break;
    }
  }

  PlanNodePtr root_;
  PlanLabel label_;
};

namespace detail {

class PlanParser {
 public:
  explicit PlanParser(const std::string& text) : s_(text) {}

  PlanNodePtr parse() {
    auto node = node_();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return node;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("plan parse error at offset " + std::to_string(pos_) + ": " + what);
  }
  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  int number() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_ || pos_ - start > 9) fail("expected step number");
    return std::stoi(s_.substr(start, pos_ - start));
  }

  PlanNodePtr node_() {
    expect('(');
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      auto left = node_();
      auto right = node_();
      expect(')');
      return make_binary(std::move(left), std::move(right));
    }
    const int t1 = number();
    expect(':');
    const int t2 = number();
    skip_ws();
    if (s_.compare(pos_, 7, "oneshot") == 0) {
      pos_ += 7;
      expect(')');
      return make_oneshot(t1, t2);
    }
    expect(')');
    if (t1 != t2) fail("leaf must be (t:t); use 'oneshot' for a flat merge");
    return make_leaf(t1);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline MergePlan parse_plan(const std::string& text) { return MergePlan(detail::PlanParser(text).parse()); }

inline MergePlan plan_vanilla(int T) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  return MergePlan(T == 1 ? make_leaf(1) : make_oneshot(1, T), PlanLabel::Vanilla);
}

inline bool is_power_of_two(int T) { return T >= 1 && (T & (T - 1)) == 0; }

inline MergePlan plan_progressive(int T) {
  if (!is_power_of_two(T)) throw std::invalid_argument("progressive plan requires T to be a power of two, got " + std::to_string(T));
  std::vector<PlanNodePtr> level;
  for (int t = 1; t <= T; ++t) level.push_back(make_leaf(t));
  while (level.size() > 1) {
    std::vector<PlanNodePtr> next;
    for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(make_binary(level[i], level[i + 1]));
    level = std::move(next);
  }
  return MergePlan(level.front(), PlanLabel::Progressive);
}

inline MergePlan plan_sequential_boot(int T) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  PlanNodePtr block = make_leaf(T);
  for (int t = T - 1; t >= 1; --t) block = make_binary(make_leaf(t), block);
  return MergePlan(block, PlanLabel::SequentialBoot);
}

inline MergePlan plan_sequential_consistency(int T) {
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  PlanNodePtr block = make_leaf(1);
  for (int t = 2; t <= T; ++t) block = make_binary(block, make_leaf(t));
  return MergePlan(block, PlanLabel::SequentialConsistency);
}

inline DiagOperator evaluate_node(const PlanNode& n, const NoiseSchedule& sched, const DiagGaussian& data,
                                  const ShrinkageProfile& shrink) {
  switch (n.kind) {
    case NodeKind::Leaf: return single_step_operator(sched, data, n.interval.first);
    case NodeKind::OneShot: return direct_merge(sched, data, shrink, n.interval.first, n.interval.last);
    case NodeKind::Binary:
      return merge(evaluate_node(*n.left, sched, data, shrink), evaluate_node(*n.right, sched, data, shrink), shrink);
  }
  throw std::logic_error("unknown plan node kind");
}

inline DiagOperator evaluate_plan(const MergePlan& plan, const NoiseSchedule& sched, const DiagGaussian& data,
                                  const ShrinkageProfile& shrink) {
  if (plan.steps() != sched.steps()) {
    throw std::invalid_argument("plan covers T=" + std::to_string(plan.steps()) + " but schedule has T=" +
                                std::to_string(sched.steps()));
  }
  if (shrink.steps() != sched.steps() || shrink.dim() != data.dim()) throw std::invalid_argument("shrinkage profile shape mismatch");
  return evaluate_node(*plan.root(), sched, data, shrink);
}

/// Number of internal (merge) nodes on the longest root-to-leaf path below n, counting n itself if internal.
inline int merge_depth(const PlanNode& n) {
  if (n.kind != NodeKind::Binary) return n.kind == NodeKind::OneShot ? 1 : 0;
  return 1 + std::max(merge_depth(*n.left), merge_depth(*n.right));
}

inline constexpr int kMaxEnumerationSteps = 12;

/// C(1) = 1, C(l) = 1 + sum_m C(m) C(l - m): distinct plan shapes on an interval of length l.
inline std::uint64_t count_plans(int length) {
  if (length < 1) throw std::invalid_argument("interval length must be >= 1");
  std::vector<std::uint64_t> c(static_cast<std::size_t>(length) + 1, 0);
  c[1] = 1;
  for (int l = 2; l <= length; ++l) {
    c[l] = 1;
    for (int m = 1; m < l; ++m) c[l] += c[m] * c[l - m];
  }
  return c[length];
}

/**
 * Streams every plan shape over [1, T] to `visit`. Sub-interval shapes are
 * memoized and shared; root plans are produced one at a time.
 */
inline void enumerate_plans(int T, const std::function<void(const MergePlan&)>& visit) {
  if (T < 1 || T > kMaxEnumerationSteps) {
    throw std::invalid_argument("enumerate_plans supports 1 <= T <= " + std::to_string(kMaxEnumerationSteps));
  }
  std::map<std::pair<int, int>, std::vector<PlanNodePtr>> memo;
  std::function<const std::vector<PlanNodePtr>&(int, int)> shapes = [&](int a, int b) -> const std::vector<PlanNodePtr>& {
    auto it = memo.find({a, b});
    if (it != memo.end()) return it->second;
    std::vector<PlanNodePtr> out;
    if (a == b) {
      out.push_back(make_leaf(a));
    } else {
      out.push_back(make_oneshot(a, b));
      for (int m = a; m < b; ++m) {
        for (const auto& l : shapes(a, m)) {
          for (const auto& r : shapes(m + 1, b)) out.push_back(make_binary(l, r));
        }
      }
    }
    return memo.emplace(std::make_pair(a, b), std::move(out)).first->second;
  };

  if (T == 1) {
    visit(MergePlan(make_leaf(1)));
    return;
  }
  visit(MergePlan(make_oneshot(1, T)));
  for (int m = 1; m < T; ++m) {
    const auto& lefts = shapes(1, m);
    const auto& rights = shapes(m + 1, T);
    for (const auto& l : lefts) {
      for (const auto& r : rights) visit(MergePlan(make_binary(l, r)));
    }
  }
}

inline std::vector<MergePlan> enumerate_plans(int T) {
  std::vector<MergePlan> out;
  enumerate_plans(T, [&](const MergePlan& p) { out.push_back(p); });
  return out;
}

}  // namespace merge_planner
