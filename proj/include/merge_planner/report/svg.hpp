#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "merge_planner/plan.hpp"

namespace merge_planner::report {

struct Arc {
  StepInterval interval;
  int depth;  // 0 at the root
};

/// One arc per merge node (binary or one-shot), in pre-order.
inline std::vector<Arc> plan_arcs(const MergePlan& plan) {
  std::vector<Arc> arcs;
  auto walk = [&](auto&& self, const PlanNode& n, int depth) -> void {
    if (n.kind == NodeKind::Leaf) return;
    arcs.push_back({n.interval, depth});
    if (n.kind == NodeKind::Binary) {
      self(self, *n.left, depth + 1);
      self(self, *n.right, depth + 1);
    }
  };
  walk(walk, *plan.root(), 0);
  return arcs;
}

namespace detail {
inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}
}  // namespace detail

/**
 * Arc diagram: ticks 1..T on a baseline, one arc per merge spanning its
 * interval. Lightness grows with depth, so the deepest (earliest) merges are
 * lightest and the root is darkest.
 */
inline std::string render_arc_diagram(const MergePlan& plan, int T) {
  if (plan.steps() != T) throw std::invalid_argument("plan covers a different T than requested");
  const double step = 24.0, margin = 24.0;
  const double width = 2.0 * margin + step * std::max(T - 1, 0);
  const double span_max = step * std::max(T - 1, 1);
  const double height = margin * 2.0 + span_max / 2.0 + 16.0;
  const double base = height - margin;
  auto x = [&](int t) { return margin + step * (t - 1); };

  const auto arcs = plan_arcs(plan);
  int max_depth = 0;
  for (const auto& a : arcs) max_depth = std::max(max_depth, a.depth);

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt("%.1f", width) + "\" height=\"" +
         detail::fmt("%.1f", height) + "\" viewBox=\"0 0 " + detail::fmt("%.1f", width) + " " +
         detail::fmt("%.1f", height) + "\">\n";
  out += "<title>" + plan.to_text() + "</title>\n";
  out += "<line x1=\"" + detail::fmt("%.1f", x(1)) + "\" y1=\"" + detail::fmt("%.1f", base) + "\" x2=\"" +
         detail::fmt("%.1f", x(T)) + "\" y2=\"" + detail::fmt("%.1f", base) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (int t = 1; t <= T; ++t) {
    out += "<line class=\"tick\" x1=\"" + detail::fmt("%.1f", x(t)) + "\" y1=\"" + detail::fmt("%.1f", base) + "\" x2=\"" +
           detail::fmt("%.1f", x(t)) + "\" y2=\"" + detail::fmt("%.1f", base + 6.0) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out += "<text x=\"" + detail::fmt("%.1f", x(t)) + "\" y=\"" + detail::fmt("%.1f", base + 18.0) +
           "\" font-size=\"9\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  }
  for (const auto& a : arcs) {
    const double x1 = x(a.interval.first), x2 = x(a.interval.last);
    const double rx = (x2 - x1) / 2.0;
    const double lightness = max_depth == 0 ? 25.0 : 25.0 + 55.0 * a.depth / max_depth;
    out += "<path class=\"arc\" d=\"M " + detail::fmt("%.1f", x1) + " " + detail::fmt("%.1f", base) + " A " +
           detail::fmt("%.1f", rx) + " " + detail::fmt("%.1f", rx) + " 0 0 1 " + detail::fmt("%.1f", x2) + " " +
           detail::fmt("%.1f", base) + "\" fill=\"none\" stroke=\"hsl(215,70%," + detail::fmt("%.1f", lightness) +
           "%)\" stroke-width=\"1.5\" data-interval=\"" + std::to_string(a.interval.first) + ":" +
           std::to_string(a.interval.last) + "\" data-depth=\"" + std::to_string(a.depth) + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace merge_planner::report
