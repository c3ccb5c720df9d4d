#pragma once

#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "merge_planner/csv.hpp"
#include "merge_planner/gmm/mixture.hpp"

namespace merge_planner::gmm {

/**
 * Whitespace-separated mixture description; '#' starts a comment.
 *
 *   K 2
 *   d 2
 *   pi 0.5 0.5
 *   mu 1 0
 *   mu -1 0
 *   Lambda
 *   1 0
 *   0 1
 *   Lambda
 *   ...
 *
 * mu and Lambda entries appear once per component, in component order.
 */
inline GaussianMixture read_mixture(std::istream& in) {
  std::vector<std::string> tok;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string t;
    while (ls >> t) tok.push_back(t);
  }
  std::size_t pos = 0;
  auto next = [&](const char* what) -> const std::string& {
    if (pos >= tok.size()) throw std::invalid_argument(std::string("mixture file ended while reading ") + what);
    return tok[pos++];
  };
  auto keyword = [&](const char* kw) {
    const std::string& t = next(kw);
    if (t != kw) throw std::invalid_argument("mixture file: expected '" + std::string(kw) + "', got '" + t + "'");
  };
  auto number = [&](const char* what) { return csv::parse_double(next(what)); };

  keyword("K");
  const long K = csv::parse_int(next("K"));
  keyword("d");
  const long d = csv::parse_int(next("d"));
  if (K < 1 || d < 1) throw std::invalid_argument("mixture file: K and d must be >= 1");

  keyword("pi");
  std::vector<double> pi(static_cast<std::size_t>(K));
  for (auto& p : pi) p = number("pi");

  std::vector<VectorXd> mu;
  for (long k = 0; k < K; ++k) {
    keyword("mu");
    VectorXd m(d);
    for (long i = 0; i < d; ++i) m(i) = number("mu");
    mu.push_back(std::move(m));
  }
  std::vector<MatrixXd> lambda;
  for (long k = 0; k < K; ++k) {
    keyword("Lambda");
    MatrixXd L(d, d);
    for (long r = 0; r < d; ++r) {
      for (long c = 0; c < d; ++c) L(r, c) = number("Lambda");
    }
    lambda.push_back(std::move(L));
  }
  if (pos != tok.size()) throw std::invalid_argument("mixture file has trailing tokens starting at '" + tok[pos] + "'");
  return GaussianMixture(std::move(pi), std::move(mu), std::move(lambda));
}

inline GaussianMixture read_mixture(const std::string& text) {
  std::istringstream in(text);
  return read_mixture(in);
}

inline std::string write_mixture(const GaussianMixture& mix) {
  std::ostringstream out;
  const Eigen::Index d = mix.dim();
  out << "K " << mix.components() << "\nd " << d << "\npi";
  for (double p : mix.weights()) out << ' ' << csv::format_double(p);
  out << '\n';
  for (std::size_t k = 0; k < mix.components(); ++k) {
    out << "mu";
    for (Eigen::Index i = 0; i < d; ++i) out << ' ' << csv::format_double(mix.mu(k)(i));
    out << '\n';
  }
  for (std::size_t k = 0; k < mix.components(); ++k) {
    out << "Lambda\n";
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) out << (c ? " " : "") << csv::format_double(mix.lambda(k)(r, c));
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace merge_planner::gmm
