#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "merge_planner/csv.hpp"
#include "merge_planner/parallel.hpp"
#include "merge_planner/schedule.hpp"

namespace merge_planner::report {

/**
 * Experiment settings. Files are INI with sections; keys are addressed as
 * "section.key" both in files and in command-line overrides.
 *
 *   [experiment] kind seed output threads
 *   [schedule]   kind (cosine|file) T file
 *   [linear]     s lambda covariance
 *   [sweep]      lambda_min lambda_max lambda_points T_grid s_grid
 *   [gmm]        mixture K radius std k_grid samples partition T split
 *                lipschitz_pairs lipschitz_scale
 */
struct ExperimentConfig {
  std::string kind = "plan";
  std::uint64_t seed = 20240601;
  std::string output = "out";
  unsigned threads = 0;  // 0 = default_workers()

  std::string schedule_kind = "cosine";
  std::string schedule_file;
  int T = 32;

  double s_train = 6.4;
  std::vector<double> lambda{1.08};
  std::string covariance;  // rows separated by ';', entries by ',' or spaces

  double lambda_min = 0.2;
  double lambda_max = 5.0;
  int lambda_points = 50;
  std::vector<int> T_grid;     // empty = {T}
  std::vector<double> s_grid;  // empty = {s_train}

  std::string mixture_file;
  std::size_t K = 8;
  double radius = 5.0;
  double iso_std = 0.3;
  std::vector<int> k_grid{1, 2, 3};
  std::size_t samples = 100000;
  std::string partition = "greedy";  // greedy | exhaustive | final_expert
  int gmm_T = 32;
  int split = 16;
  std::size_t lipschitz_pairs = 2000;
  double lipschitz_scale = 1e-3;

  unsigned workers() const { return threads == 0 ? default_workers() : threads; }
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "experiment.kind",   "experiment.seed",     "experiment.output",    "experiment.threads", "schedule.kind",
      "schedule.T",        "schedule.file",       "linear.s",             "linear.lambda",      "linear.covariance",
      "sweep.lambda_min",  "sweep.lambda_max",    "sweep.lambda_points",  "sweep.T_grid",       "sweep.s_grid",
      "gmm.mixture",       "gmm.K",               "gmm.radius",           "gmm.std",            "gmm.k_grid",
      "gmm.samples",       "gmm.partition",       "gmm.T",                "gmm.split",          "gmm.lipschitz_pairs",
      "gmm.lipschitz_scale"};
  return keys;
}

using Settings = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Flattens an INI document into "section.key" -> value.
inline Settings parse_ini(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  Settings out;
  for (const auto& [section, body] : pt) {
    if (body.empty()) {
      out[section] = trim(body.data());
      continue;
    }
    for (const auto& [key, value] : body) out[section + "." + key] = trim(value.data());
  }
  return out;
}

inline Settings load_ini_file(const std::string& path) {
  std::istringstream in(csv::read_file(path));
  return parse_ini(in);
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::vector<double> doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  try {
    for (const auto& t : split_list(text)) out.push_back(csv::parse_double(t));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
  return out;
}

inline std::vector<int> ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  try {
    for (const auto& t : split_list(text)) out.push_back(static_cast<int>(csv::parse_int(t)));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
  return out;
}

inline double one_double(const std::string& key, const std::string& text) {
  try {
    return csv::parse_double(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
}

inline long one_int(const std::string& key, const std::string& text) {
  try {
    return csv::parse_int(text);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
}

inline std::uint64_t one_u64(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') throw std::invalid_argument(key + ": not an unsigned integer");
  return v;
}

}  // namespace detail

/// Builds a config from flattened settings; rejects unknown keys and out-of-range values.
inline ExperimentConfig make_config(const Settings& settings) {
  ExperimentConfig c;
  for (const auto& [key, value] : settings) {
    if (!known_config_keys().count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    using namespace detail;
    if (key == "experiment.kind") c.kind = value;
    else if (key == "experiment.seed") c.seed = one_u64(key, value);
    else if (key == "experiment.output") c.output = value;
    else if (key == "experiment.threads") c.threads = static_cast<unsigned>(one_int(key, value));
    else if (key == "schedule.kind") c.schedule_kind = value;
    else if (key == "schedule.T") c.T = static_cast<int>(one_int(key, value));
    else if (key == "schedule.file") c.schedule_file = value;
    else if (key == "linear.s") c.s_train = one_double(key, value);
    else if (key == "linear.lambda") c.lambda = doubles(key, value);
    else if (key == "linear.covariance") c.covariance = value;
    else if (key == "sweep.lambda_min") c.lambda_min = one_double(key, value);
    else if (key == "sweep.lambda_max") c.lambda_max = one_double(key, value);
    else if (key == "sweep.lambda_points") c.lambda_points = static_cast<int>(one_int(key, value));
    else if (key == "sweep.T_grid") c.T_grid = ints(key, value);
    else if (key == "sweep.s_grid") c.s_grid = doubles(key, value);
    else if (key == "gmm.mixture") c.mixture_file = value;
    else if (key == "gmm.K") c.K = static_cast<std::size_t>(one_int(key, value));
    else if (key == "gmm.radius") c.radius = one_double(key, value);
    else if (key == "gmm.std") c.iso_std = one_double(key, value);
    else if (key == "gmm.k_grid") c.k_grid = ints(key, value);
    else if (key == "gmm.samples") c.samples = static_cast<std::size_t>(one_int(key, value));
    else if (key == "gmm.partition") c.partition = value;
    else if (key == "gmm.T") c.gmm_T = static_cast<int>(one_int(key, value));
    else if (key == "gmm.split") c.split = static_cast<int>(one_int(key, value));
    else if (key == "gmm.lipschitz_pairs") c.lipschitz_pairs = static_cast<std::size_t>(one_int(key, value));
    else if (key == "gmm.lipschitz_scale") c.lipschitz_scale = one_double(key, value);
  }

  static const std::set<std::string> kinds{"plan", "sweep", "gmm-approx", "gmm-propagate", "verify"};
  if (!kinds.count(c.kind)) throw std::invalid_argument("experiment.kind must be one of plan|sweep|gmm-approx|gmm-propagate|verify");
  if (c.schedule_kind != "cosine" && c.schedule_kind != "file") throw std::invalid_argument("schedule.kind must be cosine or file");
  if (c.schedule_kind == "file" && c.schedule_file.empty()) throw std::invalid_argument("schedule.kind=file needs schedule.file");
  if (c.T < 1) throw std::invalid_argument("schedule.T must be >= 1");
  if (!(c.s_train >= 0.0)) throw std::invalid_argument("linear.s must be >= 0");
  if (c.lambda.empty()) throw std::invalid_argument("linear.lambda must list at least one value");
  for (double l : c.lambda) {
    if (!(l >= 0.0)) throw std::invalid_argument("linear.lambda values must be >= 0");
  }
  if (!(c.lambda_min > 0.0) || !(c.lambda_max >= c.lambda_min)) throw std::invalid_argument("sweep needs 0 < lambda_min <= lambda_max");
  if (c.lambda_points < 1) throw std::invalid_argument("sweep.lambda_points must be >= 1");
  for (int t : c.T_grid) {
    if (t < 1) throw std::invalid_argument("sweep.T_grid entries must be >= 1");
  }
  for (double s : c.s_grid) {
    if (!(s >= 0.0)) throw std::invalid_argument("sweep.s_grid entries must be >= 0");
  }
  if (c.K < 1) throw std::invalid_argument("gmm.K must be >= 1");
  if (c.k_grid.empty()) throw std::invalid_argument("gmm.k_grid must not be empty");
  for (int k : c.k_grid) {
    if (k < 1) throw std::invalid_argument("gmm.k_grid entries must be >= 1");
  }
  if (c.samples < 2) throw std::invalid_argument("gmm.samples must be >= 2");
  if (c.partition != "greedy" && c.partition != "exhaustive" && c.partition != "final_expert") {
    throw std::invalid_argument("gmm.partition must be greedy, exhaustive or final_expert");
  }
  if (c.gmm_T < 2 || c.split < 1 || c.split >= c.gmm_T) throw std::invalid_argument("gmm needs 1 <= split < T");
  if (c.lipschitz_pairs < 1 || !(c.lipschitz_scale > 0.0)) throw std::invalid_argument("invalid Lipschitz settings");
  return c;
}

/// Precedence, lowest first: file, MERGE_PLANNER_SEED, command-line overrides.
inline ExperimentConfig resolve_config(const Settings& file, const Settings& overrides) {
  Settings merged = file;
  if (const char* env = std::getenv("MERGE_PLANNER_SEED")) merged["experiment.seed"] = trim(env);
  for (const auto& [k, v] : overrides) merged[k] = v;
  return make_config(merged);
}

inline NoiseSchedule make_schedule(const ExperimentConfig& c, int T) {
  if (c.schedule_kind == "file") {
    auto s = schedule_from_csv(csv::read_file(c.schedule_file));
    require_valid_schedule(s);
    return s;
  }
  return make_cosine_schedule(T);
}

inline NoiseSchedule make_schedule(const ExperimentConfig& c) { return make_schedule(c, c.T); }

}  // namespace merge_planner::report
