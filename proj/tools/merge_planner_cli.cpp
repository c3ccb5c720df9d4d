#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "merge_planner/merge_planner.hpp"

namespace mp = merge_planner;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<int> T;
  std::optional<double> s;
  std::optional<std::string> lambda;
  std::optional<std::string> out;
  std::optional<std::string> seed;
  std::optional<unsigned> threads;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--T", f.T, "number of teacher steps (schedule.T)");
  cmd->add_option("--s", f.s, "training time (linear.s)");
  cmd->add_option("--lambda", f.lambda, "eigenvalues, comma separated (linear.lambda)");
  cmd->add_option("--out", f.out, "output directory (experiment.output)");
  cmd->add_option("--seed", f.seed, "root seed (experiment.seed)");
  cmd->add_option("--threads", f.threads, "worker threads (experiment.threads)");
  cmd->add_option("--set", f.sets, "override any key: section.key=value");
}

mp::report::ExperimentConfig resolve(const CommonFlags& f, const std::string& kind) {
  mp::report::Settings file;
  if (!f.config.empty()) file = mp::report::load_ini_file(f.config);
  mp::report::Settings cli;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cli[mp::report::trim(kv.substr(0, eq))] = mp::report::trim(kv.substr(eq + 1));
  }
  if (f.T) cli["schedule.T"] = std::to_string(*f.T);
  if (f.s) cli["linear.s"] = mp::csv::format_double(*f.s);
  if (f.lambda) cli["linear.lambda"] = *f.lambda;
  if (f.out) cli["experiment.output"] = *f.out;
  if (f.seed) cli["experiment.seed"] = *f.seed;
  if (f.threads) cli["experiment.threads"] = std::to_string(*f.threads);
  cli["experiment.kind"] = kind;
  return mp::report::resolve_config(file, cli);
}

std::string in_dir(const std::string& dir, const char* name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int cmd_plan(const mp::report::ExperimentConfig& c) {
  const auto r = mp::report::run_plan(c);
  mp::report::write_plan_outputs(r, c.output);
  std::cout << "T=" << r.schedule.steps() << " s=" << c.s_train << " dims=" << r.lambda.size() << '\n';
  std::cout << "dp objective " << mp::csv::format_double(r.dp.objective) << '\n';
  std::cout << "plan " << r.dp.plan->to_text() << '\n';
  if (r.schedule.steps() > 1) std::cout << "max_t lambda0 " << mp::csv::format_double(r.amplification_threshold) << '\n';
  std::cout << mp::report::strategies_to_csv(r);
  std::cout << "wrote " << c.output << '\n';
  return 0;
}

int cmd_sweep(const mp::report::ExperimentConfig& c) {
  const auto rows = mp::report::run_sweep(c);
  const auto path = in_dir(c.output, "sweep.csv");
  mp::csv::write_file(path, mp::report::sweep_to_csv(rows));
  std::cout << rows.size() << " rows -> " << path << '\n';
  return 0;
}

int cmd_gmm_approx(const mp::report::ExperimentConfig& c) {
  const auto rows = mp::report::run_gmm_approx(c);
  const auto text = mp::report::gmm_approx_to_csv(rows);
  const auto path = in_dir(c.output, "gmm_approx.csv");
  mp::csv::write_file(path, text);
  std::cout << text << "-> " << path << '\n';
  return 0;
}

int cmd_gmm_propagate(const mp::report::ExperimentConfig& c) {
  const auto r = mp::report::run_gmm_propagate(c);
  const auto text = mp::report::propagation_to_csv(r);
  const auto path = in_dir(c.output, "gmm_propagate.csv");
  mp::csv::write_file(path, text);
  std::cout << text << "lipschitz is an empirical lower estimate; bounds are certified upper bounds\n-> " << path << '\n';
  return 0;
}

int cmd_verify(const mp::report::ExperimentConfig& c, std::size_t samples) {
  mp::verification::AcceptanceOptions o;
  o.seed = c.seed;
  o.workers = c.workers();
  o.gmm_samples = samples;
  const auto results = mp::verification::run_acceptance(o, &std::cout);
  const bool ok = mp::verification::all_pass(results);
  std::cout << (ok ? "all criteria pass" : "some criteria FAIL") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Merge-plan optimizer for trajectory distillation"};
  app.require_subcommand(1);

  CommonFlags plan_f, sweep_f, approx_f, prop_f, verify_f;
  auto* plan = app.add_subcommand("plan", "optimal merge plan for one setting");
  auto* sweep = app.add_subcommand("sweep", "strategy gaps over a lambda grid");
  auto* approx = app.add_subcommand("gmm-approx", "clustering bound vs composition horizon");
  auto* prop = app.add_subcommand("gmm-propagate", "two-stage error propagation audit");
  auto* verify = app.add_subcommand("verify", "run the acceptance suite");
  add_common(plan, plan_f);
  add_common(sweep, sweep_f);
  add_common(approx, approx_f);
  add_common(prop, prop_f);
  add_common(verify, verify_f);
  std::size_t verify_samples = 100000;
  verify->add_option("--samples", verify_samples, "Monte-Carlo samples for the mixture criteria");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) return cmd_plan(resolve(plan_f, "plan"));
    if (sweep->parsed()) return cmd_sweep(resolve(sweep_f, "sweep"));
    if (approx->parsed()) return cmd_gmm_approx(resolve(approx_f, "gmm-approx"));
    if (prop->parsed()) return cmd_gmm_propagate(resolve(prop_f, "gmm-propagate"));
    if (verify->parsed()) return cmd_verify(resolve(verify_f, "verify"), verify_samples);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
