#include "memlora/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace memlora;

int main(int argc, char** argv) {
  CLI::App app{"personalized low-rank memory injection with multi-objective configuration search"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::string out_override;
  uint64_t seed_override = 0;
  bool has_seed = false;
  int budget_override = 0;
  int jobs = 1;
  int user_index = 0;
  bool emit_gnuplot = false;
  std::string config_override;

  app.add_option("--manifest", manifest_path, "run manifest (JSON)")->required();
  app.add_option("--out", out_override, "output directory (overrides manifest)");
  auto* seed_opt = app.add_option("--seed", seed_override, "master seed (overrides manifest)");
  app.add_option("--budget", budget_override, "search budget (overrides manifest)");
  app.add_option("--jobs", jobs, "parallel initial-design evaluations");
  app.add_option("--user", user_index, "held-out user index");

  auto* c_pre = app.add_subcommand("pretrain", "train and freeze the base model");
  auto* c_search = app.add_subcommand("search", "run the configuration search for one user");
  c_search->add_flag("--emit-gnuplot", emit_gnuplot, "write a gnuplot script for the front");
  auto* c_tune = app.add_subcommand("tune-eval", "inject + instruction-tune the best config, report metrics");
  c_tune->add_option("--config", config_override, "configuration string, e.g. l0:r16,l3:r8");
  auto* c_ablate = app.add_subcommand("ablate", "compare restricted search spaces");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  has_seed = seed_opt->count() > 0;

  try {
    RunManifest m = load_manifest(manifest_path);
    if (!out_override.empty()) m.out_dir = out_override;
    if (has_seed) m.seed = seed_override;
    if (budget_override > 0) m.bo.budget = budget_override;
    m.bo.jobs = jobs;

    if (c_pre->parsed()) {
      cmd_pretrain(m);
    } else if (c_search->parsed()) {
      cmd_search(m, user_index, emit_gnuplot);
    } else if (c_tune->parsed()) {
      cmd_tune_eval(m, user_index, config_override);
    } else if (c_ablate->parsed()) {
      cmd_ablate(m, user_index);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
