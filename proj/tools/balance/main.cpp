#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "balance/error.hpp"
#include "commands.hpp"
#include "run_config.hpp"

namespace bc = balance::cli;

int main(int argc, char** argv) {
  CLI::App app{"Insole balance analysis: simulation, feature extraction, nested cross-validation, SHAP and group statistics"};
  app.set_version_flag("--version", bc::kToolVersion);
  app.footer(
      "Predicted labels and scores are research artifacts for method development. "
      "They are not clinical output and must not be used for diagnosis.");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_path;
  std::string out = "out";
  auto* seed_opt = app.add_option("--seed", seed, "Base random seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON run config; explicit flags override it")->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory");

  bool skip_bad = false;
  std::string manifest, features, feature_set, run_dir, preset = "separable", profile;
  std::vector<std::string> tasks, models;
  int budget = 100, k_outer = 10, k_inner = 5;
  std::size_t subjects = 30, shap_samples = 2048, mc_draws = 200'000;
  std::vector<double> svm_C;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic cohort (manifest and recordings)");
  sim->fallthrough();
  sim->add_option("--profile", profile, "Cohort spec JSON")->check(CLI::ExistingFile);
  auto* preset_opt = sim->add_option("--preset", preset, "Built-in cohort: separable, null, null3");
  sim->add_option("--subjects", subjects, "Subjects per group for a preset")->check(CLI::PositiveNumber);
  preset_opt->excludes("--profile");

  auto add_input = [&](CLI::App* sub, bool with_features) {
    sub->fallthrough();
    sub->add_option("--manifest", manifest, "Cohort manifest JSON")->check(CLI::ExistingFile);
    if (with_features) sub->add_option("--features", features, "Features CSV from a previous extract")->check(CLI::ExistingFile);
    sub->add_flag("--skip-bad", skip_bad, "Skip subjects that fail to load or process instead of stopping");
  };

  auto* ext = app.add_subcommand("extract", "Preprocess recordings and write segment features");
  add_input(ext, false);

  auto* eval = app.add_subcommand("evaluate", "Nested cross-validation per task and model");
  add_input(eval, true);
  eval->add_option("--task", tasks, "LB_vs_CN, LB_vs_AD or <GROUP>_vs_<GROUP> (repeatable)");
  eval->add_option("--model", models, "logistic, svm or knn (repeatable)");
  eval->add_option("--feature-set", feature_set, "insole_only, reference or hybrid");
  eval->add_option("--budget", budget, "Random-search trials per outer fold")->check(CLI::PositiveNumber);
  eval->add_option("--k-outer", k_outer, "Outer folds");
  eval->add_option("--k-inner", k_inner, "Inner folds");
  eval->add_option("--svm-C", svm_C, "SVM C search range: LO HI")->expected(2);

  auto* expl = app.add_subcommand("explain", "Kernel SHAP summary for an evaluate run");
  expl->fallthrough();
  expl->add_option("--run", run_dir, "Run directory written by evaluate (<out>/<task>_<model>)")->required();
  expl->add_option("--shap-samples", shap_samples, "Coalitions per row when sampling");

  auto* st = app.add_subcommand("stats", "ANCOVA, correlations and demographics");
  add_input(st, true);
  st->add_option("--mc-draws", mc_draws, "Monte Carlo draws for studentized-range p-values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    bc::RunConfig cfg;
    if (!config_path.empty()) cfg = bc::load_run_config(config_path);
    auto given = [](CLI::App* sub, const char* name) { return sub->parsed() && sub->count(name) > 0; };
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (threads_opt->count() > 0) cfg.threads = threads;
    for (auto* sub : {ext, eval, st}) {
      if (given(sub, "--manifest")) cfg.manifest = manifest;
      if (sub != ext && given(sub, "--features")) cfg.features_csv = features;
    }
    if (eval->parsed()) {
      if (!tasks.empty()) {
        cfg.tasks.clear();
        for (const auto& t : tasks) cfg.tasks.push_back(bc::parse_task(t));
      }
      if (!models.empty()) cfg.models = models;
      if (eval->count("--feature-set")) cfg.feature_set = balance::parse_feature_set(feature_set);
      if (eval->count("--budget")) cfg.budget = budget;
      if (eval->count("--k-outer")) cfg.k_outer = k_outer;
      if (eval->count("--k-inner")) cfg.k_inner = k_inner;
      if (!svm_C.empty()) cfg.svm_C = std::pair{svm_C[0], svm_C[1]};
    }
    if (expl->parsed() && expl->count("--shap-samples")) cfg.shap_samples = shap_samples;
    if (st->parsed() && st->count("--mc-draws")) cfg.mc_draws = mc_draws;
    cfg.validate();

    if (sim->parsed()) {
      bc::SimulateArgs args;
      if (!profile.empty()) args.profile = profile;
      args.preset = preset;
      args.subjects = subjects;
      if (seed_opt->count() > 0) args.seed = seed;
      bc::cmd_simulate(args, cfg, out);
    } else if (ext->parsed()) {
      bc::cmd_extract(cfg, out, skip_bad);
    } else if (eval->parsed()) {
      bc::cmd_evaluate(cfg, out, skip_bad);
    } else if (expl->parsed()) {
      bc::cmd_explain(cfg, run_dir, out);
    } else if (st->parsed()) {
      bc::cmd_stats(cfg, out, skip_bad);
    }
  } catch (const bc::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const balance::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
