#pragma once

/**
 * @file cli.hpp
 * @brief Experiment runner: `run`, `eval`, and `export-plots` subcommands.
 *
 * Exit codes: 0 success, 2 bad usage / invalid config / missing input,
 * 3 mid-run numeric failure (partial metrics are retained on disk).
 */

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tampo/config.hpp"
#include "tampo/metrics_io.hpp"
#include "tampo/tampo_version.hpp"

namespace tampo::cli {

namespace detail {

constexpr std::uint64_t kEvalPurpose = 101;

inline int fail_usage(const std::vector<std::string>& problems) {
  std::cerr << "invalid configuration (" << problems.size() << " problem"
            << (problems.size() == 1 ? "" : "s") << "):\n";
  for (const auto& p : problems) std::cerr << "  - " << p << "\n";
  return 2;
}

/// Shared config assembly for run/eval: file, then --set overrides, then
/// --seed/--out flags. Returns false (with problems printed) on any error.
inline bool load_config(config::ExperimentConfig& cfg, const std::string& config_path,
                        const std::vector<std::string>& sets, const std::string& seed_override,
                        const std::string& out_override) {
  std::vector<std::string> problems;
  if (!config_path.empty()) config::parse_file(cfg, config_path, problems);
  for (const std::string& assignment : sets) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      problems.push_back("--set '" + assignment + "': expected KEY=VALUE");
      continue;
    }
    const std::string problem =
        config::apply_assignment(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
    if (!problem.empty()) problems.push_back("--set: " + problem);
  }
  if (!seed_override.empty()) {
    const std::string problem = config::apply_assignment(cfg, "seed", seed_override);
    if (!problem.empty()) problems.push_back(problem);
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  const std::vector<std::string> validation = config::validate(cfg);
  problems.insert(problems.end(), validation.begin(), validation.end());
  if (!problems.empty()) {
    fail_usage(problems);
    return false;
  }
  return true;
}

}  // namespace detail

// ============================================================================
// run
// ============================================================================

/**
 * Train per the config and write the run directory:
 *   metrics.jsonl        one record per step, byte-reproducible
 *   config_resolved.txt  full resolved configuration
 *   params.json          final policy parameters
 *   eval.json            final Pass@k report on the training suite
 *   timings.csv          measured per-step wall time
 *   tstar_samples.csv    per-trajectory T* samples (archive runs only)
 */
inline int cmd_run(const config::ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);

  const std::vector<envs::TaskSpec> tasks = config::build_tasks(cfg);
  const tempmeta::TampoConfig tampo_cfg = config::build_tampo(cfg);
  io::detail::write_file(out_dir / "config_resolved.txt", config::to_text(cfg));

  trainer::TrainRun run;
  io::MetricsWriter writer(out_dir / "metrics.jsonl");
  try {
    run = trainer::train(config::build_initial_params(cfg, tasks), tasks,
                         config::build_schedule(cfg), config::build_grpo(cfg), tampo_cfg,
                         config::build_train_options(cfg),
                         [&writer](const trainer::MetricsRecord& r) { writer.append(r); });
  } catch (const trainer::TrainError& e) {
    std::cerr << "run aborted at " << e.what() << "\n"
              << "partial metrics retained in " << (out_dir / "metrics.jsonl").string() << "\n";
    return 3;
  }

  io::write_params(out_dir / "params.json", run.final_params);
  io::write_timings(out_dir / "timings.csv", run.metrics);
  if (run.archived) {
    io::write_tstar_samples(out_dir / "tstar_samples.csv",
                            trainer::tstar_samples(run, tampo_cfg.grid));
  }

  rng::Stream eval_stream(rng::derive(cfg.seed, {detail::kEvalPurpose}));
  envs::GenerationCounter eval_counter;
  const envs::EvalReport report =
      envs::pass_at_k(run.final_params, tasks, cfg.eval_k, cfg.eval_temperature,
                      cfg.eval_success_threshold, eval_stream, &eval_counter);
  io::write_eval_report(out_dir / "eval.json", report);

  std::cout << "run complete: " << cfg.steps << " steps, "
            << run.metrics.back().generation_counter << " rollouts, final mean reward "
            << format::g17(run.metrics.back().mean_reward) << "\n"
            << "pass@1 " << format::g17(report.pass_at_1) << ", pass@" << report.k << " "
            << format::g17(report.pass_at_k) << "\n"
            << "artifacts in " << out_dir.string() << "\n";
  return 0;
}

// ============================================================================
// eval
// ============================================================================

/// Re-evaluate a saved params artifact on the config's task suite.
inline int cmd_eval(const config::ExperimentConfig& cfg, const std::string& params_path,
                    const std::string& report_path) {
  policy::PolicyParams params;
  try {
    params = io::read_params(params_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  const std::vector<envs::TaskSpec> tasks = config::build_tasks(cfg);
  for (const envs::TaskSpec& task : tasks) {
    if (task.episode_len > params.max_len) {
      std::cerr << "task suite episode_len " << task.episode_len
                << " exceeds artifact max_len " << params.max_len << "\n";
      return 2;
    }
  }
  rng::Stream eval_stream(rng::derive(cfg.seed, {detail::kEvalPurpose}));
  const envs::EvalReport report = envs::pass_at_k(
      params, tasks, cfg.eval_k, cfg.eval_temperature, cfg.eval_success_threshold, eval_stream);
  const std::filesystem::path out =
      report_path.empty() ? std::filesystem::path("eval.json") : std::filesystem::path(report_path);
  io::write_eval_report(out, report);
  std::cout << io::eval_report_json(report) << "\n";
  return 0;
}

// ============================================================================
// export-plots
// ============================================================================

/// Turn metrics.jsonl into plot-ready CSV tables. A tstar_samples.csv next
/// to the metrics file additionally yields the windowed T* table.
inline int cmd_export_plots(const std::string& metrics_path, int window,
                            const std::string& out_dir_path) {
  namespace fs = std::filesystem;
  std::vector<trainer::MetricsRecord> records;
  try {
    records = io::read_metrics_jsonl(metrics_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (records.empty()) {
    std::cerr << "no metrics records in '" << metrics_path << "'\n";
    return 2;
  }
  const fs::path out_dir(out_dir_path);
  fs::create_directories(out_dir);
  io::export_temperature_csv(records, window, out_dir / "temperature_vs_step.csv");
  io::export_reward_csv(records, out_dir / "reward_vs_step.csv");
  io::export_meta_dist_csv(records, out_dir / "meta_dist.csv");

  const fs::path samples_path = fs::path(metrics_path).parent_path() / "tstar_samples.csv";
  if (fs::exists(samples_path)) {
    const auto samples = io::read_tstar_samples(samples_path);
    const auto windows = trainer::window_tstar_samples(samples);
    io::export_tstar_windows_csv(windows, out_dir / "tstar_windows.csv");
  } else {
    std::cerr << "note: no tstar_samples.csv beside metrics (archive disabled); "
                 "skipping tstar_windows.csv\n";
  }
  std::cout << "plot tables written to " << out_dir.string() << "\n";
  return 0;
}

// ============================================================================
// argv entry point
// ============================================================================

inline int run_main(int argc, const char* const* argv) {
  CLI::App app{"tampo: desk-scale GRPO with a learned temperature meta-policy"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  std::vector<std::string> sets;
  std::string seed_override;
  std::string out_override;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Flat key=value config file");
    cmd->add_option("--set", sets, "Override KEY=VALUE (repeatable)");
    cmd->add_option("--seed", seed_override, "Override the run seed");
    cmd->add_option("--out", out_override, "Override the output directory");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "Train and write run artifacts");
  add_config_flags(run_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a saved params artifact");
  add_config_flags(eval_cmd);
  std::string params_path;
  std::string report_path;
  eval_cmd->add_option("--params", params_path, "params.json artifact")->required();
  eval_cmd->add_option("--report", report_path, "Output report path (default eval.json)");

  CLI::App* plots_cmd = app.add_subcommand("export-plots", "Export CSV plot tables");
  std::string metrics_path;
  int window = 25;
  std::string plots_out = "plots";
  plots_cmd->add_option("--metrics", metrics_path, "metrics.jsonl to read")->required();
  plots_cmd->add_option("--window", window, "Sliding-window size in steps");
  plots_cmd->add_option("--out", plots_out, "Output directory for CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run_cmd->parsed()) {
      config::ExperimentConfig cfg;
      if (!detail::load_config(cfg, config_path, sets, seed_override, out_override)) return 2;
      return cmd_run(cfg);
    }
    if (eval_cmd->parsed()) {
      config::ExperimentConfig cfg;
      if (!detail::load_config(cfg, config_path, sets, seed_override, out_override)) return 2;
      return cmd_eval(cfg, params_path, report_path);
    }
    if (plots_cmd->parsed()) {
      if (window < 1) {
        std::cerr << "--window must be >= 1\n";
        return 2;
      }
      return cmd_export_plots(metrics_path, window, plots_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace tampo::cli
