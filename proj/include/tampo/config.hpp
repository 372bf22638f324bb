#pragma once

/**
 * @file config.hpp
 * @brief Experiment configuration: flat key/value files with dotted keys.
 *
 * Format: one `key = value` per line, `#` starts a comment, blank lines
 * ignored. Unknown keys and unparsable values are collected (not thrown one
 * at a time) so a bad config reports every problem at once. The resolved
 * snapshot serializes back to the same format with every key present.
 */

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tampo/envs.hpp"
#include "tampo/format.hpp"
#include "tampo/grpo.hpp"
#include "tampo/policy.hpp"
#include "tampo/rng.hpp"
#include "tampo/tempmeta.hpp"
#include "tampo/trainer.hpp"

namespace tampo::config {

struct ExperimentConfig {
  // schedule
  std::string schedule = "tampo";
  // temperature grid
  double grid_min = 0.6;
  double grid_max = 1.5;
  double grid_interval = 0.1;
  // meta-policy
  double alpha = 0.05;
  double top_p = 0.7;
  double warmup_fraction = 0.1;
  double warmup_temperature = 1.0;
  double prob_floor = 0.0;
  // inner loop
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double lr = 0.01;
  int inner_epochs = 1;
  double std_floor = 1e-8;
  bool cosine_lr = false;
  // task suite
  std::string task_kind = "rare_needle";
  int task_count = 16;
  int vocab = 8;
  int episode_len = 6;
  int needle_token = -1;  // -1: vocab - 1
  std::uint64_t task_seed = 12345;
  // policy
  bool per_prompt = false;
  int max_len = 0;  // 0: episode_len
  // run
  int steps = 300;
  int batch_size = 8;
  int group_size = 8;
  std::uint64_t seed = 1;
  std::string out_dir = "tampo_run";
  bool archive_rollouts = false;
  // evaluation
  int eval_k = 8;
  double eval_temperature = 1.0;
  double eval_success_threshold = 0.999;
};

namespace detail {

inline bool parse_double(const std::string& text, double& out) {
  std::size_t consumed = 0;
  try {
    out = std::stod(text, &consumed);
  } catch (const std::exception&) {
    return false;
  }
  return consumed == text.size();
}

inline bool parse_int(const std::string& text, int& out) {
  std::size_t consumed = 0;
  try {
    out = std::stoi(text, &consumed);
  } catch (const std::exception&) {
    return false;
  }
  return consumed == text.size();
}

inline bool parse_u64(const std::string& text, std::uint64_t& out) {
  std::size_t consumed = 0;
  try {
    out = std::stoull(text, &consumed);
  } catch (const std::exception&) {
    return false;
  }
  return consumed == text.size();
}

inline bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0") {
    out = false;
    return true;
  }
  return false;
}

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

/**
 * Apply one key=value assignment. Returns an empty string on success, or a
 * one-line problem description.
 */
inline std::string apply_assignment(ExperimentConfig& cfg, const std::string& key,
                                    const std::string& value) {
  const auto bad = [&](const char* expected) {
    return "key '" + key + "': expected " + expected + ", got '" + value + "'";
  };
  const auto set_double = [&](double& field, const char* expected) -> std::string {
    return detail::parse_double(value, field) ? "" : bad(expected);
  };
  const auto set_int = [&](int& field) -> std::string {
    return detail::parse_int(value, field) ? "" : bad("an integer");
  };
  const auto set_u64 = [&](std::uint64_t& field) -> std::string {
    return detail::parse_u64(value, field) ? "" : bad("an unsigned integer");
  };
  const auto set_bool = [&](bool& field) -> std::string {
    return detail::parse_bool(value, field) ? "" : bad("true/false");
  };

  if (key == "schedule") { cfg.schedule = value; return ""; }
  if (key == "grid.min") return set_double(cfg.grid_min, "a number");
  if (key == "grid.max") return set_double(cfg.grid_max, "a number");
  if (key == "grid.interval") return set_double(cfg.grid_interval, "a number");
  if (key == "meta.alpha") return set_double(cfg.alpha, "a number");
  if (key == "meta.top_p") return set_double(cfg.top_p, "a number");
  if (key == "meta.warmup_fraction") return set_double(cfg.warmup_fraction, "a number");
  if (key == "meta.warmup_temperature") return set_double(cfg.warmup_temperature, "a number");
  if (key == "meta.prob_floor") return set_double(cfg.prob_floor, "a number");
  if (key == "grpo.clip_eps") return set_double(cfg.clip_eps, "a number");
  if (key == "grpo.kl_beta") return set_double(cfg.kl_beta, "a number");
  if (key == "grpo.lr") return set_double(cfg.lr, "a number");
  if (key == "grpo.inner_epochs") return set_int(cfg.inner_epochs);
  if (key == "grpo.std_floor") return set_double(cfg.std_floor, "a number");
  if (key == "grpo.cosine_lr") return set_bool(cfg.cosine_lr);
  if (key == "tasks.kind") {
    if (value != "target_exact" && value != "target_dense" && value != "rare_needle")
      return bad("one of target_exact/target_dense/rare_needle");
    cfg.task_kind = value;
    return "";
  }
  if (key == "tasks.count") return set_int(cfg.task_count);
  if (key == "tasks.vocab") return set_int(cfg.vocab);
  if (key == "tasks.episode_len") return set_int(cfg.episode_len);
  if (key == "tasks.needle_token") return set_int(cfg.needle_token);
  if (key == "tasks.seed") return set_u64(cfg.task_seed);
  if (key == "policy.per_prompt") return set_bool(cfg.per_prompt);
  if (key == "policy.max_len") return set_int(cfg.max_len);
  if (key == "train.steps") return set_int(cfg.steps);
  if (key == "train.batch_size") return set_int(cfg.batch_size);
  if (key == "train.group_size") return set_int(cfg.group_size);
  if (key == "train.archive_rollouts") return set_bool(cfg.archive_rollouts);
  if (key == "seed") return set_u64(cfg.seed);
  if (key == "out") { cfg.out_dir = value; return ""; }
  if (key == "eval.k") return set_int(cfg.eval_k);
  if (key == "eval.temperature") return set_double(cfg.eval_temperature, "a number");
  if (key == "eval.success_threshold") return set_double(cfg.eval_success_threshold, "a number");
  return "unknown key '" + key + "'";
}

/// Parse flat key=value text into cfg, collecting problems per line.
inline void parse_text(ExperimentConfig& cfg, const std::string& text,
                       std::vector<std::string>& problems) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string problem = apply_assignment(cfg, key, value);
    if (!problem.empty()) problems.push_back("line " + std::to_string(line_no) + ": " + problem);
  }
}

inline void parse_file(ExperimentConfig& cfg, const std::string& path,
                       std::vector<std::string>& problems) {
  std::ifstream in(path);
  if (!in) {
    problems.push_back("cannot open config file '" + path + "'");
    return;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  parse_text(cfg, buffer.str(), problems);
}

/// Field-by-field validation; returns every violation, not just the first.
inline std::vector<std::string> validate(const ExperimentConfig& cfg) {
  std::vector<std::string> problems;
  const auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };

  try {
    trainer::Schedule::parse(cfg.schedule);
  } catch (const std::exception& e) {
    problems.push_back(std::string("schedule: ") + e.what());
  }
  check(cfg.grid_interval > 0.0, "grid.interval: must be > 0");
  check(cfg.grid_max > cfg.grid_min, "grid.max: must exceed grid.min");
  check(cfg.grid_min > 0.0, "grid.min: must be > 0");
  if (cfg.grid_interval > 0.0 && cfg.grid_max > cfg.grid_min && cfg.grid_min > 0.0) {
    try {
      const auto grid = tempmeta::TemperatureGrid::from_range(cfg.grid_min, cfg.grid_max,
                                                              cfg.grid_interval);
      check(grid.size() >= 2, "grid: expansion must yield at least 2 temperatures");
    } catch (const std::exception& e) {
      problems.push_back(std::string("grid: ") + e.what());
    }
  }
  check(cfg.alpha >= 0.0 && cfg.alpha < 1.0, "meta.alpha: must be in [0, 1)");
  check(cfg.top_p >= 0.0 && cfg.top_p <= 1.0, "meta.top_p: must be in [0, 1]");
  check(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction <= 1.0,
        "meta.warmup_fraction: must be in [0, 1]");
  check(cfg.warmup_temperature > 0.0, "meta.warmup_temperature: must be > 0");
  check(cfg.prob_floor >= 0.0 && cfg.prob_floor < 1.0, "meta.prob_floor: must be in [0, 1)");
  check(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0, "grpo.clip_eps: must be in (0, 1)");
  check(cfg.kl_beta >= 0.0, "grpo.kl_beta: must be >= 0");
  check(cfg.lr > 0.0, "grpo.lr: must be > 0");
  check(cfg.inner_epochs >= 1, "grpo.inner_epochs: must be >= 1");
  check(cfg.std_floor > 0.0, "grpo.std_floor: must be > 0");
  check(cfg.task_count >= 1, "tasks.count: must be >= 1");
  check(cfg.vocab >= 1 && cfg.vocab <= 32, "tasks.vocab: must be in [1, 32]");
  check(cfg.episode_len >= 1 && cfg.episode_len <= 16, "tasks.episode_len: must be in [1, 16]");
  if (cfg.task_kind == "rare_needle") {
    check(cfg.needle_token == -1 || (cfg.needle_token >= 0 && cfg.needle_token < cfg.vocab),
          "tasks.needle_token: must be -1 (auto) or in [0, tasks.vocab)");
  }
  check(cfg.max_len == 0 || cfg.max_len >= cfg.episode_len,
        "policy.max_len: must be 0 (auto) or >= tasks.episode_len");
  check(cfg.max_len <= 16, "policy.max_len: must be <= 16");
  check(cfg.steps >= 1, "train.steps: must be >= 1");
  check(cfg.batch_size >= 1, "train.batch_size: must be >= 1");
  check(cfg.group_size >= 2, "train.group_size: must be >= 2");
  check(!cfg.out_dir.empty(), "out: must not be empty");
  check(cfg.eval_k >= 1, "eval.k: must be >= 1");
  check(cfg.eval_temperature > 0.0, "eval.temperature: must be > 0");
  check(cfg.eval_success_threshold > 0.0 && cfg.eval_success_threshold <= 1.0,
        "eval.success_threshold: must be in (0, 1]");
  return problems;
}

// ============================================================================
// Builders
// ============================================================================

inline int resolved_needle_token(const ExperimentConfig& cfg) {
  return cfg.needle_token < 0 ? cfg.vocab - 1 : cfg.needle_token;
}

inline int resolved_max_len(const ExperimentConfig& cfg) {
  return cfg.max_len == 0 ? cfg.episode_len : cfg.max_len;
}

/// Build the task suite. Targets for the target_* kinds are derived from
/// tasks.seed so the suite is stable across run seeds.
inline std::vector<envs::TaskSpec> build_tasks(const ExperimentConfig& cfg) {
  std::vector<envs::TaskSpec> tasks;
  tasks.reserve(cfg.task_count);
  for (int i = 0; i < cfg.task_count; ++i) {
    envs::TaskSpec task;
    task.prompt_id = i;
    task.episode_len = cfg.episode_len;
    if (cfg.task_kind == "rare_needle") {
      task.kind = envs::TaskKind::RareNeedle;
      task.needle_token = resolved_needle_token(cfg);
    } else {
      task.kind = cfg.task_kind == "target_exact" ? envs::TaskKind::TargetExact
                                                  : envs::TaskKind::TargetDense;
      rng::Stream stream(rng::derive(cfg.task_seed, {static_cast<std::uint64_t>(i)}));
      task.target.resize(cfg.episode_len);
      for (int& tok : task.target)
        tok = static_cast<int>(stream.below(static_cast<std::uint64_t>(cfg.vocab)));
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

inline trainer::Schedule build_schedule(const ExperimentConfig& cfg) {
  return trainer::Schedule::parse(cfg.schedule);
}

inline grpo::GrpoConfig build_grpo(const ExperimentConfig& cfg) {
  grpo::GrpoConfig g;
  g.clip_eps = cfg.clip_eps;
  g.kl_beta = cfg.kl_beta;
  g.learning_rate = cfg.lr;
  g.inner_epochs = cfg.inner_epochs;
  g.std_floor = cfg.std_floor;
  g.cosine_lr = cfg.cosine_lr;
  return g;
}

inline tempmeta::TampoConfig build_tampo(const ExperimentConfig& cfg) {
  tempmeta::TampoConfig t;
  t.grid = tempmeta::TemperatureGrid::from_range(cfg.grid_min, cfg.grid_max, cfg.grid_interval);
  t.alpha = cfg.alpha;
  t.top_p = cfg.top_p;
  t.warmup_fraction = cfg.warmup_fraction;
  t.warmup_temperature = cfg.warmup_temperature;
  t.prob_floor = cfg.prob_floor;
  return t;
}

inline trainer::TrainOptions build_train_options(const ExperimentConfig& cfg) {
  trainer::TrainOptions o;
  o.steps = cfg.steps;
  o.batch_size = cfg.batch_size;
  o.group_size = cfg.group_size;
  o.seed = cfg.seed;
  o.archive_rollouts = cfg.archive_rollouts;
  return o;
}

inline policy::PolicyParams build_initial_params(const ExperimentConfig& cfg,
                                                 std::span<const envs::TaskSpec> tasks) {
  return envs::initial_params(tasks, cfg.vocab, resolved_max_len(cfg), cfg.per_prompt);
}

// ============================================================================
// Snapshot
// ============================================================================

/// Serialize every key back to the flat format (sorted keys). Together with
/// the seed this reproduces a run byte for byte.
inline std::string to_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["schedule"] = cfg.schedule;
  kv["grid.min"] = format::g17(cfg.grid_min);
  kv["grid.max"] = format::g17(cfg.grid_max);
  kv["grid.interval"] = format::g17(cfg.grid_interval);
  kv["meta.alpha"] = format::g17(cfg.alpha);
  kv["meta.top_p"] = format::g17(cfg.top_p);
  kv["meta.warmup_fraction"] = format::g17(cfg.warmup_fraction);
  kv["meta.warmup_temperature"] = format::g17(cfg.warmup_temperature);
  kv["meta.prob_floor"] = format::g17(cfg.prob_floor);
  kv["grpo.clip_eps"] = format::g17(cfg.clip_eps);
  kv["grpo.kl_beta"] = format::g17(cfg.kl_beta);
  kv["grpo.lr"] = format::g17(cfg.lr);
  kv["grpo.inner_epochs"] = std::to_string(cfg.inner_epochs);
  kv["grpo.std_floor"] = format::g17(cfg.std_floor);
  kv["grpo.cosine_lr"] = cfg.cosine_lr ? "true" : "false";
  kv["tasks.kind"] = cfg.task_kind;
  kv["tasks.count"] = std::to_string(cfg.task_count);
  kv["tasks.vocab"] = std::to_string(cfg.vocab);
  kv["tasks.episode_len"] = std::to_string(cfg.episode_len);
  kv["tasks.needle_token"] = std::to_string(cfg.needle_token);
  kv["tasks.seed"] = std::to_string(cfg.task_seed);
  kv["policy.per_prompt"] = cfg.per_prompt ? "true" : "false";
  kv["policy.max_len"] = std::to_string(cfg.max_len);
  kv["train.steps"] = std::to_string(cfg.steps);
  kv["train.batch_size"] = std::to_string(cfg.batch_size);
  kv["train.group_size"] = std::to_string(cfg.group_size);
  kv["train.archive_rollouts"] = cfg.archive_rollouts ? "true" : "false";
  kv["seed"] = std::to_string(cfg.seed);
  kv["out"] = cfg.out_dir;
  kv["eval.k"] = std::to_string(cfg.eval_k);
  kv["eval.temperature"] = format::g17(cfg.eval_temperature);
  kv["eval.success_threshold"] = format::g17(cfg.eval_success_threshold);
  std::string out;
  for (const auto& [key, value] : kv) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

}  // namespace tampo::config
