#pragma once

/**
 * @file envs.hpp
 * @brief Synthetic sequence-reward tasks, group rollouts, and Pass@k.
 *
 * Three task kinds stand in for graded question answering:
 *  - target_exact: reward 1 iff the whole sequence matches a target.
 *  - target_dense: reward = fraction of positions matching the target.
 *  - rare_needle:  reward 1 iff a designated token appears anywhere; the
 *    needle token starts at logit -2 relative to the rest, so low-temperature
 *    policies rarely discover it.
 *
 * Rollout generation counts every trajectory against an explicit
 * GenerationCounter, which is how the no-extra-rollouts accounting is
 * enforced end to end. Evaluation uses a separate counter (or none).
 */

#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tampo/policy.hpp"
#include "tampo/rng.hpp"

namespace tampo::envs {

// ============================================================================
// Types
// ============================================================================

enum class TaskKind { TargetExact, TargetDense, RareNeedle };

inline const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::TargetExact: return "target_exact";
    case TaskKind::TargetDense: return "target_dense";
    case TaskKind::RareNeedle: return "rare_needle";
  }
  return "?";
}

struct TaskSpec {
  TaskKind kind = TaskKind::RareNeedle;
  int prompt_id = 0;
  std::vector<int> target;  // target_* kinds; length == episode_len
  int needle_token = 0;     // rare_needle kind
  int episode_len = 1;
};

/// Group of trajectories for one prompt, all sampled at one temperature.
struct RolloutGroup {
  int prompt_id = 0;
  double sampled_temperature = 1.0;
  std::vector<policy::Trajectory> trajectories;
};

struct EvalReport {
  int k = 0;
  double pass_at_1 = 0.0;
  double pass_at_k = 0.0;
  struct PromptResult {
    int prompt_id = 0;
    int successes = 0;
    int attempts = 0;
  };
  std::vector<PromptResult> per_prompt;
};

/// Atomic trajectory-generation tally. Training and evaluation keep separate
/// counters so eval never inflates the training rollout budget.
class GenerationCounter {
 public:
  GenerationCounter() = default;
  GenerationCounter(const GenerationCounter&) = delete;
  GenerationCounter& operator=(const GenerationCounter&) = delete;

  void add(std::uint64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

// ============================================================================
// Rewards
// ============================================================================

/// Sequence-level reward in [0, 1]. Deterministic in (task, tokens).
inline double reward(const TaskSpec& task, std::span<const int> tokens) {
  if (static_cast<int>(tokens.size()) != task.episode_len)
    throw std::invalid_argument("reward: token count does not match episode_len");
  switch (task.kind) {
    case TaskKind::TargetExact: {
      for (int i = 0; i < task.episode_len; ++i) {
        if (tokens[i] != task.target[i]) return 0.0;
      }
      return 1.0;
    }
    case TaskKind::TargetDense: {
      int matches = 0;
      for (int i = 0; i < task.episode_len; ++i) {
        if (tokens[i] == task.target[i]) ++matches;
      }
      return static_cast<double>(matches) / task.episode_len;
    }
    case TaskKind::RareNeedle: {
      for (int tok : tokens) {
        if (tok == task.needle_token) return 1.0;
      }
      return 0.0;
    }
  }
  throw std::logic_error("reward: unknown task kind");
}

// ============================================================================
// Rollouts
// ============================================================================

/// Sample one trajectory token by token, recording the pre-temperature logit
/// row of every visited state. Reward is left at 0 (filled by callers).
inline policy::Trajectory sample_trajectory(const policy::PolicyParams& params, int prompt_id,
                                            int episode_len, double temperature,
                                            rng::Stream& stream) {
  if (episode_len < 1 || episode_len > params.max_len)
    throw std::invalid_argument("sample_trajectory: episode_len out of range");
  policy::Trajectory traj;
  traj.prompt_id = prompt_id;
  traj.sampled_temperature = temperature;
  traj.tokens.reserve(episode_len);
  traj.step_logits.reserve(episode_len);
  const int table = params.table_for_prompt(prompt_id);
  int prev = params.start_token();
  for (int pos = 0; pos < episode_len; ++pos) {
    const auto row = params.row(table, pos, prev);
    const policy::TokenDist dist = policy::temp_softmax(row, temperature);
    const int token = policy::sample_token(dist, stream);
    traj.step_logits.emplace_back(row.begin(), row.end());
    traj.tokens.push_back(token);
    prev = token;
  }
  return traj;
}

/**
 * Generate a group of group_size trajectories for one task at one
 * temperature, fill rewards, and charge the generation counter by exactly
 * group_size. group_size must be at least 2 (group normalization needs
 * variance).
 */
inline RolloutGroup generate_group(const policy::PolicyParams& params, const TaskSpec& task,
                                   int group_size, double temperature, rng::Stream& stream,
                                   GenerationCounter& counter) {
  if (group_size < 2) throw std::invalid_argument("generate_group: group size must be >= 2");
  RolloutGroup group;
  group.prompt_id = task.prompt_id;
  group.sampled_temperature = temperature;
  group.trajectories.reserve(group_size);
  for (int i = 0; i < group_size; ++i) {
    policy::Trajectory traj =
        sample_trajectory(params, task.prompt_id, task.episode_len, temperature, stream);
    traj.reward = reward(task, traj.tokens);
    group.trajectories.push_back(std::move(traj));
  }
  counter.add(static_cast<std::uint64_t>(group_size));
  return group;
}

// ============================================================================
// Evaluation
// ============================================================================

/**
 * Pass@k over a task suite: k attempts per prompt at eval_temperature; a
 * prompt passes when any attempt reaches success_threshold. pass_at_1 uses
 * only the first attempt. Per-prompt streams are split from `stream`, so the
 * result is independent of evaluation order.
 */
inline EvalReport pass_at_k(const policy::PolicyParams& params, std::span<const TaskSpec> tasks,
                            int k, double eval_temperature, double success_threshold,
                            rng::Stream& stream, GenerationCounter* counter = nullptr) {
  if (tasks.empty()) throw std::invalid_argument("pass_at_k: empty task suite");
  if (k < 1) throw std::invalid_argument("pass_at_k: k must be >= 1");
  EvalReport report;
  report.k = k;
  int first_passes = 0;
  int any_passes = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpec& task = tasks[i];
    rng::Stream prompt_stream = stream.split(static_cast<std::uint64_t>(i));
    EvalReport::PromptResult result;
    result.prompt_id = task.prompt_id;
    result.attempts = k;
    bool first_pass = false;
    for (int attempt = 0; attempt < k; ++attempt) {
      policy::Trajectory traj = sample_trajectory(params, task.prompt_id, task.episode_len,
                                                  eval_temperature, prompt_stream);
      const double r = reward(task, traj.tokens);
      if (r >= success_threshold) {
        ++result.successes;
        if (attempt == 0) first_pass = true;
      }
    }
    if (counter != nullptr) counter->add(static_cast<std::uint64_t>(k));
    if (first_pass) ++first_passes;
    if (result.successes > 0) ++any_passes;
    report.per_prompt.push_back(result);
  }
  report.pass_at_1 = static_cast<double>(first_passes) / static_cast<double>(tasks.size());
  report.pass_at_k = static_cast<double>(any_passes) / static_cast<double>(tasks.size());
  return report;
}

// ============================================================================
// Initialization
// ============================================================================

/**
 * Initial policy parameters for a task suite: all zeros, except that for
 * rare_needle tasks the needle token starts at logit -2 in every row (of the
 * prompt's table when per-prompt, of the shared table otherwise).
 */
inline policy::PolicyParams initial_params(std::span<const TaskSpec> tasks, int vocab_size,
                                           int max_len, bool per_prompt = false) {
  const int num_tables = per_prompt ? static_cast<int>(tasks.size()) : 1;
  policy::PolicyParams params = policy::PolicyParams::zeros(vocab_size, max_len, num_tables);
  for (const TaskSpec& task : tasks) {
    if (task.kind != TaskKind::RareNeedle) continue;
    if (task.needle_token < 0 || task.needle_token >= vocab_size)
      throw std::invalid_argument("initial_params: needle_token out of vocabulary range");
    const int table = per_prompt ? params.table_for_prompt(task.prompt_id) : 0;
    for (int pos = 0; pos < max_len; ++pos) {
      for (int prev = 0; prev <= vocab_size; ++prev) {
        params.row(table, pos, prev)[task.needle_token] = -2.0;
      }
    }
  }
  return params;
}

}  // namespace tampo::envs
