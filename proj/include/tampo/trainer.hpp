#pragma once

/**
 * @file trainer.hpp
 * @brief Two-loop training orchestration and temperature schedules.
 *
 * One training step: pick a temperature (warmup pin, meta-policy sample, or
 * a fixed/linear baseline), roll out a batch of groups at it, standardize
 * rewards into advantages, apply one GRPO update, and -- for the adaptive
 * schedule only -- fold the batch's temperature-specific advantages into the
 * meta-policy state. Baselines keep the meta machinery inert so rollout
 * accounting is directly comparable.
 *
 * The rollout archive (opt-in) retains every trajectory with its advantage,
 * which feeds the likelihood-optimal-temperature diagnostic: per window of
 * training steps, the distribution of T* split by advantage sign.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tampo/envs.hpp"
#include "tampo/grpo.hpp"
#include "tampo/policy.hpp"
#include "tampo/rng.hpp"
#include "tampo/tempmeta.hpp"

namespace tampo::trainer {

// ============================================================================
// Schedules
// ============================================================================

struct Schedule {
  enum class Kind { Tampo, Fixed, Linear };

  Kind kind = Kind::Tampo;
  double fixed_temperature = 1.0;
  double linear_from = 0.9;
  double linear_to = 1.5;

  static Schedule tampo() { return {}; }

  static Schedule fixed(double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("Schedule::fixed: temperature must be > 0");
    Schedule s;
    s.kind = Kind::Fixed;
    s.fixed_temperature = temperature;
    return s;
  }

  static Schedule linear(double from, double to) {
    if (!(from > 0.0) || !(to > 0.0))
      throw std::invalid_argument("Schedule::linear: temperatures must be > 0");
    Schedule s;
    s.kind = Kind::Linear;
    s.linear_from = from;
    s.linear_to = to;
    return s;
  }

  /// Parse "tampo", "fixed:T", or "linear:T0:T1".
  static Schedule parse(const std::string& text);

  std::string to_string() const;
};

// ============================================================================
// Records
// ============================================================================

/// Observable state of one training step. wall_ms is measured and therefore
/// not part of the reproducible serialization.
struct MetricsRecord {
  int step = 0;
  double sampled_T = 0.0;
  std::vector<double> meta_dist;
  std::vector<double> ema_adv;
  double mean_reward = 0.0;
  double advantage_mean = 0.0;
  double advantage_std = 0.0;
  double fraction_zero_variance_groups = 0.0;
  std::uint64_t generation_counter = 0;
  double wall_ms = 0.0;
};

struct TrainOptions {
  int steps = 1;
  int batch_size = 1;
  int group_size = 2;
  std::uint64_t seed = 1;
  bool archive_rollouts = false;
};

struct TrainRun {
  Schedule schedule;
  grpo::GrpoConfig grpo_cfg;
  tempmeta::TampoConfig tampo_cfg;
  TrainOptions options;
  std::vector<MetricsRecord> metrics;
  policy::PolicyParams final_params;
  tempmeta::MetaPolicyState final_meta;
  bool archived = false;
  std::vector<std::vector<policy::Trajectory>> archive;  // per step, when archived
};

/// Training failure carrying the step it occurred at.
struct TrainError : std::runtime_error {
  int step;
  TrainError(int at_step, const std::string& what)
      : std::runtime_error("step " + std::to_string(at_step) + ": " + what), step(at_step) {}
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

namespace detail {

// Stream purposes; combined with the run seed and step/slot indices so every
// consumer has an independent substream.
namespace purpose {
constexpr std::uint64_t kShuffle = 1;
constexpr std::uint64_t kTemperature = 2;
constexpr std::uint64_t kRollout = 3;
}  // namespace purpose

/// Round-robin task sampler, reshuffled each epoch from the run seed.
class TaskSampler {
 public:
  TaskSampler(std::size_t task_count, std::uint64_t seed)
      : order_(task_count), cursor_(task_count), epoch_(0), seed_(seed) {
    for (std::size_t i = 0; i < task_count; ++i) order_[i] = i;
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      rng::Stream stream(rng::derive(seed_, {purpose::kShuffle, epoch_}));
      rng::shuffle(order_, stream);
      cursor_ = 0;
      ++epoch_;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_;
  std::uint64_t epoch_;
  std::uint64_t seed_;
};

inline int warmup_steps(double warmup_fraction, int total_steps) {
  return static_cast<int>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
}

inline double linear_temperature(const Schedule& schedule, int step, int total_steps) {
  if (total_steps <= 1) return schedule.linear_from;
  const double t = static_cast<double>(step - 1) / static_cast<double>(total_steps - 1);
  return schedule.linear_from + (schedule.linear_to - schedule.linear_from) * t;
}

inline double cosine_factor(int step, int total_steps) {
  if (total_steps <= 1) return 1.0;
  const double t = static_cast<double>(step - 1) / static_cast<double>(total_steps - 1);
  return 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return (n % 2 == 1) ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

// ============================================================================
// Training loop
// ============================================================================

/**
 * Run `options.steps` training steps over the task suite. Deterministic in
 * (inputs, seed): identical calls produce identical metric streams. Every
 * record is also forwarded to `sink` as soon as it is complete.
 */
inline TrainRun train(policy::PolicyParams initial, std::span<const envs::TaskSpec> tasks,
                      const Schedule& schedule, const grpo::GrpoConfig& grpo_cfg,
                      const tempmeta::TampoConfig& tampo_cfg, const TrainOptions& options,
                      const MetricsSink& sink = {}) {
  if (options.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  if (options.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (options.group_size < 2) throw std::invalid_argument("train: group_size must be >= 2");
  if (tasks.empty()) throw std::invalid_argument("train: empty task suite");

  TrainRun run;
  run.schedule = schedule;
  run.grpo_cfg = grpo_cfg;
  run.tampo_cfg = tampo_cfg;
  run.options = options;
  run.archived = options.archive_rollouts;

  policy::PolicyParams params = std::move(initial);
  const policy::PolicyParams reference = params;  // frozen initial parameters
  tempmeta::MetaPolicyState meta = tempmeta::MetaPolicyState::initial(tampo_cfg.grid.size());
  envs::GenerationCounter counter;
  detail::TaskSampler sampler(tasks.size(), options.seed);
  const int warmup = detail::warmup_steps(tampo_cfg.warmup_fraction, options.steps);

  for (int step = 1; step <= options.steps; ++step) {
    const auto step_start = std::chrono::steady_clock::now();

    // Outer loop: pick the step temperature.
    double temperature = 0.0;
    if (schedule.kind == Schedule::Kind::Tampo) {
      if (step <= warmup) {
        temperature = tampo_cfg.warmup_temperature;
      } else {
        rng::Stream temp_stream(
            rng::derive(options.seed, {detail::purpose::kTemperature, static_cast<std::uint64_t>(step)}));
        temperature =
            tempmeta::sample_temperature(meta.dist, tampo_cfg.grid, tampo_cfg.top_p, temp_stream)
                .temperature;
      }
    } else if (schedule.kind == Schedule::Kind::Fixed) {
      temperature = schedule.fixed_temperature;
    } else {
      temperature = detail::linear_temperature(schedule, step, options.steps);
    }

    // Inner loop: rollouts, advantages, one GRPO update over the batch.
    std::vector<envs::RolloutGroup> groups;
    groups.reserve(options.batch_size);
    int zero_variance_groups = 0;
    for (int slot = 0; slot < options.batch_size; ++slot) {
      const envs::TaskSpec& task = tasks[sampler.next()];
      rng::Stream rollout_stream(rng::derive(
          options.seed,
          {detail::purpose::kRollout, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot)}));
      envs::RolloutGroup group = envs::generate_group(params, task, options.group_size,
                                                      temperature, rollout_stream, counter);
      if (!grpo::compute_group_advantages(group, grpo_cfg.std_floor)) ++zero_variance_groups;
      groups.push_back(std::move(group));
    }

    grpo::GrpoConfig step_cfg = grpo_cfg;
    if (grpo_cfg.cosine_lr) {
      step_cfg.learning_rate =
          grpo_cfg.learning_rate * detail::cosine_factor(step, options.steps);
    }
    try {
      const policy::PolicyParams old_params = params;
      for (int epoch = 0; epoch < grpo_cfg.inner_epochs; ++epoch) {
        policy::PolicyParams grad = policy::PolicyParams::zeros_like(params);
        double objective = 0.0;
        for (const envs::RolloutGroup& group : groups) {
          grpo::ObjectiveGrad og =
              grpo::objective_grad(params, old_params, reference, group, temperature, step_cfg);
          objective += og.objective;
          for (std::size_t i = 0; i < grad.values.size(); ++i) grad.values[i] += og.grad.values[i];
        }
        objective /= static_cast<double>(groups.size());
        if (!std::isfinite(objective)) {
          throw std::runtime_error("non-finite objective (" + std::to_string(objective) +
                                   ") at lr " + std::to_string(step_cfg.learning_rate) +
                                   ", temperature " + std::to_string(temperature));
        }
        for (double& g : grad.values) g /= static_cast<double>(groups.size());
        params = grpo::policy_update(std::move(params), grad, step_cfg);
      }
    } catch (const std::exception& e) {
      throw TrainError(step, e.what());
    }

    // Outer loop: meta-policy update (adaptive schedule only, warmup included).
    if (schedule.kind == Schedule::Kind::Tampo) {
      const std::vector<double> batch_adv = tempmeta::batch_aggregate(groups, tampo_cfg.grid);
      meta = tempmeta::ema_update(meta, batch_adv, tampo_cfg.alpha);
      meta.dist = tempmeta::meta_distribution(meta.ema_adv, tampo_cfg.prob_floor);
    }

    // Record.
    MetricsRecord record;
    record.step = step;
    record.sampled_T = temperature;
    record.meta_dist = meta.dist;
    record.ema_adv = meta.ema_adv;
    std::vector<double> rewards;
    std::vector<double> advantages;
    rewards.reserve(groups.size() * options.group_size);
    advantages.reserve(groups.size() * options.group_size);
    for (const envs::RolloutGroup& group : groups) {
      for (const policy::Trajectory& traj : group.trajectories) {
        rewards.push_back(traj.reward);
        advantages.push_back(traj.advantage.value());
      }
    }
    record.mean_reward = detail::mean_std(rewards).mean;
    const detail::MeanStd adv_stats = detail::mean_std(advantages);
    record.advantage_mean = adv_stats.mean;
    record.advantage_std = adv_stats.std;
    record.fraction_zero_variance_groups =
        static_cast<double>(zero_variance_groups) / static_cast<double>(options.batch_size);
    record.generation_counter = counter.count();
    record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               step_start)
                         .count();
    if (options.archive_rollouts) {
      std::vector<policy::Trajectory> step_archive;
      step_archive.reserve(rewards.size());
      for (envs::RolloutGroup& group : groups) {
        for (policy::Trajectory& traj : group.trajectories) {
          step_archive.push_back(std::move(traj));
        }
      }
      run.archive.push_back(std::move(step_archive));
    }
    if (sink) sink(record);
    run.metrics.push_back(std::move(record));
  }

  run.final_params = std::move(params);
  run.final_meta = std::move(meta);
  return run;
}

// ============================================================================
// Likelihood-optimal-temperature diagnostic
// ============================================================================

/// One trajectory's contribution to the diagnostic: the step it was sampled
/// at, its advantage, and its likelihood-optimal grid temperature.
struct TstarSample {
  int step = 0;
  double advantage = 0.0;
  double tstar = 0.0;
};

/// Per-window T* statistics split by advantage sign (zero advantages are
/// excluded entirely).
struct TstarWindow {
  int first_step = 0;
  int last_step = 0;
  int positive_count = 0;
  double positive_mean = 0.0;
  double positive_std = 0.0;
  double positive_median = 0.0;
  int negative_count = 0;
  double negative_mean = 0.0;
  double negative_std = 0.0;
  double negative_median = 0.0;
};

/// Extract (step, advantage, T*) for every archived trajectory.
inline std::vector<TstarSample> tstar_samples(const TrainRun& run,
                                              const tempmeta::TemperatureGrid& grid) {
  std::vector<TstarSample> samples;
  for (std::size_t s = 0; s < run.archive.size(); ++s) {
    for (const policy::Trajectory& traj : run.archive[s]) {
      TstarSample sample;
      sample.step = static_cast<int>(s) + 1;
      sample.advantage = traj.advantage.value_or(0.0);
      sample.tstar = likelihood_optimal_temp(traj, grid).temperature;
      samples.push_back(sample);
    }
  }
  return samples;
}

/// Window raw samples into per-window sign-split statistics.
inline std::vector<TstarWindow> window_tstar_samples(std::span<const TstarSample> samples,
                                                     int window_steps = 5) {
  if (window_steps < 1) throw std::invalid_argument("window_tstar_samples: window must be >= 1");
  int max_step = 0;
  for (const TstarSample& s : samples) max_step = std::max(max_step, s.step);
  std::vector<TstarWindow> windows;
  for (int first = 1; first <= max_step; first += window_steps) {
    const int last = std::min(first + window_steps - 1, max_step);
    std::vector<double> positive;
    std::vector<double> negative;
    for (const TstarSample& s : samples) {
      if (s.step < first || s.step > last || s.advantage == 0.0) continue;
      (s.advantage > 0.0 ? positive : negative).push_back(s.tstar);
    }
    TstarWindow w;
    w.first_step = first;
    w.last_step = last;
    w.positive_count = static_cast<int>(positive.size());
    w.negative_count = static_cast<int>(negative.size());
    const detail::MeanStd pos = detail::mean_std(positive);
    const detail::MeanStd neg = detail::mean_std(negative);
    w.positive_mean = pos.mean;
    w.positive_std = pos.std;
    w.positive_median = detail::median(positive);
    w.negative_mean = neg.mean;
    w.negative_std = neg.std;
    w.negative_median = detail::median(negative);
    windows.push_back(w);
  }
  return windows;
}

/**
 * Per-window statistics of likelihood-optimal temperatures split by
 * advantage sign. Requires the rollout archive; returns nullopt when the run
 * was trained without it.
 */
inline std::optional<std::vector<TstarWindow>> tstar_by_advantage(
    const TrainRun& run, const tempmeta::TemperatureGrid& grid, int window_steps = 5) {
  if (!run.archived) return std::nullopt;
  return window_tstar_samples(tstar_samples(run, grid), window_steps);
}

// ============================================================================
// Schedule parsing
// ============================================================================

inline Schedule Schedule::parse(const std::string& text) {
  if (text == "tampo") return Schedule::tampo();
  const auto bad = [&]() -> std::invalid_argument {
    return std::invalid_argument("Schedule::parse: expected 'tampo', 'fixed:T', or 'linear:T0:T1', got '" +
                                 text + "'");
  };
  if (text.rfind("fixed:", 0) == 0) {
    std::size_t consumed = 0;
    double t = 0.0;
    try {
      t = std::stod(text.substr(6), &consumed);
    } catch (const std::exception&) {
      throw bad();
    }
    if (consumed != text.size() - 6 || !(t > 0.0)) throw bad();
    return Schedule::fixed(t);
  }
  if (text.rfind("linear:", 0) == 0) {
    const std::string rest = text.substr(7);
    const std::size_t colon = rest.find(':');
    if (colon == std::string::npos) throw bad();
    double from = 0.0;
    double to = 0.0;
    try {
      std::size_t c1 = 0;
      std::size_t c2 = 0;
      from = std::stod(rest.substr(0, colon), &c1);
      to = std::stod(rest.substr(colon + 1), &c2);
      if (c1 != colon || c2 != rest.size() - colon - 1) throw bad();
    } catch (const std::invalid_argument&) {
      throw bad();
    } catch (const std::out_of_range&) {
      throw bad();
    }
    if (!(from > 0.0) || !(to > 0.0)) throw bad();
    return Schedule::linear(from, to);
  }
  throw bad();
}

inline std::string Schedule::to_string() const {
  switch (kind) {
    case Kind::Tampo: return "tampo";
    case Kind::Fixed: return "fixed:" + std::to_string(fixed_temperature);
    case Kind::Linear:
      return "linear:" + std::to_string(linear_from) + ":" + std::to_string(linear_to);
  }
  return "?";
}

}  // namespace tampo::trainer
