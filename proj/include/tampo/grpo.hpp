#pragma once

/**
 * @file grpo.hpp
 * @brief Critic-free inner loop: group-relative advantages and the clipped
 *        surrogate objective with a KL penalty to a reference policy.
 *
 * Advantages standardize rewards within a rollout group using the population
 * standard deviation; a group whose std falls below std_floor is
 * uninformative and contributes all-zero advantages (and hence zero
 * gradient) rather than being resampled, which keeps the rollout accounting
 * exact.
 *
 * The objective over one group is
 *
 *   J = (1/G) sum_i (1/|tau_i|) sum_t [ min(rho*A_i, clip(rho, 1-eps, 1+eps)*A_i)
 *                                        - beta * khat_t ]
 *
 * with rho the current/old probability ratio at the sampled token and khat_t
 * the nonnegative per-token KL estimate r - log r - 1, r = pi_ref/pi_theta.
 * The gradient is analytic in the current parameters; old and reference
 * parameters are constants.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tampo/envs.hpp"
#include "tampo/policy.hpp"

namespace tampo::grpo {

struct GrpoConfig {
  double clip_eps = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 1e-2;
  int inner_epochs = 1;
  double std_floor = 1e-8;
  bool cosine_lr = false;  // per-step cosine decay of learning_rate, off by default
};

// ============================================================================
// Advantages
// ============================================================================

/// Group-relative advantages: (r_i - mean) / population std, or all zeros
/// when the group std is below std_floor.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double std_floor = 1e-8) {
  const std::size_t n = rewards.size();
  if (n < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double std = std::sqrt(var);
  std::vector<double> adv(n, 0.0);
  if (std < std_floor) return adv;
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / std;
  return adv;
}

/// Fill trajectory advantages in place. Returns false for an uninformative
/// (zero-variance) group.
inline bool compute_group_advantages(envs::RolloutGroup& group, double std_floor = 1e-8) {
  std::vector<double> rewards;
  rewards.reserve(group.trajectories.size());
  for (const auto& traj : group.trajectories) rewards.push_back(traj.reward);
  const std::vector<double> adv = group_advantages(rewards, std_floor);
  bool informative = false;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    group.trajectories[i].advantage = adv[i];
    if (adv[i] != 0.0) informative = true;
  }
  return informative;
}

// ============================================================================
// Objective
// ============================================================================

/// Per-token KL estimate r - log r - 1 with r = ref_prob / cur_prob.
/// Nonnegative for all positive inputs, zero iff the probabilities match.
inline double kl_estimate(double ref_prob, double cur_prob) {
  const double r = ref_prob / cur_prob;
  return r - std::log(r) - 1.0;
}

struct ObjectiveGrad {
  double objective = 0.0;
  policy::PolicyParams grad;
};

/**
 * Clipped surrogate objective with KL penalty over one rollout group, plus
 * its analytic gradient in the current parameters. Trajectory advantages
 * must be filled. `temperature` is the rollout temperature the group was
 * sampled at.
 */
inline ObjectiveGrad objective_grad(const policy::PolicyParams& params,
                                    const policy::PolicyParams& old_params,
                                    const policy::PolicyParams& ref_params,
                                    const envs::RolloutGroup& group, double temperature,
                                    const GrpoConfig& cfg) {
  if (!params.same_shape(old_params) || !params.same_shape(ref_params))
    throw std::invalid_argument("objective_grad: parameter shape mismatch");
  if (group.trajectories.empty()) throw std::invalid_argument("objective_grad: empty group");

  ObjectiveGrad out;
  out.grad = policy::PolicyParams::zeros_like(params);
  const double group_size = static_cast<double>(group.trajectories.size());
  const int start = params.start_token();

  for (const policy::Trajectory& traj : group.trajectories) {
    if (!traj.advantage.has_value())
      throw std::invalid_argument("objective_grad: trajectory advantage not set");
    policy::detail::check_trajectory(traj, params);
    const double advantage = *traj.advantage;
    const int table = params.table_for_prompt(traj.prompt_id);
    const double inv_len = 1.0 / static_cast<double>(traj.length());

    for (int t = 0; t < traj.length(); ++t) {
      const int token = traj.tokens[t];
      const int prev = traj.prev_token(t, start);
      const policy::TokenDist probs = policy::temp_softmax(params.row(table, t, prev), temperature);
      const double cur_p = probs[token];
      const double old_p =
          std::exp(policy::log_prob_at(old_params.row(table, t, prev), temperature, token));
      const double ref_p =
          std::exp(policy::log_prob_at(ref_params.row(table, t, prev), temperature, token));
      if (!(old_p > 0.0))
        throw std::invalid_argument("objective_grad: old-policy probability underflowed to zero");

      const double ratio = cur_p / old_p;
      const double clipped =
          std::min(std::max(ratio, 1.0 - cfg.clip_eps), 1.0 + cfg.clip_eps);
      const double unclipped_term = ratio * advantage;
      const double clipped_term = clipped * advantage;
      const double surrogate = std::min(unclipped_term, clipped_term);

      const double r = ref_p / cur_p;
      const double kl = kl_estimate(ref_p, cur_p);

      out.objective += inv_len * (surrogate - cfg.kl_beta * kl) / group_size;

      // d(surrogate)/d(logit) flows through rho only when the unclipped branch
      // is active; d(-beta*kl)/d(logit) carries the factor -(1 - r).
      const double surrogate_coeff = (unclipped_term <= clipped_term) ? advantage * ratio : 0.0;
      const double coeff =
          inv_len * (surrogate_coeff - cfg.kl_beta * (1.0 - r)) / group_size / temperature;
      auto grad_row = out.grad.row(table, t, prev);
      for (int a = 0; a < params.vocab_size; ++a) {
        const double indicator = (a == token) ? 1.0 : 0.0;
        grad_row[a] += coeff * (indicator - probs[a]);
      }
    }
  }
  return out;
}

// ============================================================================
// Update
// ============================================================================

/// Plain gradient ascent: params + learning_rate * gradient.
inline policy::PolicyParams policy_update(policy::PolicyParams params,
                                          const policy::PolicyParams& gradient,
                                          const GrpoConfig& cfg) {
  if (!params.same_shape(gradient))
    throw std::invalid_argument("policy_update: gradient shape mismatch");
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    if (!std::isfinite(gradient.values[i]))
      throw std::runtime_error("policy_update: non-finite gradient entry at index " +
                               std::to_string(i));
    params.values[i] += cfg.learning_rate * gradient.values[i];
  }
  return params;
}

}  // namespace tampo::grpo
