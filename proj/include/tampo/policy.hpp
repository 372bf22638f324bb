#pragma once

/**
 * @file policy.hpp
 * @brief Tabular autoregressive softmax policy with temperature scaling.
 *
 * The policy state is the pair (position, previous token); parameters are a
 * dense table of logits indexed by that state, so log-likelihoods and their
 * gradients are exactly computable. A reserved previous-token index equal to
 * vocab_size marks the start of a sequence. Optionally the table carries one
 * slice per prompt (per-prompt conditioning); by default a single table is
 * shared across prompts.
 *
 * All probabilities come from a temperature-scaled softmax over a table row,
 * computed with max-subtraction so extreme logits and temperatures stay
 * finite.
 */

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tampo/rng.hpp"

namespace tampo::policy {

using LogitVector = std::vector<double>;
using TokenDist = std::vector<double>;

// ============================================================================
// Parameters
// ============================================================================

/**
 * Logit table of shape [num_tables][max_len][vocab_size + 1][vocab_size].
 * Row (pos, prev) holds the next-token logits after emitting `prev` at
 * position pos - 1; prev == vocab_size means "sequence start".
 */
struct PolicyParams {
  int vocab_size = 0;
  int max_len = 0;
  int num_tables = 1;
  std::vector<double> values;

  static PolicyParams zeros(int vocab_size, int max_len, int num_tables = 1) {
    if (vocab_size < 1) throw std::invalid_argument("PolicyParams: vocab_size must be positive");
    if (max_len < 1) throw std::invalid_argument("PolicyParams: max_len must be positive");
    if (num_tables < 1) throw std::invalid_argument("PolicyParams: num_tables must be positive");
    PolicyParams p;
    p.vocab_size = vocab_size;
    p.max_len = max_len;
    p.num_tables = num_tables;
    p.values.assign(static_cast<std::size_t>(num_tables) * max_len * (vocab_size + 1) * vocab_size,
                    0.0);
    return p;
  }

  static PolicyParams zeros_like(const PolicyParams& other) {
    return zeros(other.vocab_size, other.max_len, other.num_tables);
  }

  /// Reserved previous-token index for the sequence start.
  int start_token() const { return vocab_size; }

  bool same_shape(const PolicyParams& other) const {
    return vocab_size == other.vocab_size && max_len == other.max_len &&
           num_tables == other.num_tables;
  }

  /// Table slice used for a prompt (identity when per-prompt, 0 when shared).
  int table_for_prompt(int prompt_id) const {
    if (num_tables == 1) return 0;
    if (prompt_id < 0 || prompt_id >= num_tables) {
      throw std::invalid_argument("PolicyParams: prompt_id " + std::to_string(prompt_id) +
                                  " out of range for " + std::to_string(num_tables) + " tables");
    }
    return prompt_id;
  }

  std::size_t row_offset(int table, int position, int prev_token) const {
    if (table < 0 || table >= num_tables)
      throw std::invalid_argument("PolicyParams: table index out of range");
    if (position < 0 || position >= max_len)
      throw std::invalid_argument("PolicyParams: position out of range");
    if (prev_token < 0 || prev_token > vocab_size)
      throw std::invalid_argument("PolicyParams: prev_token out of range");
    return ((static_cast<std::size_t>(table) * max_len + position) * (vocab_size + 1) +
            prev_token) *
           vocab_size;
  }

  std::span<double> row(int table, int position, int prev_token) {
    return {values.data() + row_offset(table, position, prev_token),
            static_cast<std::size_t>(vocab_size)};
  }

  std::span<const double> row(int table, int position, int prev_token) const {
    return {values.data() + row_offset(table, position, prev_token),
            static_cast<std::size_t>(vocab_size)};
  }
};

// ============================================================================
// Trajectories
// ============================================================================

/**
 * One rollout: tokens plus the full pre-temperature logit row recorded at
 * every generation step. The stored rows freeze the rollout-time policy, so
 * likelihoods under other (virtual) temperatures can be evaluated later
 * without touching the live parameters.
 */
struct Trajectory {
  int prompt_id = 0;
  std::vector<int> tokens;
  std::vector<LogitVector> step_logits;
  double reward = 0.0;
  std::optional<double> advantage;
  double sampled_temperature = 1.0;

  int length() const { return static_cast<int>(tokens.size()); }

  /// Previous token for step t (start marker at t == 0).
  int prev_token(int t, int start_token) const { return t == 0 ? start_token : tokens[t - 1]; }
};

namespace detail {

inline void check_trajectory(const Trajectory& traj, const PolicyParams& params) {
  if (traj.tokens.empty()) throw std::invalid_argument("trajectory must have at least one token");
  if (traj.tokens.size() != traj.step_logits.size())
    throw std::invalid_argument("trajectory tokens/step_logits length mismatch");
  if (static_cast<int>(traj.tokens.size()) > params.max_len)
    throw std::invalid_argument("trajectory longer than policy max_len");
  for (int tok : traj.tokens) {
    if (tok < 0 || tok >= params.vocab_size)
      throw std::invalid_argument("trajectory token out of vocabulary range");
  }
}

}  // namespace detail

// ============================================================================
// Operations
// ============================================================================

/// Logit row for state (position, prev_token), as stored in the table.
inline LogitVector logits(const PolicyParams& params, int prompt_id, int position,
                          int prev_token) {
  const auto row = params.row(params.table_for_prompt(prompt_id), position, prev_token);
  return LogitVector(row.begin(), row.end());
}

/**
 * Temperature-scaled softmax: probs[a] = exp(z[a]/T) / sum_a' exp(z[a']/T),
 * evaluated with max-subtraction. T must be positive and z finite.
 */
inline TokenDist temp_softmax(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temp_softmax: temperature must be > 0");
  if (z.empty()) throw std::invalid_argument("temp_softmax: empty logit vector");
  double max_z = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("temp_softmax: non-finite logit");
    if (v > max_z) max_z = v;
  }
  TokenDist probs(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    probs[i] = std::exp((z[i] - max_z) / temperature);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

/// log softmax(z/T)[token], sharing the stabilization with temp_softmax.
inline double log_prob_at(std::span<const double> z, double temperature, int token) {
  if (!(temperature > 0.0)) throw std::invalid_argument("log_prob_at: temperature must be > 0");
  if (token < 0 || static_cast<std::size_t>(token) >= z.size())
    throw std::invalid_argument("log_prob_at: token out of range");
  double max_z = -std::numeric_limits<double>::infinity();
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("log_prob_at: non-finite logit");
    if (v > max_z) max_z = v;
  }
  double sum = 0.0;
  for (double v : z) sum += std::exp((v - max_z) / temperature);
  return (z[token] - max_z) / temperature - std::log(sum);
}

/// Inverse-CDF token draw from a distribution.
inline int sample_token(std::span<const double> dist, rng::Stream& stream) {
  for (double p : dist) {
    if (!std::isfinite(p)) throw std::invalid_argument("sample_token: non-finite probability");
  }
  return stream.categorical(dist);
}

struct LogProbGrad {
  double logprob = 0.0;
  PolicyParams grad;
};

/**
 * Trajectory log-probability under the CURRENT parameters at temperature T,
 * with its analytic gradient.
 *
 * The gradient touches exactly one table row per step: at state
 * (t, prev_token(t)) the row gradient is (1/T) * (onehot(o_t) - pi(.|s_t)),
 * which sums to zero along the token axis.
 */
inline LogProbGrad logprob_and_grad(const PolicyParams& params, const Trajectory& traj,
                                    double temperature) {
  detail::check_trajectory(traj, params);
  LogProbGrad out;
  out.grad = PolicyParams::zeros_like(params);
  const int table = params.table_for_prompt(traj.prompt_id);
  const int start = params.start_token();
  for (int t = 0; t < traj.length(); ++t) {
    const int token = traj.tokens[t];
    const int prev = traj.prev_token(t, start);
    const auto row = params.row(table, t, prev);
    const TokenDist probs = temp_softmax(row, temperature);
    out.logprob += std::log(probs[token]);
    auto grad_row = out.grad.row(table, t, prev);
    for (int a = 0; a < params.vocab_size; ++a) {
      const double indicator = (a == token) ? 1.0 : 0.0;
      grad_row[a] += (indicator - probs[a]) / temperature;
    }
  }
  return out;
}

}  // namespace tampo::policy
