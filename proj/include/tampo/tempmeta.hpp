#pragma once

/**
 * @file tempmeta.hpp
 * @brief Temperature meta-policy: virtual-temperature likelihoods, sparsemax
 *        credit assignment, EMA smoothing, and top-p temperature sampling.
 *
 * The outer loop never generates a rollout. It re-scores trajectories that
 * the inner loop already produced: each trajectory's stored logit rows give
 * its average log-likelihood under every candidate ("virtual") temperature,
 * sparsemax turns those likelihoods into a sparse weighting over the grid,
 * and scaling by the trajectory advantage yields temperature-specific
 * advantages. Batch means are smoothed with an EMA and min-max normalized
 * into the sampling distribution for the next step's temperature.
 *
 * Average (length-normalized) log-likelihood is used throughout so that
 * mixed-length trajectories weigh in equally.
 */

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "tampo/envs.hpp"
#include "tampo/policy.hpp"
#include "tampo/rng.hpp"

namespace tampo::tempmeta {

// ============================================================================
// Types
// ============================================================================

/// Strictly ascending positive candidate temperatures, at least two.
struct TemperatureGrid {
  std::vector<double> values;

  TemperatureGrid() = default;

  explicit TemperatureGrid(std::vector<double> temps) : values(std::move(temps)) {
    if (values.size() < 2)
      throw std::invalid_argument("TemperatureGrid: need at least 2 temperatures");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0))
        throw std::invalid_argument("TemperatureGrid: temperatures must be positive");
      if (i > 0 && !(values[i] > values[i - 1]))
        throw std::invalid_argument("TemperatureGrid: temperatures must be strictly ascending");
    }
  }

  /// Evenly spaced grid {min, min+interval, ...} covering [min, max].
  static TemperatureGrid from_range(double min, double max, double interval) {
    if (!(interval > 0.0)) throw std::invalid_argument("TemperatureGrid: interval must be > 0");
    if (!(max > min)) throw std::invalid_argument("TemperatureGrid: max must exceed min");
    const int count = static_cast<int>(std::floor((max - min) / interval + 1e-9)) + 1;
    std::vector<double> temps(count);
    for (int i = 0; i < count; ++i) temps[i] = min + i * interval;
    return TemperatureGrid(std::move(temps));
  }

  int size() const { return static_cast<int>(values.size()); }
};

/// EMA of temperature advantages plus the distribution derived from it.
struct MetaPolicyState {
  std::vector<double> ema_adv;
  std::vector<double> dist;
  int step = 0;

  static MetaPolicyState initial(int num_temperatures) {
    if (num_temperatures < 2)
      throw std::invalid_argument("MetaPolicyState: need at least 2 temperatures");
    MetaPolicyState state;
    state.ema_adv.assign(num_temperatures, 0.0);
    state.dist.assign(num_temperatures, 1.0 / num_temperatures);
    return state;
  }
};

struct TampoConfig {
  TemperatureGrid grid = TemperatureGrid::from_range(0.6, 1.5, 0.1);
  double alpha = 0.05;
  double top_p = 0.7;
  double warmup_fraction = 0.10;
  double warmup_temperature = 1.0;
  double prob_floor = 0.0;  // optional floor on the meta distribution, off by default
};

// ============================================================================
// Virtual-temperature likelihoods
// ============================================================================

/**
 * Average log-likelihood of a trajectory under temperature T, using the
 * STORED rollout-time logits: (1/n) sum_t [ z_t[o_t]/T - logsumexp(z_t/T) ].
 */
inline double avg_loglik_at_temp(const policy::Trajectory& traj, double temperature) {
  if (traj.tokens.empty())
    throw std::invalid_argument("avg_loglik_at_temp: empty trajectory");
  if (traj.tokens.size() != traj.step_logits.size())
    throw std::invalid_argument("avg_loglik_at_temp: tokens/step_logits length mismatch");
  double total = 0.0;
  for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
    total += policy::log_prob_at(traj.step_logits[t], temperature, traj.tokens[t]);
  }
  return total / static_cast<double>(traj.tokens.size());
}

struct OptimalTemp {
  double temperature = 0.0;
  int index = 0;
};

/// Grid temperature maximizing avg_loglik_at_temp; ties break toward the
/// lower temperature.
inline OptimalTemp likelihood_optimal_temp(const policy::Trajectory& traj,
                                           const TemperatureGrid& grid) {
  OptimalTemp best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.size(); ++k) {
    const double value = avg_loglik_at_temp(traj, grid.values[k]);
    if (value > best_value) {
      best_value = value;
      best = {grid.values[k], k};
    }
  }
  return best;
}

// ============================================================================
// Sparsemax
// ============================================================================

/**
 * Euclidean projection onto the probability simplex (sparsemax).
 * Sort descending, keep the largest support k with 1 + k*v_(k) > sum_{j<=k}
 * v_(j), threshold at tau = (support sum - 1)/k, clamp the rest to zero.
 */
inline std::vector<double> sparsemax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("sparsemax: empty input");
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("sparsemax: non-finite input");
  }
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double support_sum = 0.0;
  int support = 0;
  double cumulative = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double k = static_cast<double>(j + 1);
    if (1.0 + k * sorted[j] > cumulative) {
      support = static_cast<int>(j + 1);
      support_sum = cumulative;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(support);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

// ============================================================================
// Temperature-specific advantages
// ============================================================================

/// Sparsemax-normalized likelihood profile of one trajectory over the grid,
/// scaled by its advantage. Sums to the advantage (sparsemax sums to one).
inline std::vector<double> temp_specific_advantages(const policy::Trajectory& traj,
                                                    const TemperatureGrid& grid) {
  if (!traj.advantage.has_value())
    throw std::invalid_argument("temp_specific_advantages: trajectory advantage not set");
  std::vector<double> loglik(grid.size());
  for (int k = 0; k < grid.size(); ++k) loglik[k] = avg_loglik_at_temp(traj, grid.values[k]);
  std::vector<double> weights = sparsemax(loglik);
  for (double& w : weights) w *= *traj.advantage;
  return weights;
}

/// Mean of temp_specific_advantages over every trajectory of every group,
/// reduced in deterministic order.
inline std::vector<double> batch_aggregate(std::span<const envs::RolloutGroup> groups,
                                           const TemperatureGrid& grid) {
  if (groups.empty()) throw std::invalid_argument("batch_aggregate: empty batch");
  std::vector<double> total(grid.size(), 0.0);
  std::size_t count = 0;
  for (const envs::RolloutGroup& group : groups) {
    for (const policy::Trajectory& traj : group.trajectories) {
      const std::vector<double> adv = temp_specific_advantages(traj, grid);
      for (int k = 0; k < grid.size(); ++k) total[k] += adv[k];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("batch_aggregate: batch has no trajectories");
  for (double& x : total) x /= static_cast<double>(count);
  return total;
}

// ============================================================================
// Meta-policy state
// ============================================================================

/// ema' = (1 - alpha) * ema + alpha * batch, step incremented. The derived
/// distribution is left untouched; recompute it with meta_distribution.
inline MetaPolicyState ema_update(const MetaPolicyState& state, std::span<const double> batch_adv,
                                  double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw std::invalid_argument("ema_update: alpha must be in [0, 1)");
  if (batch_adv.size() != state.ema_adv.size())
    throw std::invalid_argument("ema_update: dimension mismatch");
  MetaPolicyState next = state;
  for (std::size_t k = 0; k < batch_adv.size(); ++k) {
    next.ema_adv[k] = (1.0 - alpha) * state.ema_adv[k] + alpha * batch_adv[k];
  }
  next.step = state.step + 1;
  return next;
}

/**
 * Min-max normalized distribution over temperatures. The argmin temperature
 * receives probability exactly 0; a degenerate range (max == min within
 * 1e-12) falls back to uniform. An optional positive floor lifts every entry
 * to at least `prob_floor` and renormalizes (experimental, off by default).
 */
inline std::vector<double> meta_distribution(std::span<const double> ema_adv,
                                             double prob_floor = 0.0) {
  if (ema_adv.size() < 2) throw std::invalid_argument("meta_distribution: need at least 2 entries");
  for (double x : ema_adv) {
    if (!std::isfinite(x)) throw std::invalid_argument("meta_distribution: non-finite input");
  }
  const auto [min_it, max_it] = std::minmax_element(ema_adv.begin(), ema_adv.end());
  std::vector<double> dist(ema_adv.size());
  if (*max_it - *min_it < 1e-12) {
    std::fill(dist.begin(), dist.end(), 1.0 / static_cast<double>(ema_adv.size()));
  } else {
    const double range = *max_it - *min_it;
    double sum = 0.0;
    for (std::size_t k = 0; k < ema_adv.size(); ++k) {
      dist[k] = (ema_adv[k] - *min_it) / range;
      sum += dist[k];
    }
    for (double& p : dist) p /= sum;
  }
  if (prob_floor > 0.0) {
    double sum = 0.0;
    for (double& p : dist) {
      p = std::max(p, prob_floor);
      sum += p;
    }
    for (double& p : dist) p /= sum;
  }
  return dist;
}

// ============================================================================
// Temperature sampling
// ============================================================================

/// Nucleus over a distribution: member indices in probability-descending
/// order (ties toward the lower temperature index) and their renormalized
/// probabilities.
struct Nucleus {
  std::vector<int> indices;
  std::vector<double> probs;
};

/// Smallest probability-descending prefix reaching cumulative mass top_p
/// (never empty), renormalized. top_p = 0 degenerates to the argmax alone.
inline Nucleus top_p_nucleus(std::span<const double> dist, double top_p) {
  if (dist.empty()) throw std::invalid_argument("top_p_nucleus: empty distribution");
  if (!(top_p >= 0.0 && top_p <= 1.0))
    throw std::invalid_argument("top_p_nucleus: top_p must be in [0, 1]");
  std::vector<int> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] > dist[b]; });
  Nucleus nucleus;
  double cumulative = 0.0;
  for (int idx : order) {
    nucleus.indices.push_back(idx);
    cumulative += dist[idx];
    if (cumulative >= top_p - 1e-12) break;
  }
  double mass = 0.0;
  for (int idx : nucleus.indices) mass += dist[idx];
  nucleus.probs.reserve(nucleus.indices.size());
  for (int idx : nucleus.indices) nucleus.probs.push_back(dist[idx] / mass);
  return nucleus;
}

struct SampledTemp {
  double temperature = 0.0;
  int index = 0;
};

/// Draw a temperature from the nucleus of the meta distribution.
inline SampledTemp sample_temperature(std::span<const double> dist, const TemperatureGrid& grid,
                                      double top_p, rng::Stream& stream) {
  if (static_cast<int>(dist.size()) != grid.size())
    throw std::invalid_argument("sample_temperature: distribution/grid size mismatch");
  const Nucleus nucleus = top_p_nucleus(dist, top_p);
  const int pick = (nucleus.indices.size() == 1)
                       ? 0
                       : stream.categorical(nucleus.probs);
  const int index = nucleus.indices[pick];
  return {grid.values[index], index};
}

}  // namespace tampo::tempmeta
