#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "tampo/envs.hpp"

using namespace tampo;
using Catch::Matchers::WithinAbs;

namespace {

envs::TaskSpec exact_task(std::vector<int> target) {
  envs::TaskSpec t;
  t.kind = envs::TaskKind::TargetExact;
  t.episode_len = static_cast<int>(target.size());
  t.target = std::move(target);
  return t;
}

envs::TaskSpec dense_task(std::vector<int> target) {
  envs::TaskSpec t;
  t.kind = envs::TaskKind::TargetDense;
  t.episode_len = static_cast<int>(target.size());
  t.target = std::move(target);
  return t;
}

envs::TaskSpec needle_task(int needle, int episode_len) {
  envs::TaskSpec t;
  t.kind = envs::TaskKind::RareNeedle;
  t.needle_token = needle;
  t.episode_len = episode_len;
  return t;
}

// Params that force the greedy path `seq` (one logit +100 per visited state).
policy::PolicyParams forcing_params(const std::vector<int>& seq, int vocab) {
  auto params = policy::PolicyParams::zeros(vocab, static_cast<int>(seq.size()));
  int prev = params.start_token();
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    params.row(0, static_cast<int>(pos), prev)[seq[pos]] = 100.0;
    prev = seq[pos];
  }
  return params;
}

}  // namespace

TEST_CASE("reward: exact match") {
  const auto task = exact_task({1, 2, 3});
  REQUIRE(envs::reward(task, std::vector<int>{1, 2, 3}) == 1.0);
  REQUIRE(envs::reward(task, std::vector<int>{1, 2, 0}) == 0.0);
}

TEST_CASE("reward: dense fraction") {
  const auto task = dense_task({1, 2, 3, 4});
  REQUIRE_THAT(envs::reward(task, std::vector<int>{1, 2, 0, 0}), WithinAbs(0.5, 1e-15));
  REQUIRE(envs::reward(task, std::vector<int>{1, 2, 3, 4}) == 1.0);
}

TEST_CASE("reward: needle presence") {
  const auto task = needle_task(7, 3);
  REQUIRE(envs::reward(task, std::vector<int>{0, 1, 2}) == 0.0);
  REQUIRE(envs::reward(task, std::vector<int>{0, 7, 2}) == 1.0);
}

TEST_CASE("reward: length mismatch is a contract violation") {
  const auto task = exact_task({1, 2, 3});
  REQUIRE_THROWS_AS(envs::reward(task, std::vector<int>{1, 2}), std::invalid_argument);
}

TEST_CASE("reward: always within [0, 1] on random inputs") {
  rng::Stream s(53);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> target(4);
    std::vector<int> tokens(4);
    for (int& x : target) x = static_cast<int>(s.below(5));
    for (int& x : tokens) x = static_cast<int>(s.below(5));
    for (const auto& task : {exact_task(target), dense_task(target), needle_task(2, 4)}) {
      const double r = envs::reward(task, tokens);
      REQUIRE(r >= 0.0);
      REQUIRE(r <= 1.0);
    }
  }
}

TEST_CASE("generate_group: degenerate policy repeats the greedy sequence") {
  const std::vector<int> seq{3, 1, 2};
  const auto params = forcing_params(seq, 4);
  auto task = exact_task(seq);
  rng::Stream s(59);
  envs::GenerationCounter counter;
  const auto group = envs::generate_group(params, task, 8, 1.0, s, counter);
  REQUIRE(group.trajectories.size() == 8);
  for (const auto& traj : group.trajectories) {
    REQUIRE(traj.tokens == seq);
    REQUIRE(traj.reward == 1.0);
    REQUIRE(traj.sampled_temperature == 1.0);
    REQUIRE(traj.step_logits.size() == seq.size());
  }
}

TEST_CASE("generate_group: uniform token frequencies under zero params") {
  const auto params = policy::PolicyParams::zeros(4, 3);
  auto task = needle_task(3, 3);
  rng::Stream s(61);
  envs::GenerationCounter counter;
  std::vector<long> counts(4, 0);
  long total = 0;
  for (int g = 0; g < 10000; ++g) {
    const auto group = envs::generate_group(params, task, 8, 1.0, s, counter);
    for (const auto& traj : group.trajectories) {
      for (int tok : traj.tokens) {
        ++counts[tok];
        ++total;
      }
    }
  }
  for (long c : counts) {
    const double freq = static_cast<double>(c) / total;
    REQUIRE(std::fabs(freq - 0.25) < 0.01);
  }
}

TEST_CASE("generate_group: counter increments by exactly the group size") {
  const auto params = policy::PolicyParams::zeros(4, 2);
  auto task = needle_task(1, 2);
  rng::Stream s(67);
  envs::GenerationCounter counter;
  counter.add(5);
  envs::generate_group(params, task, 8, 1.0, s, counter);
  REQUIRE(counter.count() == 13);
}

TEST_CASE("generate_group: group size below 2 is a contract violation") {
  const auto params = policy::PolicyParams::zeros(4, 2);
  auto task = needle_task(1, 2);
  rng::Stream s(71);
  envs::GenerationCounter counter;
  REQUIRE_THROWS_AS(envs::generate_group(params, task, 1, 1.0, s, counter),
                    std::invalid_argument);
}

TEST_CASE("pass_at_k: perfect policy solves everything") {
  const std::vector<int> seq{0, 1, 2};
  const auto params = forcing_params(seq, 4);
  std::vector<envs::TaskSpec> tasks(5, exact_task(seq));
  for (int i = 0; i < 5; ++i) tasks[i].prompt_id = i;
  rng::Stream s(73);
  const auto report = envs::pass_at_k(params, tasks, 8, 1.0, 0.999, s);
  REQUIRE(report.pass_at_1 == 1.0);
  REQUIRE(report.pass_at_k == 1.0);
  for (const auto& p : report.per_prompt) REQUIRE(p.successes == 8);
}

TEST_CASE("pass_at_k: uniform policy matches the binomial closed form") {
  // Success probability per attempt is 4^-3 = 1/64; over 8 attempts the pass
  // rate is 1 - (63/64)^8.
  const auto params = policy::PolicyParams::zeros(4, 3);
  std::vector<envs::TaskSpec> tasks;
  rng::Stream target_gen(79);
  for (int i = 0; i < 2000; ++i) {
    std::vector<int> target(3);
    for (int& t : target) t = static_cast<int>(target_gen.below(4));
    auto task = exact_task(target);
    task.prompt_id = i;
    tasks.push_back(std::move(task));
  }
  rng::Stream s(83);
  const auto report = envs::pass_at_k(params, tasks, 8, 1.0, 0.999, s);
  const double expected = 1.0 - std::pow(63.0 / 64.0, 8.0);
  REQUIRE(std::fabs(report.pass_at_k - expected) < 0.02);
}

TEST_CASE("pass_at_k: pass@1 never exceeds pass@k") {
  rng::Stream s(89);
  for (int rep = 0; rep < 10; ++rep) {
    auto params = oracles::random_params(4, 3, s);
    std::vector<envs::TaskSpec> tasks;
    for (int i = 0; i < 20; ++i) {
      std::vector<int> target(3);
      for (int& t : target) t = static_cast<int>(s.below(4));
      auto task = exact_task(target);
      task.prompt_id = i;
      tasks.push_back(std::move(task));
    }
    auto eval_stream = s.split(rep);
    const auto report = envs::pass_at_k(params, tasks, 8, 1.0, 0.999, eval_stream);
    REQUIRE(report.pass_at_1 <= report.pass_at_k);
  }
}

TEST_CASE("pass_at_k: empty suite is a contract violation") {
  const auto params = policy::PolicyParams::zeros(4, 3);
  rng::Stream s(97);
  REQUIRE_THROWS_AS(envs::pass_at_k(params, std::vector<envs::TaskSpec>{}, 8, 1.0, 0.999, s),
                    std::invalid_argument);
}

TEST_CASE("evaluation counts against its own counter only") {
  const auto params = policy::PolicyParams::zeros(4, 3);
  std::vector<envs::TaskSpec> tasks{needle_task(1, 3)};
  envs::GenerationCounter training;
  envs::GenerationCounter eval;
  rng::Stream s(101);
  envs::generate_group(params, tasks[0], 4, 1.0, s, training);
  envs::pass_at_k(params, tasks, 8, 1.0, 0.999, s, &eval);
  REQUIRE(training.count() == 4);
  REQUIRE(eval.count() == 8);
}

TEST_CASE("initial_params: needle starts at logit -2 in every row") {
  std::vector<envs::TaskSpec> tasks{needle_task(7, 6)};
  const auto params = envs::initial_params(tasks, 8, 6);
  for (int pos = 0; pos < 6; ++pos) {
    for (int prev = 0; prev <= 8; ++prev) {
      const auto row = params.row(0, pos, prev);
      for (int a = 0; a < 8; ++a) REQUIRE(row[a] == (a == 7 ? -2.0 : 0.0));
    }
  }
}
