#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "cresp/bmdp.hpp"

using namespace cresp;

namespace {

void expect_rows_normalized(const TaskCore& core) {
  for (int s = 0; s < core.num_states; ++s)
    for (int a = 0; a < core.num_actions; ++a) {
      double sum = 0.0;
      for (std::size_t i = 0; i < core.row_size(); ++i) {
        EXPECT_GE(core.row(s, a)[i], 0.0);
        EXPECT_LE(core.row(s, a)[i], 1.0);
        sum += core.row(s, a)[i];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

}  // namespace

TEST(RandomBmdp, Seed7PassesInvariantSuite) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  EXPECT_NO_THROW(validate(inst));
  EXPECT_EQ(inst.core.num_states, 4);
  EXPECT_EQ(inst.core.num_actions, 2);
  EXPECT_EQ(inst.core.reward_support, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(inst.num_envs(), 2);
  EXPECT_EQ(inst.num_factors(), 5);
  EXPECT_EQ(inst.obs_dim(), 16);
  expect_rows_normalized(inst.core);
  for (double r : inst.core.reward_support) EXPECT_LE(std::abs(r), inst.core.r_bar);
  for (const auto& c : inst.chains) EXPECT_NO_THROW(validate_chain(c));
  EXPECT_GE(min_pairwise_distance(inst.obs), 1e-6);
}

TEST(RandomBmdp, RejectsInvalidCounts) {
  EXPECT_THROW(make_random_bmdp(7, 0, 2, 3, 2, 5, 16), ParameterError);
  EXPECT_THROW(make_random_bmdp(7, 4, 2, 3, 0, 5, 16), ParameterError);
  EXPECT_THROW(make_random_bmdp(7, 4, 2, 3, 2, 5, 8), ParameterError);  // obs_dim < S + X
}

TEST(RandomBmdp, DeterministicInSeed) {
  const auto a = make_random_bmdp(11, 4, 2, 3, 2, 5, 16);
  const auto b = make_random_bmdp(11, 4, 2, 3, 2, 5, 16);
  const auto c = make_random_bmdp(12, 4, 2, 3, 2, 5, 16);
  EXPECT_EQ(instance_to_json(a).dump(), instance_to_json(b).dump());
  EXPECT_NE(instance_to_json(a).dump(), instance_to_json(c).dump());
}

TEST(AliasedCore, PairsShareOneStepRewardLaw) {
  const auto core = make_aliased_core(3, 6, 2, 3);
  EXPECT_NO_THROW(validate_core(core));
  for (int s = 1; s < core.num_states; s += 2)
    for (int a = 0; a < core.num_actions; ++a)
      for (int r = 0; r < core.num_rewards(); ++r) {
        double p = 0.0, q = 0.0;
        for (int s2 = 0; s2 < core.num_states; ++s2) {
          p += core.at(s, a, s2, r);
          q += core.at(s - 1, a, s2, r);
        }
        EXPECT_NEAR(p, q, 1e-12);
      }
}

TEST(Gridworld, ThreeByThreeIsInjective) {
  const auto inst = make_gridworld(3, 3, 2, 7);
  EXPECT_EQ(inst.core.num_states, 9);
  EXPECT_EQ(inst.core.num_actions, 4);
  // enumerate every rendered observation and compare all pairs directly
  std::vector<Observation> all;
  for (int s = 0; s < 9; ++s)
    for (int x = 0; x < inst.num_factors(); ++x) all.push_back(observe(inst, s, x));
  double min_d = 1e300;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < all[i].size(); ++k) d2 += (all[i][k] - all[j][k]) * (all[i][k] - all[j][k]);
      min_d = std::min(min_d, std::sqrt(d2));
    }
  EXPECT_GE(min_d, 1e-6);
}

TEST(Gridworld, RewardOnlyOnEnteringGoal) {
  const auto inst = make_gridworld(3, 3, 1, 7);
  const auto& core = inst.core;
  for (int s = 0; s < 9; ++s)
    for (int a = 0; a < 4; ++a)
      for (int s2 = 0; s2 < 9; ++s2) {
        EXPECT_EQ(core.at(s, a, s2, 1) > 0.0, core.at(s, a, s2, 1) == 1.0);
        if (s2 != 8) {
          EXPECT_EQ(core.at(s, a, s2, 1), 0.0);
        }
      }
  EXPECT_EQ(core.at(5, kDown, 8, 1), 1.0);
  EXPECT_EQ(core.at(0, kUp, 0, 0), 1.0);  // clamped at the wall
}

TEST(Gridworld, RejectsDegenerateGrid) {
  EXPECT_THROW(make_gridworld(1, 1, 2, 7), ParameterError);
  EXPECT_THROW(make_gridworld(0, 3, 2, 7), ParameterError);
  EXPECT_NO_THROW(make_gridworld(2, 1, 1, 7));
}

TEST(Gridworld, SameSeedSameBackgrounds) {
  const auto a = make_gridworld(3, 3, 2, 5);
  const auto b = make_gridworld(3, 3, 2, 5);
  EXPECT_EQ(a.obs.factor_part, b.obs.factor_part);
  EXPECT_EQ(instance_to_json(a).dump(), instance_to_json(b).dump());
}

TEST(Observe, DecodeRoundTripsEveryPair) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  for (int s = 0; s < 4; ++s)
    for (int x = 0; x < 5; ++x) EXPECT_EQ(decode(inst, observe(inst, s, x)), (Decoded{s, x}));
}

TEST(Observe, DistinctFactorsGiveDistinctVectors) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  EXPECT_NE(observe(inst, 2, 0), observe(inst, 2, 1));
  EXPECT_EQ(observe(inst, 2, 3), observe(inst, 2, 3));
}

TEST(Observe, OutOfRangeIsParameterError) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  EXPECT_THROW(observe(inst, 4, 0), ParameterError);
  EXPECT_THROW(observe(inst, 0, -1), ParameterError);
}

TEST(Decode, RejectsForeignVectorsAndToleratesRounding) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  EXPECT_THROW(decode(inst, Observation(16, 0.0)), DecodeError);
  auto o = observe(inst, 3, 4);
  for (auto& v : o) v += 1e-12;
  EXPECT_EQ(decode(inst, o), (Decoded{3, 4}));
}

TEST(Episode, ResetIsDeterministicAndValidatesEnv) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  auto [e1, o1] = Episode::reset(inst, 1, 42);
  auto [e2, o2] = Episode::reset(inst, 1, 42);
  EXPECT_EQ(o1, o2);
  EXPECT_THROW(Episode::reset(inst, 2, 42), ParameterError);
  EXPECT_THROW(Episode::reset(inst, -1, 42), ParameterError);
}

TEST(Episode, InitialFactorFollowsChainInit) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  const int n = 10000;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < n; ++i) {
    auto [ep, o] = Episode::reset(inst, 0, 1000 + i);
    ++counts[ep.factor()];
  }
  for (int x = 0; x < 5; ++x) {
    const double p = inst.chains[0].init[x];
    EXPECT_LE(std::abs(counts[x] - n * p), 3.0 * std::sqrt(n * p * (1 - p)) + 1.0) << "factor " << x;
  }
}

TEST(Episode, DeterministicCoreRewardMatchesSupport) {
  const auto inst = make_gridworld(3, 3, 1, 7);
  auto [ep, o] = Episode::reset(inst, 0, 3);
  for (int t = 0; t < 20; ++t) {
    const int a = t % 4;
    const int s = ep.state();
    int expected_next = -1, expected_r = -1;
    for (int s2 = 0; s2 < 9; ++s2)
      for (int r = 0; r < 2; ++r)
        if (inst.core.at(s, a, s2, r) == 1.0) expected_next = s2, expected_r = r;
    const auto res = ep.step(a);
    EXPECT_EQ(ep.state(), expected_next);
    EXPECT_EQ(res.reward, inst.core.reward_support[expected_r]);
    EXPECT_EQ(decode(inst, res.obs).state, expected_next);
  }
}

TEST(Episode, NextStateAndFactorAreIndependent) {
  const auto inst = make_random_bmdp(5, 3, 2, 3, 1, 4, 12);
  const int n = 10000;
  std::map<std::pair<int, int>, int> joint;
  std::vector<int> ms(3, 0), mx(4, 0);
  int collected = 0;
  for (std::uint64_t ep_seed = 0; collected < n; ++ep_seed) {
    auto [ep, o] = Episode::reset(inst, 0, ep_seed);
    Rng rng(ep_seed);
    while (!ep.done() && collected < n) {
      ep.step(uniform_index(rng, 2));
      ++joint[{ep.state(), ep.factor()}];
      ++ms[ep.state()];
      ++mx[ep.factor()];
      ++collected;
    }
  }
  double worst = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int x = 0; x < 4; ++x) {
      const double pj = static_cast<double>(joint[{s, x}]) / n;
      worst = std::max(worst, std::abs(pj - (static_cast<double>(ms[s]) / n) * (static_cast<double>(mx[x]) / n)));
    }
  EXPECT_LE(worst, 0.02);
}

TEST(Episode, StepAfterHorizonIsStateError) {
  auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  inst.horizon = 3;
  auto [ep, o] = Episode::reset(inst, 0, 1);
  ep.step(0);
  ep.step(1);
  EXPECT_TRUE(ep.step(0).done);
  EXPECT_THROW(ep.step(0), StateError);
}

// Rewards observed from a fixed latent state under a fixed action must not
// depend on which distractor chain is running.
TEST(Episode, BlockStructureRewardLawIgnoresEnvironment) {
  const auto inst = make_random_bmdp(21, 3, 2, 3, 2, 4, 12);
  const int target_state = 1, action = 0, need = 4000;
  std::vector<std::vector<int>> counts(2, std::vector<int>(3, 0));
  for (int env = 0; env < 2; ++env) {
    int got = 0;
    for (std::uint64_t seed = 0; got < need; ++seed) {
      auto [ep, o] = Episode::reset(inst, env, seed * 7 + env);
      Rng rng(seed);
      while (!ep.done() && got < need) {
        const bool at_target = ep.state() == target_state;
        const int a = at_target ? action : uniform_index(rng, 2);
        const auto res = ep.step(a);
        if (at_target) {
          ++counts[env][res.reward_index];
          ++got;
        }
      }
    }
  }
  // two-sample chi-square, df = 2, critical value 13.82 at p = 0.001
  double chi2 = 0.0;
  for (int r = 0; r < 3; ++r) {
    const double pooled = (counts[0][r] + counts[1][r]) / (2.0 * need);
    if (pooled == 0.0) continue;
    for (int env = 0; env < 2; ++env) {
      const double expected = pooled * need;
      chi2 += (counts[env][r] - expected) * (counts[env][r] - expected) / expected;
    }
  }
  EXPECT_LT(chi2, 13.82);
}

TEST(Serialization, InstanceJsonRoundTrip) {
  const auto inst = make_gridworld(3, 2, 3, 9);
  const auto back = instance_from_json(nlohmann::json::parse(instance_to_json(inst).dump()));
  EXPECT_EQ(instance_to_json(back).dump(), instance_to_json(inst).dump());
  EXPECT_EQ(fingerprint(back), fingerprint(inst));
  auto bad = instance_to_json(inst);
  bad["format"] = "something-else";
  EXPECT_THROW(instance_from_json(bad), ParameterError);
}

TEST(BehaviorPolicy, ProbabilitiesSumToOne) {
  BehaviorPolicy uniform;
  BehaviorPolicy scripted{BehaviorPolicy::Kind::kEpsilonScripted, 0.2, 3};
  for (const auto& pol : {uniform, scripted}) {
    const auto p = pol.action_probs(4);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_NEAR(scripted.action_probs(4)[3], 0.85, 1e-12);
}
