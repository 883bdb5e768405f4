#include <gtest/gtest.h>

#include <cmath>

#include "cresp/evaluation.hpp"
#include "support/oracles.hpp"

using namespace cresp;

namespace {

TaskCore single_state_core(double reward, double gamma) {
  TaskCore c;
  c.num_states = 1;
  c.num_actions = 1;
  c.reward_support = {reward};
  c.r_bar = std::abs(reward);
  c.gamma = gamma;
  c.transition = {1.0};
  return c;
}

// s0: a0 pays 1 and stays, a1 pays 0 and moves to s1.
// s1: a0 pays 2 and stays, a1 pays 0 and moves to s0.
TaskCore two_state_choice_core() {
  TaskCore c;
  c.num_states = 2;
  c.num_actions = 2;
  c.reward_support = {0.0, 1.0, 2.0};
  c.r_bar = 2.0;
  c.gamma = 0.9;
  c.transition.assign(2 * 2 * c.row_size(), 0.0);
  c.at(0, 0, 0, 1) = 1.0;
  c.at(0, 1, 1, 0) = 1.0;
  c.at(1, 0, 1, 2) = 1.0;
  c.at(1, 1, 0, 0) = 1.0;
  return c;
}

ProbeDataset synthetic_dataset(int n, int classes, std::uint64_t seed, bool informative) {
  Rng rng(seed);
  ProbeDataset ds;
  ds.representations = Matrix(n, informative ? classes : 4);
  for (int i = 0; i < n; ++i) {
    const int y = i % classes;
    ds.env_labels.push_back(y);
    ds.state_labels.push_back(y);
    if (informative) {
      ds.representations(i, y) = 1.0;
    } else {
      for (int c = 0; c < 4; ++c) ds.representations(i, c) = standard_normal(rng);
    }
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ds.train_idx.assign(perm.begin(), perm.begin() + n * 4 / 5);
  ds.eval_idx.assign(perm.begin() + n * 4 / 5, perm.end());
  return ds;
}

}  // namespace

TEST(ValueIteration, GeometricSeries) {
  const auto sol = value_iteration(single_state_core(1.0, 0.9));
  EXPECT_NEAR(sol.values[0], 10.0, 1e-8);
  EXPECT_EQ(value_iteration(single_state_core(0.0, 0.9)).values[0], 0.0);
}

TEST(ValueIteration, HandSolvedTwoStateCore) {
  // V(s1) = 2 / 0.1 = 20; V(s0) = max(1 / 0.1, 0.9 * 20) = 18
  const auto sol = value_iteration(two_state_choice_core());
  EXPECT_NEAR(sol.values[1], 20.0, 1e-8);
  EXPECT_NEAR(sol.values[0], 18.0, 1e-8);
  EXPECT_EQ(sol.greedy, (std::vector<int>{1, 0}));
}

TEST(ValueIteration, RejectsUndiscounted) {
  EXPECT_THROW(value_iteration(single_state_core(1.0, 1.0)), ParameterError);
}

TEST(ValueIteration, TiesPickLowestAction) {
  auto c = two_state_choice_core();
  // make both actions in s1 identical
  for (int s2 = 0; s2 < 2; ++s2)
    for (int r = 0; r < 3; ++r) c.at(1, 1, s2, r) = c.at(1, 0, s2, r);
  EXPECT_EQ(value_iteration(c).greedy[1], 0);
}

TEST(AggregateAndSolve, IdentityPartitionRecoversOptimum) {
  const auto core = make_random_core(3, 6, 3, 3, 0.9);
  const auto vstar = value_iteration(core).values;
  const auto vbar = aggregate_and_solve(core, Partition::identity(6));
  for (int s = 0; s < 6; ++s) EXPECT_NEAR(vbar[s], vstar[s], 1e-9);
}

TEST(AggregateAndSolve, SingleBlockWithUniformlyOptimalAction) {
  auto core = make_random_core(4, 5, 2, 2, 0.9);
  // action 0 always pays the top reward, action 1 always the bottom one
  for (int s = 0; s < 5; ++s)
    for (int s2 = 0; s2 < 5; ++s2) {
      const double p0 = core.at(s, 0, s2, 0) + core.at(s, 0, s2, 1);
      const double p1 = core.at(s, 1, s2, 0) + core.at(s, 1, s2, 1);
      core.at(s, 0, s2, 0) = 0.0;
      core.at(s, 0, s2, 1) = p0;
      core.at(s, 1, s2, 0) = p1;
      core.at(s, 1, s2, 1) = 0.0;
    }
  const auto vstar = value_iteration(core).values;
  const auto vbar = aggregate_and_solve(core, Partition::single(5));
  for (int s = 0; s < 5; ++s) EXPECT_NEAR(vbar[s], vstar[s], 1e-9);
}

TEST(AggregateAndSolve, BlockConstrainedValuesNeverExceedOptimum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto core = make_aliased_core(seed, 6, 2, 2);
    const auto vstar = value_iteration(core).values;
    const auto vbar = aggregate_and_solve(core, t_level_partition(core, 1));
    for (int s = 0; s < 6; ++s) EXPECT_LE(vbar[s], vstar[s] + 1e-9);
  }
}

TEST(AggregateAndSolve, LargePartitionUsesBestResponse) {
  const auto core = make_random_core(8, 19, 2, 2, 0.9);  // 2^19 block policies
  const auto vstar = value_iteration(core).values;
  const auto vbar = aggregate_and_solve(core, Partition::identity(19));
  for (int s = 0; s < 19; ++s) EXPECT_NEAR(vbar[s], vstar[s], 1e-8);
  Partition bad = Partition::identity(18);
  EXPECT_THROW(aggregate_and_solve(core, bad), ParameterError);
}

TEST(ValueBound, Formula) {
  EXPECT_NEAR(value_bound(0.99, 5, 1.0), 190.198, 1e-3);
  EXPECT_NEAR(value_bound(0.99, 5, 1.0), 2.0 * std::pow(0.99, 5) / 0.01, 1e-9);
}

TEST(BoundReport, IdentityPartitionHasNoGap) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  const auto rep = bound_report(inst, 3, Partition::identity(4));
  EXPECT_LE(rep.max_gap, 1e-9);
  EXPECT_EQ(rep.violations, 0);
  EXPECT_EQ(rep.gaps.size(), 4u * 5u);
}

TEST(BoundReport, RandomSweepHasNoViolations) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const int S = 4 + static_cast<int>(seed % 5);
    const auto inst = attach_random_observations(make_aliased_core(seed, S, 2, 2, 0.9), seed, 1, 2, S + 2);
    for (int T = 1; T <= 3; ++T) {
      const auto rep = check_value_bound(inst, T);
      EXPECT_EQ(rep.violations, 0) << "seed " << seed << " T " << T;
      EXPECT_GE(rep.min_gap, -1e-9);
      EXPECT_LE(rep.max_gap, rep.bound);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 150);
}

TEST(BoundReport, FinerPartitionsNeverHurt) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = attach_random_observations(make_aliased_core(seed, 6, 2, 2, 0.9), seed, 1, 2, 8);
    for (int T = 1; T <= 2; ++T)
      EXPECT_LE(check_value_bound(inst, T + 1).max_gap, check_value_bound(inst, T).max_gap + 1e-9);
  }
}

TEST(BoundReport, JsonFields) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  const auto j = bound_report_to_json(check_value_bound(inst, 2));
  EXPECT_EQ(j.at("T"), 2);
  EXPECT_EQ(j.at("gaps").size(), 20u);
  EXPECT_EQ(j.at("violations"), 0);
}

TEST(Kmeans, SeparatedClusters) {
  Matrix x(30, 2);
  for (int i = 0; i < 30; ++i) {
    x(i, 0) = 10.0 * (i % 3) + 0.01 * i;
    x(i, 1) = -5.0 * (i % 3);
  }
  const auto a = kmeans(x, 3, 1);
  for (int i = 3; i < 30; ++i) EXPECT_EQ(a[i], a[i % 3]);
  EXPECT_NE(a[0], a[1]);
  EXPECT_NE(a[1], a[2]);
  EXPECT_THROW(kmeans(x, 31, 1), ParameterError);
}

TEST(LearnedBoundDiagnostic, GapsAreNonNegative) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 2, 5, 16);
  const Model m = init_model(Objective::kCresp, 16, 2, 3, NetConfig{}, 1);
  const auto rep = learned_bound_diagnostic(inst, m.encoder, 3, 3, 2);
  EXPECT_EQ(rep.gaps.size(), 20u);
  EXPECT_GE(rep.min_gap, -1e-9);
  EXPECT_LE(rep.num_blocks, 3);
}

TEST(ProbeDataset, CollectedSplitIsAlignedAndDisjoint) {
  const auto inst = make_random_bmdp(7, 4, 2, 3, 3, 5, 16);
  const Model m = init_model(Objective::kCresp, 16, 2, 3, NetConfig{}, 1);
  const auto ds = collect_probe_dataset(inst, m.encoder, {1, 2}, 500, 3);
  EXPECT_EQ(ds.representations.rows, 500);
  EXPECT_EQ(ds.env_labels.size(), 500u);
  EXPECT_EQ(ds.state_labels.size(), 500u);
  EXPECT_EQ(ds.train_idx.size(), 400u);
  EXPECT_EQ(ds.eval_idx.size(), 100u);
  std::set<int> all(ds.train_idx.begin(), ds.train_idx.end());
  all.insert(ds.eval_idx.begin(), ds.eval_idx.end());
  EXPECT_EQ(all.size(), 500u);
  for (int e : ds.env_labels) EXPECT_TRUE(e == 0 || e == 1);
  const auto again = collect_probe_dataset(inst, m.encoder, {1, 2}, 500, 3);
  EXPECT_EQ(again.representations.data, ds.representations.data);
  EXPECT_THROW(collect_probe_dataset(inst, m.encoder, {}, 500, 3), ParameterError);
}

// Wider noise features let the 100-epoch head overfit the training split.
TEST(Probe, NoiseStaysNearChance) {
  for (int classes : {2, 4}) {
    const auto ds = synthetic_dataset(10000, classes, 5, false);
    const auto res = probe_env_label(ds, {}, 1);
    EXPECT_NEAR(res.final_ce, std::log(classes), 0.1 * std::log(classes)) << classes;
  }
}

TEST(Probe, OneHotIsLearned) {
  const auto ds = synthetic_dataset(2000, 4, 6, true);
  EXPECT_LE(probe_state(ds, {}, 2).final_ce, 0.05);
  EXPECT_LE(probe_env_label(ds, {}, 2).final_ce, 0.05);
}

TEST(Probe, UntrainedHeadIsNearChanceAndCurveSpacing) {
  const auto ds = synthetic_dataset(1000, 4, 7, true);
  const auto res = probe_state(ds, {}, 3);
  EXPECT_NEAR(res.curve.front().second, std::log(4.0), 0.2 * std::log(4.0));
  ASSERT_EQ(res.curve.size(), 11u);
  for (std::size_t i = 0; i < res.curve.size(); ++i) EXPECT_EQ(res.curve[i].first, static_cast<int>(10 * i));
}

TEST(Probe, DeterministicInSeed) {
  const auto ds = synthetic_dataset(1000, 3, 8, false);
  ProbeConfig cfg;
  cfg.epochs = 10;
  EXPECT_EQ(probe_env_label(ds, cfg, 4).curve, probe_env_label(ds, cfg, 4).curve);
}

TEST(Probe, SingleClassIsRejected) {
  auto ds = synthetic_dataset(100, 2, 9, true);
  std::fill(ds.env_labels.begin(), ds.env_labels.end(), 0);
  EXPECT_THROW(probe_env_label(ds, {}, 1), ParameterError);
}

TEST(Probe, CsvAndJsonExport) {
  ProbeResult r;
  r.curve = {{0, 1.5}, {10, 0.25}};
  r.final_ce = 0.25;
  EXPECT_EQ(probe_curve_csv(r), "epoch,ce\n0,1.5\n10,0.25\n");
  EXPECT_EQ(probe_result_to_json(r).at("curve").size(), 2u);
}
