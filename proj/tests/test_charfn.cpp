#include <gtest/gtest.h>

#include <cmath>

#include "cresp/charfn.hpp"

using namespace cresp;

TEST(SampleOmega, ShapeAndMean) {
  const auto b = sample_omega({5, 256, 0.8}, 3);
  EXPECT_EQ(b.kappa, 256);
  EXPECT_EQ(b.T, 5);
  ASSERT_EQ(b.values.size(), 1280u);
  double mean = 0.0;
  for (double v : b.values) {
    EXPECT_TRUE(std::isfinite(v));
    mean += v;
  }
  mean /= 1280.0;
  EXPECT_LE(std::abs(mean), 3.0 / std::sqrt(1280.0));
}

TEST(SampleOmega, DeterministicInSeed) {
  EXPECT_EQ(sample_omega({5, 16, 0.8}, 4).values, sample_omega({5, 16, 0.8}, 4).values);
  EXPECT_NE(sample_omega({5, 16, 0.8}, 4).values, sample_omega({5, 16, 0.8}, 5).values);
}

TEST(SampleOmega, SingleEntryAndValidation) {
  const auto b = sample_omega({1, 1, 0.8}, 0);
  EXPECT_EQ(b.values.size(), 1u);
  EXPECT_EQ(b.row(0).size(), 1u);
  EXPECT_THROW(sample_omega({0, 4, 0.8}, 0), ParameterError);
  EXPECT_THROW(sample_omega({2, 0, 0.8}, 0), ParameterError);
  EXPECT_THROW(sample_omega({2, 4, 0.0}, 0), ParameterError);
}

TEST(WeightedInner, HandValues) {
  const std::vector<double> one{1.0, 1.0};
  EXPECT_NEAR(weighted_inner(one, one, 0.8), 1.44, 1e-15);
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(weighted_inner(one, zero, 0.8), 0.0);
  const std::vector<double> w{2.0}, r{3.0};
  EXPECT_EQ(weighted_inner(w, r, 1.0), 6.0);
  EXPECT_THROW(weighted_inner(one, w, 0.8), ParameterError);
}

TEST(CfTarget, ClosedForms) {
  const std::vector<double> z{0.0}, one{1.0};
  const auto a = cf_target(z, one, 0.8);
  EXPECT_EQ(a.cos_val, 1.0);
  EXPECT_EQ(a.sin_val, 0.0);
  const auto b = cf_target(one, one, 0.8);
  EXPECT_NEAR(b.cos_val, 0.696707, 1e-6);
  EXPECT_NEAR(b.sin_val, 0.717356, 1e-6);
  EXPECT_THROW(cf_target(one, std::vector<double>{1.0, 2.0}, 0.8), ParameterError);
}

TEST(CfTarget, UnitCircle) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> w(4), r(4);
    for (int t = 0; t < 4; ++t) {
      w[t] = 10.0 * standard_normal(rng);
      r[t] = standard_normal(rng);
    }
    const auto cs = cf_target(w, r, 0.8);
    EXPECT_NEAR(cs.cos_val * cs.cos_val + cs.sin_val * cs.sin_val, 1.0, 1e-12);
  }
}

TEST(EmpiricalCf, IdenticalSamplesMatchExact) {
  const std::vector<std::vector<double>> samples(7, std::vector<double>{1.0, 0.5});
  const std::vector<double> w{0.3, -1.2};
  ExactRSD rsd;
  rsd.T = 2;
  rsd.entries.push_back({{1, 0}, {1.0, 0.5}, 1.0});
  const auto e = empirical_cf(samples, w, 0.8);
  const auto x = exact_cf(rsd, w, 0.8);
  EXPECT_NEAR(e.re, x.re, 1e-15);
  EXPECT_NEAR(e.im, x.im, 1e-15);
}

TEST(EmpiricalCf, ZeroFrequencyAndErrors) {
  const std::vector<std::vector<double>> samples{{1.0, 2.0}, {0.0, -3.0}};
  const auto v = empirical_cf(samples, std::vector<double>{0.0, 0.0}, 0.8);
  EXPECT_EQ(v.re, 1.0);
  EXPECT_EQ(v.im, 0.0);
  EXPECT_THROW(empirical_cf({}, std::vector<double>{0.0}, 0.8), ParameterError);
  EXPECT_THROW(empirical_cf({{1.0}, {1.0, 2.0}}, std::vector<double>{0.0}, 0.8), ParameterError);
}

TEST(EmpiricalCf, AgreesWithExactAtClt) {
  const auto core = make_random_core(6, 4, 2, 3);
  const ActionSeq seq{1, 0, 1};
  const auto rsd = enumerate_rsd(core, 2, seq);
  const int n = 20000;
  const auto samples = simulate_reward_sequences(core, 2, seq, n, 8);
  const auto omegas = probe_omegas(64, 3, 9);
  for (const auto& w : omegas) {
    const auto e = empirical_cf(samples, w, 0.8);
    EXPECT_LE(distance(e, exact_cf(rsd, w, 0.8)), 5.0 / std::sqrt(n));
    EXPECT_LE(e.modulus(), 1.0 + 1e-12);
  }
}

TEST(EmpiricalCf, ErrorShrinksWithSampleSize) {
  const auto core = make_random_core(6, 4, 2, 3);
  const ActionSeq seq{0, 0, 1};
  const auto rsd = enumerate_rsd(core, 1, seq);
  const auto omegas = probe_omegas(64, 3, 3);
  int better = 0;
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    const auto small = simulate_reward_sequences(core, 1, seq, 100, 2 * k);
    const auto large = simulate_reward_sequences(core, 1, seq, 10000, 2 * k + 1);
    const auto exact = exact_cf(rsd, omegas[k], 0.8);
    better += distance(empirical_cf(large, omegas[k], 0.8), exact) <
              distance(empirical_cf(small, omegas[k], 0.8), exact);
  }
  EXPECT_GE(better, 58);  // 90% of 64
}
