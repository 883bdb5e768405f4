#pragma once

// Monte-Carlo side of the characteristic-function machinery.

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cresp/core.hpp"
#include "cresp/rsd_oracle.hpp"

namespace cresp {

struct CFConfig {
  int T = 5;
  int kappa = 256;
  double gamma_seq = 0.8;

  void validate() const {
    require(T >= 1, "CFConfig: T must be >= 1");
    require(kappa >= 1, "CFConfig: kappa must be >= 1");
    require(gamma_seq > 0.0 && gamma_seq <= 1.0, "CFConfig: gamma_seq must lie in (0,1]");
  }
};

// kappa x T frequencies, row-major.
struct OmegaBatch {
  int kappa = 0;
  int T = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;

  std::span<const double> row(int k) const {
    return {values.data() + static_cast<std::size_t>(k) * T, static_cast<std::size_t>(T)};
  }
};

inline OmegaBatch sample_omega(const CFConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  OmegaBatch b;
  b.kappa = cfg.kappa;
  b.T = cfg.T;
  b.seed = seed;
  b.values.resize(static_cast<std::size_t>(cfg.kappa) * cfg.T);
  Rng rng = make_rng(seed, 11);
  for (auto& v : b.values) v = standard_normal(rng);
  return b;
}

inline double weighted_inner(std::span<const double> omega, std::span<const double> r, double gamma_seq) {
  if (omega.size() != r.size()) throw ParameterError("weighted_inner: length mismatch");
  double u = 0.0, w = 1.0;
  for (std::size_t t = 0; t < r.size(); ++t) {
    w *= gamma_seq;
    u += w * omega[t] * r[t];
  }
  return u;
}

struct CosSin {
  double cos_val = 1.0;
  double sin_val = 0.0;
};

inline CosSin cf_target(std::span<const double> omega, std::span<const double> r, double gamma_seq) {
  const double u = weighted_inner(omega, r, gamma_seq);
  return {std::cos(u), std::sin(u)};
}

inline CFValue empirical_cf(const std::vector<std::vector<double>>& reward_samples,
                            std::span<const double> omega, double gamma_seq) {
  if (reward_samples.empty()) throw ParameterError("empirical_cf: no samples");
  double re = 0.0, im = 0.0;
  for (const auto& r : reward_samples) {
    if (r.size() != omega.size()) throw ParameterError("empirical_cf: inconsistent sample length");
    const CosSin cs = cf_target(omega, r, gamma_seq);
    re += cs.cos_val;
    im += cs.sin_val;
  }
  const double n = static_cast<double>(reward_samples.size());
  return {re / n, im / n};
}

// Draws n reward sequences by simulating the core from state s under a fixed
// action sequence. Independent of enumerate_rsd.
inline std::vector<std::vector<double>> simulate_reward_sequences(const TaskCore& core, int s,
                                                                  const ActionSeq& actions, int n,
                                                                  std::uint64_t seed) {
  require(n >= 1, "simulate_reward_sequences: n must be >= 1");
  Rng rng = make_rng(seed, 13);
  const int R = core.num_rewards();
  std::vector<std::vector<double>> out(n, std::vector<double>(actions.size()));
  for (auto& seq : out) {
    int state = s;
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const int joint = sample_discrete(rng, core.row(state, actions[t]), static_cast<int>(core.row_size()));
      state = joint / R;
      seq[t] = core.reward_support[joint % R];
    }
  }
  return out;
}

}  // namespace cresp
