#pragma once

// Property suite run by `cresp_lab verify`: characteristic-function identities
// and oracle agreement, finite-scale distribution equivalence, the Monte-Carlo
// upper bound on the exact-CF loss, and the value-bound sweep.
//
// Every check is deterministic in the seed and reports measured quantities
// next to the tolerance it was held to.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cresp/bmdp.hpp"
#include "cresp/charfn.hpp"
#include "cresp/evaluation.hpp"
#include "cresp/rsd_oracle.hpp"
#include "cresp/training.hpp"

namespace cresp {

using CfFunction = std::function<CFValue(const ExactRSD&, const std::vector<double>&, double)>;

struct VerifyOptions {
  std::uint64_t seed = 7;
  int identity_cases = 1000;
  int bound_sweep = 50;
  int rsd_instances = 20;
  int upper_bound_predictors = 10;
  int upper_bound_samples = 10000;
  CfFunction cf = exact_cf;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  int cases = 0;
  int failures = 0;
  nlohmann::json measured = nlohmann::json::object();
};

// Test fixture: the imaginary part comes out with the wrong sign whenever the
// first frequency is negative.
inline CfFunction cf_with_sign_fault() {
  return [](const ExactRSD& rsd, const std::vector<double>& omega, double gamma_seq) {
    CFValue v = exact_cf(rsd, omega, gamma_seq);
    if (!omega.empty() && omega[0] < 0.0) v.im = -v.im;
    return v;
  };
}

namespace detail {

// A random enumerable distribution together with a random frequency.
struct CfCase {
  ExactRSD rsd;
  std::vector<double> omega;
};

inline std::vector<CfCase> random_cf_cases(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 81);
  std::vector<CfCase> out;
  for (int i = 0; i < n; ++i) {
    const int S = 2 + uniform_index(rng, 4);
    const int A = 1 + uniform_index(rng, 3);
    const int R = 1 + uniform_index(rng, 4);
    const int T = 1 + uniform_index(rng, 3);
    const auto core = make_random_core(rng(), S, A, R);
    ActionSeq seq(T);
    for (auto& a : seq) a = uniform_index(rng, A);
    CfCase c;
    c.rsd = enumerate_rsd(core, uniform_index(rng, S), seq);
    const double scale = 0.5 + 4.5 * uniform01(rng);
    c.omega.resize(T);
    for (auto& w : c.omega) w = scale * standard_normal(rng);
    out.push_back(std::move(c));
  }
  return out;
}

inline CheckResult finish(CheckResult r) {
  r.passed = r.failures == 0;
  return r;
}

}  // namespace detail

inline CheckResult check_phi_zero(const VerifyOptions& opt) {
  CheckResult r{"phi(0)=1"};
  double worst = 0.0;
  for (const auto& c : detail::random_cf_cases(opt.identity_cases, opt.seed)) {
    const CFValue v = opt.cf(c.rsd, std::vector<double>(c.rsd.T, 0.0), 0.8);
    worst = std::max({worst, std::abs(v.re - 1.0), std::abs(v.im)});
    r.failures += !(v.re == 1.0 && v.im == 0.0);
    ++r.cases;
  }
  r.measured = {{"max_deviation", worst}, {"tolerance", 0.0}};
  return detail::finish(r);
}

inline CheckResult check_conjugate_symmetry(const VerifyOptions& opt) {
  CheckResult r{"conjugate symmetry"};
  double worst = 0.0;
  for (const auto& c : detail::random_cf_cases(opt.identity_cases, opt.seed + 1)) {
    std::vector<double> neg(c.omega);
    for (auto& w : neg) w = -w;
    const CFValue a = opt.cf(c.rsd, c.omega, 0.8);
    const CFValue b = opt.cf(c.rsd, neg, 0.8);
    const double dev = std::max(std::abs(a.re - b.re), std::abs(a.im + b.im));
    worst = std::max(worst, dev);
    r.failures += dev > 1e-12;
    ++r.cases;
  }
  r.measured = {{"max_deviation", worst}, {"tolerance", 1e-12}};
  return detail::finish(r);
}

inline CheckResult check_modulus_bound(const VerifyOptions& opt) {
  CheckResult r{"modulus bound"};
  double worst = 0.0;
  for (const auto& c : detail::random_cf_cases(opt.identity_cases, opt.seed + 2)) {
    const double m = opt.cf(c.rsd, c.omega, 0.8).modulus();
    worst = std::max(worst, m);
    r.failures += m > 1.0 + 1e-12;
    ++r.cases;
  }
  r.measured = {{"max_modulus", worst}, {"tolerance", 1.0 + 1e-12}};
  return detail::finish(r);
}

// Empirical CF of n simulated sequences against the exact CF, 4 states,
// 2 actions, support {0, 0.5, 1}, T = 3.
inline CheckResult check_empirical_cf(const VerifyOptions& opt, int n = 20000, int num_omegas = 64) {
  CheckResult r{"empirical cf agreement"};
  const auto core = make_random_core(opt.seed, 4, 2, 3);
  Rng rng = make_rng(opt.seed, 82);
  const auto omegas = probe_omegas(num_omegas, 3, opt.seed + 3);
  double worst = 0.0;
  for (const auto& w : omegas) {
    const int s = uniform_index(rng, 4);
    ActionSeq seq(3);
    for (auto& a : seq) a = uniform_index(rng, 2);
    const auto samples = simulate_reward_sequences(core, s, seq, n, rng());
    const double err = distance(empirical_cf(samples, w, 0.8), opt.cf(enumerate_rsd(core, s, seq), w, 0.8));
    worst = std::max(worst, err);
    r.failures += err > 0.05;
    ++r.cases;
  }
  r.measured = {{"max_error", worst}, {"tolerance", 0.05}, {"samples", n}};
  return detail::finish(r);
}

inline double max_cf_gap(const BMDPInstance& inst, int s1, int s2, int max_T,
                         const std::vector<std::vector<double>>& omegas_by_T_flat, int num_omegas,
                         const CfFunction& cf) {
  double gap = 0.0;
  for (int T = 1; T <= max_T; ++T) {
    const auto& flat = omegas_by_T_flat[T - 1];
    for (const auto& seq : all_action_sequences(inst.core.num_actions, T)) {
      const auto p = enumerate_rsd(inst.core, s1, seq);
      const auto q = enumerate_rsd(inst.core, s2, seq);
      for (int k = 0; k < num_omegas; ++k) {
        const std::vector<double> w(flat.begin() + k * T, flat.begin() + (k + 1) * T);
        gap = std::max(gap, distance(cf(p, w, 0.8), cf(q, w, 0.8)));
      }
    }
  }
  return gap;
}

// Same latent state, different distractor factor: CFs coincide over every
// action sequence of length <= 2 and 128 frequencies.
inline CheckResult check_same_state_rsd(const VerifyOptions& opt, int num_omegas = 128) {
  CheckResult r{"same-state rsd equality"};
  Rng rng = make_rng(opt.seed, 83);
  std::vector<std::vector<double>> omegas;
  for (int T = 1; T <= 2; ++T) {
    std::vector<double> flat;
    for (const auto& w : probe_omegas(num_omegas, T, opt.seed + 10 + T)) flat.insert(flat.end(), w.begin(), w.end());
    omegas.push_back(flat);
  }
  double worst = 0.0;
  for (int i = 0; i < opt.rsd_instances; ++i) {
    const int S = 2 + uniform_index(rng, 5);
    const int A = 2 + uniform_index(rng, 2);
    const int X = 2 + uniform_index(rng, 3);
    const auto inst = make_random_bmdp(rng(), S, A, 3, 2, X, S + X + 2);
    const int s = uniform_index(rng, S);
    const int x1 = uniform_index(rng, X);
    const int x2 = (x1 + 1 + uniform_index(rng, X - 1)) % X;
    // the pair is identified through decoding, as an observation-level check must be
    const auto d1 = decode(inst, observe(inst, s, x1));
    const auto d2 = decode(inst, observe(inst, s, x2));
    const double gap = max_cf_gap(inst, d1.state, d2.state, 2, omegas, num_omegas, opt.cf);
    worst = std::max(worst, gap);
    r.failures += gap > 1e-12;
    ++r.cases;
  }
  r.measured = {{"max_difference", worst}, {"tolerance", 1e-12}};
  return detail::finish(r);
}

// Two latent states with opposite deterministic rewards must be told apart.
inline CheckResult check_distinguishing_pair(const VerifyOptions& opt, int num_omegas = 128) {
  CheckResult r{"distinguishing pair separation"};
  TaskCore c;
  c.num_states = 2;
  c.num_actions = 1;
  c.reward_support = {0.0, 1.0};
  c.r_bar = 1.0;
  c.transition.assign(2 * c.row_size(), 0.0);
  c.at(0, 0, 0, 1) = 1.0;
  c.at(1, 0, 1, 0) = 1.0;
  const auto inst = attach_random_observations(c, opt.seed, 1, 2, 6);
  std::vector<std::vector<double>> omegas;
  for (int T = 1; T <= 2; ++T) {
    std::vector<double> flat;
    for (const auto& w : probe_omegas(num_omegas, T, opt.seed + 20 + T)) flat.insert(flat.end(), w.begin(), w.end());
    omegas.push_back(flat);
  }
  const auto d1 = decode(inst, observe(inst, 0, 0));
  const auto d2 = decode(inst, observe(inst, 1, 1));
  const double gap = max_cf_gap(inst, d1.state, d2.state, 2, omegas, num_omegas, opt.cf);
  r.cases = 1;
  r.failures = gap >= 1e-6 ? 0 : 1;
  r.measured = {{"max_difference", gap}, {"required_at_least", 1e-6}};
  return detail::finish(r);
}

// Monte-Carlo loss with sampled cos/sin targets versus the same predictor's
// loss against the exact CF, on identical (observation, actions, frequency)
// draws.
struct UpperBoundSample {
  double mc_loss = 0.0;      // mean |psi - e^{iu}|^2
  double exact_loss = 0.0;   // mean |psi - phi|^2
  double variance = 0.0;     // mean 1 - |phi|^2
  double sigma_diff = 0.0;   // standard error of the per-sample difference
  double sigma_gap = 0.0;    // standard error of difference minus variance term
};

inline UpperBoundSample measure_upper_bound(const BMDPInstance& inst, const Model& predictor, int n,
                                            std::uint64_t seed, const CfFunction& cf, double gamma_seq = 0.8) {
  require(predictor.objective == Objective::kCresp, "measure_upper_bound: predictor must be a cresp model");
  const int T = predictor.T;
  const int A = inst.core.num_actions;
  Rng rng = make_rng(seed, 84);
  std::map<std::pair<int, ActionSeq>, ExactRSD> cache;
  std::vector<double> diff(n), gap(n);
  UpperBoundSample out;
  for (int j = 0; j < n; ++j) {
    const int s = uniform_index(rng, inst.core.num_states);
    const int x = uniform_index(rng, inst.num_factors());
    ActionSeq seq(T);
    for (auto& a : seq) a = uniform_index(rng, A);
    std::vector<double> w(T);
    for (auto& v : w) v = standard_normal(rng);
    auto it = cache.find({s, seq});
    if (it == cache.end()) it = cache.emplace(std::make_pair(s, seq), enumerate_rsd(inst.core, s, seq)).first;
    const CFValue phi = cf(it->second, w, gamma_seq);
    const auto r = simulate_reward_sequences(inst.core, s, seq, 1, rng())[0];
    const CosSin target = cf_target(w, r, gamma_seq);
    const CosSin psi = predict_cf(predictor, observe(inst, s, x), seq, w);
    const double l = std::pow(psi.cos_val - target.cos_val, 2) + std::pow(psi.sin_val - target.sin_val, 2);
    const double m = std::pow(psi.cos_val - phi.re, 2) + std::pow(psi.sin_val - phi.im, 2);
    const double v = 1.0 - (phi.re * phi.re + phi.im * phi.im);
    out.mc_loss += l / n;
    out.exact_loss += m / n;
    out.variance += v / n;
    diff[j] = l - m;
    gap[j] = l - m - v;
  }
  auto std_error = [n](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
  };
  out.sigma_diff = std_error(diff);
  out.sigma_gap = std_error(gap);
  return out;
}

inline BMDPInstance upper_bound_instance(std::uint64_t seed) { return make_random_bmdp(seed, 4, 2, 3, 1, 3, 10); }

inline std::vector<Model> random_predictors(const BMDPInstance& inst, int count, int T, std::uint64_t seed) {
  std::vector<Model> out;
  for (int i = 0; i < count; ++i)
    out.push_back(init_model(Objective::kCresp, inst.obs_dim(), inst.core.num_actions, T, NetConfig{},
                             mix_seed(seed, 90 + i)));
  return out;
}

inline std::pair<CheckResult, CheckResult> check_upper_bound(const VerifyOptions& opt) {
  CheckResult ineq{"upper-bound inequality"};
  CheckResult match{"upper-bound gap"};
  const auto inst = upper_bound_instance(opt.seed);
  nlohmann::json rows = nlohmann::json::array();
  int i = 0;
  for (const auto& pred : random_predictors(inst, opt.upper_bound_predictors, 3, opt.seed)) {
    const auto m = measure_upper_bound(inst, pred, opt.upper_bound_samples, mix_seed(opt.seed, 200 + i++), opt.cf);
    const bool ok_ineq = m.mc_loss >= m.exact_loss - 3.0 * m.sigma_diff;
    const bool ok_gap = std::abs((m.mc_loss - m.exact_loss) - m.variance) <= 3.0 * m.sigma_gap;
    ineq.failures += !ok_ineq;
    match.failures += !ok_gap;
    ++ineq.cases;
    ++match.cases;
    rows.push_back({{"mc_loss", m.mc_loss}, {"exact_loss", m.exact_loss}, {"cf_variance", m.variance},
                    {"sigma_diff", m.sigma_diff}, {"sigma_gap", m.sigma_gap}});
  }
  ineq.measured = {{"predictors", rows}, {"sigmas", 3.0}};
  match.measured = {{"sigmas", 3.0}};
  return {detail::finish(ineq), detail::finish(match)};
}

// Random tabular instances for the value-bound sweep: aliased and generic
// cores alternate so that nontrivial partitions are exercised.
inline BMDPInstance sweep_instance(std::uint64_t seed, int index) {
  Rng rng = make_rng(seed, 1000 + index);
  const int A = 2 + uniform_index(rng, 2);
  const int R = 2 + uniform_index(rng, 2);
  if (index % 2 == 0) {
    const int S = 2 * (1 + uniform_index(rng, 4));
    return attach_random_observations(make_aliased_core(rng(), S, A, R, 0.9), rng(), 1, 2, S + 2);
  }
  const int S = 2 + uniform_index(rng, 7);
  return attach_random_observations(make_random_core(rng(), S, A, R, 0.9), rng(), 1, 2, S + 2);
}

struct SweepChecks {
  CheckResult sweep{"value-bound sweep"};
  CheckResult identity{"identity partition"};
  CheckResult refinement{"partition refinement"};
};

inline SweepChecks check_value_bound_sweep(const VerifyOptions& opt) {
  SweepChecks out;
  double worst_low = 0.0, worst_ratio = 0.0, worst_identity = 0.0;
  int nontrivial = 0;
  for (int i = 0; i < opt.bound_sweep; ++i) {
    const auto inst = sweep_instance(opt.seed, i);
    Partition prev;
    for (int T = 1; T <= 3; ++T) {
      const auto part = t_level_partition(inst.core, T);
      nontrivial += part.num_blocks < inst.core.num_states;
      const auto rep = bound_report(inst, T, part);
      out.sweep.failures += rep.violations > 0;
      ++out.sweep.cases;
      worst_low = std::min(worst_low, rep.min_gap);
      worst_ratio = std::max(worst_ratio, rep.max_gap / rep.bound);
      if (T > 1) {
        out.refinement.failures += !refines(part, prev);
        ++out.refinement.cases;
      }
      prev = part;
    }
    const auto id = bound_report(inst, 1, Partition::identity(inst.core.num_states));
    worst_identity = std::max(worst_identity, std::abs(id.max_gap));
    out.identity.failures += id.max_gap > 1e-9;
    ++out.identity.cases;
  }
  out.sweep.measured = {{"min_gap", worst_low}, {"max_gap_over_bound", worst_ratio},
                          {"nontrivial_partitions", nontrivial}, {"lower_tolerance", -1e-9}};
  out.identity.measured = {{"max_gap", worst_identity}, {"tolerance", 1e-9}};
  out.refinement.measured = {{"horizons", {1, 2, 3}}};
  out.sweep = detail::finish(out.sweep);
  out.identity = detail::finish(out.identity);
  out.refinement = detail::finish(out.refinement);
  return out;
}

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.passed) out.push_back(c.name);
    return out;
  }
};

inline VerifyReport run_verify(const VerifyOptions& opt) {
  require(opt.bound_sweep >= 0 && opt.identity_cases >= 1, "verify: invalid options");
  VerifyReport rep;
  rep.seed = opt.seed;
  rep.checks.push_back(check_phi_zero(opt));
  rep.checks.push_back(check_conjugate_symmetry(opt));
  rep.checks.push_back(check_modulus_bound(opt));
  rep.checks.push_back(check_empirical_cf(opt));
  rep.checks.push_back(check_same_state_rsd(opt));
  rep.checks.push_back(check_distinguishing_pair(opt));
  auto [ineq, gap] = check_upper_bound(opt);
  rep.checks.push_back(ineq);
  rep.checks.push_back(gap);
  auto sweep = check_value_bound_sweep(opt);
  rep.checks.push_back(sweep.sweep);
  rep.checks.push_back(sweep.identity);
  rep.checks.push_back(sweep.refinement);
  return rep;
}

inline nlohmann::json verify_report_to_json(const VerifyReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"cases", c.cases}, {"failures", c.failures},
                      {"measured", c.measured}});
  return {{"seed", rep.seed}, {"passed", rep.passed()}, {"failures", rep.failures()}, {"checks", checks}};
}

}  // namespace cresp
