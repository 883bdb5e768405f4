#pragma once

// Value-bound checks on tabular cores and cross-entropy probes on frozen
// representations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <locale>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cresp/bmdp.hpp"
#include "cresp/core.hpp"
#include "cresp/diffnet.hpp"
#include "cresp/rsd_oracle.hpp"
#include "cresp/training.hpp"

namespace cresp {

// ---------------------------------------------------------------------------
// Dynamic programming

struct ValueSolution {
  std::vector<double> values;
  std::vector<int> greedy;  // ties broken by lowest action index
  int iterations = 0;
};

namespace detail {

// Expected one-step reward r(s,a) and state kernel P(s'|s,a).
struct TabularModel {
  int S = 0;
  int A = 0;
  double gamma = 0.0;
  std::vector<double> reward;  // [s][a]
  std::vector<double> kernel;  // [s][a][s']

  explicit TabularModel(const TaskCore& core)
      : S(core.num_states), A(core.num_actions), gamma(core.gamma),
        reward(static_cast<std::size_t>(S) * A, 0.0), kernel(static_cast<std::size_t>(S) * A * S, 0.0) {
    const int R = core.num_rewards();
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a)
        for (int s2 = 0; s2 < S; ++s2)
          for (int r = 0; r < R; ++r) {
            const double p = core.at(s, a, s2, r);
            reward[idx(s, a)] += p * core.reward_support[r];
            kernel[idx(s, a) * S + s2] += p;
          }
  }
  std::size_t idx(int s, int a) const { return static_cast<std::size_t>(s) * A + a; }

  double q(const std::vector<double>& v, int s, int a) const {
    double acc = reward[idx(s, a)];
    const double* row = kernel.data() + idx(s, a) * S;
    for (int s2 = 0; s2 < S; ++s2) acc += gamma * row[s2] * v[s2];
    return acc;
  }

  // Solves (I - gamma P_pi) v = r_pi by Gaussian elimination with partial pivoting.
  std::vector<double> evaluate(const std::vector<int>& policy) const {
    std::vector<double> m(static_cast<std::size_t>(S) * (S + 1), 0.0);
    auto at = [&](int r, int c) -> double& { return m[static_cast<std::size_t>(r) * (S + 1) + c]; };
    for (int s = 0; s < S; ++s) {
      const int a = policy[s];
      const double* row = kernel.data() + idx(s, a) * S;
      for (int s2 = 0; s2 < S; ++s2) at(s, s2) = (s == s2 ? 1.0 : 0.0) - gamma * row[s2];
      at(s, S) = reward[idx(s, a)];
    }
    for (int c = 0; c < S; ++c) {
      int piv = c;
      for (int r = c + 1; r < S; ++r)
        if (std::abs(at(r, c)) > std::abs(at(piv, c))) piv = r;
      if (piv != c)
        for (int k = 0; k <= S; ++k) std::swap(at(c, k), at(piv, k));
      const double d = at(c, c);
      for (int r = c + 1; r < S; ++r) {
        const double f = at(r, c) / d;
        if (f == 0.0) continue;
        for (int k = c; k <= S; ++k) at(r, k) -= f * at(c, k);
      }
    }
    std::vector<double> v(S);
    for (int r = S - 1; r >= 0; --r) {
      double acc = at(r, S);
      for (int k = r + 1; k < S; ++k) acc -= at(r, k) * v[k];
      v[r] = acc / at(r, r);
    }
    return v;
  }
};

}  // namespace detail

inline ValueSolution value_iteration(const TaskCore& core, double tol = 1e-10, int max_iter = 1'000'000) {
  if (!(core.gamma >= 0.0 && core.gamma < 1.0)) throw ParameterError("value_iteration: gamma must lie in [0,1)");
  const detail::TabularModel model(core);
  ValueSolution sol;
  sol.values.assign(core.num_states, 0.0);
  sol.greedy.assign(core.num_states, 0);
  // sup|v_{k+1} - v_k| <= tol (1 - gamma) / gamma bounds the distance to v* by tol
  const double stop = core.gamma > 0.0 ? tol * (1.0 - core.gamma) / core.gamma : tol;
  std::vector<double> next(core.num_states);
  for (int it = 1; it <= max_iter; ++it) {
    double delta = 0.0;
    for (int s = 0; s < core.num_states; ++s) {
      double best = model.q(sol.values, s, 0);
      for (int a = 1; a < core.num_actions; ++a) best = std::max(best, model.q(sol.values, s, a));
      next[s] = best;
      delta = std::max(delta, std::abs(best - sol.values[s]));
    }
    sol.values.swap(next);
    sol.iterations = it;
    if (delta <= stop) break;
    if (it == max_iter) throw NumericError("value_iteration: did not converge");
  }
  for (int s = 0; s < core.num_states; ++s) {
    int arg = 0;
    double best = model.q(sol.values, s, 0);
    for (int a = 1; a < core.num_actions; ++a) {
      const double q = model.q(sol.values, s, a);
      if (q > best + 1e-12) {
        best = q;
        arg = a;
      }
    }
    sol.greedy[s] = arg;
  }
  return sol;
}

inline constexpr std::int64_t kPolicyEnumerationLimit = 200'000;

// Optimal values over deterministic stationary policies that are constant on
// each partition block, maximized separately for every start state. Exact by
// enumeration when |A|^blocks is small; otherwise per-state coordinate ascent
// over blocks, started from the unconstrained greedy policy.
inline std::vector<double> aggregate_and_solve(const TaskCore& core, const Partition& partition) {
  if (static_cast<int>(partition.block_of.size()) != core.num_states)
    throw ParameterError("aggregate_and_solve: partition size does not match state count");
  for (int b : partition.block_of)
    if (b < 0 || b >= partition.num_blocks) throw ParameterError("aggregate_and_solve: invalid block id");
  const detail::TabularModel model(core);
  const int Bk = partition.num_blocks;
  const int A = core.num_actions;
  auto lift = [&](const std::vector<int>& block_action) {
    std::vector<int> pol(core.num_states);
    for (int s = 0; s < core.num_states; ++s) pol[s] = block_action[partition.block_of[s]];
    return pol;
  };

  std::int64_t count = 1;
  bool enumerable = true;
  for (int b = 0; b < Bk && enumerable; ++b) {
    count *= A;
    enumerable = count <= kPolicyEnumerationLimit;
  }

  std::vector<double> best(core.num_states, -std::numeric_limits<double>::infinity());
  if (enumerable) {
    std::vector<int> choice(Bk, 0);
    for (std::int64_t i = 0; i < count; ++i) {
      const auto v = model.evaluate(lift(choice));
      for (int s = 0; s < core.num_states; ++s) best[s] = std::max(best[s], v[s]);
      for (int b = Bk - 1; b >= 0; --b) {
        if (++choice[b] < A) break;
        choice[b] = 0;
      }
    }
    return best;
  }

  const auto greedy = value_iteration(core).greedy;
  std::vector<int> start(Bk, 0);
  for (int s = core.num_states - 1; s >= 0; --s) start[partition.block_of[s]] = greedy[s];
  for (int s0 = 0; s0 < core.num_states; ++s0) {
    std::vector<int> choice = start;
    double cur = model.evaluate(lift(choice))[s0];
    bool converged = false;
    for (int sweep = 0; sweep < 1000 && !converged; ++sweep) {
      converged = true;
      for (int b = 0; b < Bk; ++b)
        for (int a = 0; a < A; ++a) {
          if (a == choice[b]) continue;
          const int keep = choice[b];
          choice[b] = a;
          const double v = model.evaluate(lift(choice))[s0];
          if (v > cur + 1e-12) {
            cur = v;
            converged = false;
          } else {
            choice[b] = keep;
          }
        }
    }
    if (!converged) throw NumericError("aggregate_and_solve: best response did not converge");
    best[s0] = cur;
  }
  return best;
}

struct BoundReport {
  int T = 0;
  double gamma = 0.0;
  double r_bar = 0.0;
  double bound = 0.0;
  int num_blocks = 0;
  std::vector<double> gaps;  // one per observation g(s, x), s-major
  double max_gap = 0.0;
  double min_gap = 0.0;
  int violations = 0;
};

inline double value_bound(double gamma, int T, double r_bar) {
  return 2.0 * std::pow(gamma, T) * r_bar / (1.0 - gamma);
}

inline BoundReport bound_report(const BMDPInstance& inst, int T, const Partition& partition,
                                double slack = 1e-9) {
  const auto vstar = value_iteration(inst.core).values;
  const auto vbar = aggregate_and_solve(inst.core, partition);
  BoundReport rep;
  rep.T = T;
  rep.gamma = inst.core.gamma;
  rep.r_bar = inst.core.r_bar;
  rep.bound = value_bound(rep.gamma, T, rep.r_bar);
  rep.num_blocks = partition.num_blocks;
  rep.max_gap = -std::numeric_limits<double>::infinity();
  rep.min_gap = std::numeric_limits<double>::infinity();
  for (int s = 0; s < inst.core.num_states; ++s)
    for (int x = 0; x < inst.num_factors(); ++x) {
      const double gap = vstar[s] - vbar[s];
      rep.gaps.push_back(gap);
      rep.max_gap = std::max(rep.max_gap, gap);
      rep.min_gap = std::min(rep.min_gap, gap);
      if (gap < -slack || gap > rep.bound) ++rep.violations;
    }
  return rep;
}

// Uses the exact T-level partition, which is a T-level representation by construction.
inline BoundReport check_value_bound(const BMDPInstance& inst, int T) {
  if (T < 1) throw ParameterError("check_value_bound: T must be >= 1");
  return bound_report(inst, T, t_level_partition(inst.core, T));
}

inline nlohmann::json bound_report_to_json(const BoundReport& r) {
  return {{"T", r.T}, {"gamma", r.gamma}, {"r_bar", r.r_bar}, {"bound", r.bound},
          {"num_blocks", r.num_blocks}, {"gaps", r.gaps}, {"max_gap", r.max_gap},
          {"min_gap", r.min_gap}, {"violations", r.violations}};
}

// ---------------------------------------------------------------------------
// Learned-representation diagnostic

// Lloyd's k-means with k-means++ seeding; returns a cluster id per row.
inline std::vector<int> kmeans(const Matrix& x, int k, std::uint64_t seed, int max_iter = 100) {
  require(k >= 1 && k <= x.rows, "kmeans: k must lie in [1, rows]");
  Rng rng = make_rng(seed, 71);
  auto dist2 = [&](const double* a, const double* b) {
    double d = 0.0;
    for (int c = 0; c < x.cols; ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
    return d;
  };
  Matrix centers(k, x.cols);
  const int first = uniform_index(rng, x.rows);
  std::copy(x.row(first), x.row(first) + x.cols, centers.row(0));
  std::vector<double> nearest(x.rows, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (int n = 0; n < x.rows; ++n) nearest[n] = std::min(nearest[n], dist2(x.row(n), centers.row(c - 1)));
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    int pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < x.rows && u >= nearest[pick]; ++pick) u -= nearest[pick];
    }
    std::copy(x.row(pick), x.row(pick) + x.cols, centers.row(c));
  }
  std::vector<int> assign(x.rows, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (int n = 0; n < x.rows; ++n) {
      int best = 0;
      double bd = dist2(x.row(n), centers.row(0));
      for (int c = 1; c < k; ++c) {
        const double d = dist2(x.row(n), centers.row(c));
        if (d < bd) bd = d, best = c;
      }
      changed = changed || assign[n] != best;
      assign[n] = best;
    }
    if (!changed) break;
    Matrix sum(k, x.cols);
    std::vector<int> count(k, 0);
    for (int n = 0; n < x.rows; ++n) {
      ++count[assign[n]];
      for (int c = 0; c < x.cols; ++c) sum(assign[n], c) += x(n, c);
    }
    for (int c = 0; c < k; ++c)
      if (count[c] > 0)
        for (int j = 0; j < x.cols; ++j) centers(c, j) = sum(c, j) / count[c];
  }
  return assign;
}

// Clusters the latents of every (state, factor) observation into k groups,
// assigns each state its most common cluster, and reports value gaps for the
// induced partition. Learned encoders only approximate a T-level
// representation, so violations here are informative rather than failures.
inline BoundReport learned_bound_diagnostic(const BMDPInstance& inst, const ParamSet& encoder, int T, int k,
                                            std::uint64_t seed) {
  std::vector<Observation> obs;
  for (int s = 0; s < inst.core.num_states; ++s)
    for (int x = 0; x < inst.num_factors(); ++x) obs.push_back(observe(inst, s, x));
  const auto assign = kmeans(encode(encoder, obs), k, seed);
  Partition p;
  p.block_of.assign(inst.core.num_states, -1);
  std::map<int, int> renumber;
  for (int s = 0; s < inst.core.num_states; ++s) {
    std::vector<int> votes(k, 0);
    for (int x = 0; x < inst.num_factors(); ++x) ++votes[assign[static_cast<std::size_t>(s) * inst.num_factors() + x]];
    const int c = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    auto it = renumber.try_emplace(c, static_cast<int>(renumber.size())).first;
    p.block_of[s] = it->second;
  }
  p.num_blocks = static_cast<int>(renumber.size());
  return bound_report(inst, T, p);
}

// ---------------------------------------------------------------------------
// Probes

struct ProbeDataset {
  Matrix representations;
  std::vector<int> env_labels;    // index into the list of probed environments
  std::vector<int> state_labels;
  std::vector<int> train_idx;
  std::vector<int> eval_idx;
};

// Rolls out the behaviour policy in `envs`, encodes every visited observation
// with the frozen encoder, and splits 80/20.
inline ProbeDataset collect_probe_dataset(const BMDPInstance& inst, const ParamSet& encoder,
                                          const std::vector<int>& envs, int num_samples, std::uint64_t seed,
                                          const BehaviorPolicy& policy = {}) {
  require(!envs.empty(), "collect_probe_dataset: no environments");
  require(num_samples >= 5, "collect_probe_dataset: need at least 5 samples");
  if (encoder.input_dim() != inst.obs_dim())
    throw ParameterError("collect_probe_dataset: encoder does not match instance observation size");
  Rng rng = make_rng(seed, 51);
  std::vector<Observation> obs;
  ProbeDataset ds;
  std::uint64_t episode = 0;
  while (static_cast<int>(obs.size()) < num_samples) {
    for (std::size_t i = 0; i < envs.size() && static_cast<int>(obs.size()) < num_samples; ++i) {
      auto [ep, o] = Episode::reset(inst, envs[i], mix_seed(seed, 7919 * episode++ + i));
      while (static_cast<int>(obs.size()) < num_samples) {
        obs.push_back(o);
        ds.env_labels.push_back(static_cast<int>(i));
        ds.state_labels.push_back(ep.state());
        if (ep.done()) break;
        o = ep.step(policy.sample(rng, inst.core.num_actions)).obs;
      }
    }
  }
  ds.representations = encode(encoder, obs);
  std::vector<int> perm(num_samples);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int n_train = num_samples * 4 / 5;
  ds.train_idx.assign(perm.begin(), perm.begin() + n_train);
  ds.eval_idx.assign(perm.begin() + n_train, perm.end());
  return ds;
}

struct ProbeConfig {
  int epochs = 100;
  int eval_every = 10;
  int batch_size = 128;
  int hidden = 64;
  double lr = 1e-3;
};

struct ProbeResult {
  std::vector<std::pair<int, double>> curve;  // (epoch, eval cross-entropy), epoch 0 = untrained head
  double final_ce = 0.0;
  double final_accuracy = 0.0;
  int num_classes = 0;
};

inline Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<int>(idx.size()), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy(m.row(idx[i]), m.row(idx[i]) + m.cols, out.row(static_cast<int>(i)));
  return out;
}

// Softmax cross-entropy of the probe head on (representations, labels).
inline double probe_loss(const ParamSet& head, const Matrix& reps, std::span<const int> labels,
                         ParamSet* grad_out = nullptr) {
  ForwardCache cache;
  const Matrix logits = forward_batch(head, reps, grad_out ? &cache : nullptr);
  Matrix d;
  const double loss = softmax_cross_entropy(logits, labels, grad_out ? &d : nullptr);
  if (grad_out) backward_batch(head, cache, d, *grad_out);
  return loss;
}

inline double probe_accuracy(const ParamSet& head, const Matrix& reps, std::span<const int> labels) {
  const Matrix logits = forward_batch(head, reps);
  int correct = 0;
  for (int n = 0; n < logits.rows; ++n) {
    const double* z = logits.row(n);
    const int arg = static_cast<int>(std::max_element(z, z + logits.cols) - z);
    correct += (arg == labels[n]);
  }
  return static_cast<double>(correct) / logits.rows;
}

inline ProbeResult train_probe(const ProbeDataset& ds, const std::vector<int>& labels, int num_classes,
                               const ProbeConfig& cfg, std::uint64_t seed) {
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ParameterError("probe: need at least two label classes");
  require(cfg.epochs >= 0 && cfg.eval_every >= 1 && cfg.batch_size >= 1, "probe: invalid config");
  const int L = ds.representations.cols;
  ParamSet head = init_mlp({L, cfg.hidden, cfg.hidden, num_classes}, Activation::kRelu, Activation::kIdentity,
                           mix_seed(seed, 61));
  OptState opt = OptState::for_params(head, cfg.lr);
  const Matrix eval_x = gather_rows(ds.representations, ds.eval_idx);
  std::vector<int> eval_y;
  for (int i : ds.eval_idx) eval_y.push_back(labels[i]);

  ProbeResult res;
  res.num_classes = num_classes;
  res.curve.emplace_back(0, probe_loss(head, eval_x, eval_y));
  Rng rng = make_rng(seed, 62);
  std::vector<int> order = ds.train_idx;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> y;
      for (int i : idx) y.push_back(labels[i]);
      ParamSet g = head.zeros_like();
      probe_loss(head, gather_rows(ds.representations, idx), y, &g);
      adam_update(head, g, opt);
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
      res.curve.emplace_back(epoch, probe_loss(head, eval_x, eval_y));
  }
  res.final_ce = res.curve.back().second;
  res.final_accuracy = probe_accuracy(head, eval_x, eval_y);
  return res;
}

inline ProbeResult probe_env_label(const ProbeDataset& ds, const ProbeConfig& cfg, std::uint64_t seed) {
  const int classes = ds.env_labels.empty() ? 0 : *std::max_element(ds.env_labels.begin(), ds.env_labels.end()) + 1;
  if (classes < 2) throw ParameterError("probe_env_label: need at least two environments");
  return train_probe(ds, ds.env_labels, classes, cfg, seed);
}

inline ProbeResult probe_state(const ProbeDataset& ds, const ProbeConfig& cfg, std::uint64_t seed) {
  const int classes =
      ds.state_labels.empty() ? 0 : *std::max_element(ds.state_labels.begin(), ds.state_labels.end()) + 1;
  if (classes < 2) throw ParameterError("probe_state: need at least two states");
  return train_probe(ds, ds.state_labels, classes, cfg, seed);
}

// CSV with columns epoch, ce.
inline std::string probe_curve_csv(const ProbeResult& r) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "epoch,ce\n";
  for (const auto& [epoch, ce] : r.curve) out << epoch << ',' << ce << '\n';
  return out.str();
}

inline nlohmann::json probe_result_to_json(const ProbeResult& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [epoch, ce] : r.curve) curve.push_back({{"epoch", epoch}, {"ce", ce}});
  return {{"num_classes", r.num_classes}, {"final_ce", r.final_ce}, {"final_accuracy", r.final_accuracy},
          {"curve", curve}};
}

}  // namespace cresp
