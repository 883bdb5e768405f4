#pragma once

// Exact reward-sequence distributions (RSDs) and their characteristic
// functions on enumerable instances.
//
// p(r_1..r_T | s, a_1..a_T) is computed by pushing a joint (reward prefix,
// latent state) table forward one action at a time and marginalizing the state
// at the end. Everything here is exact up to floating-point rounding and
// serves as ground truth for the Monte-Carlo and learned quantities.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include "json.hpp"

#include "cresp/bmdp.hpp"
#include "cresp/core.hpp"

namespace cresp {

using ActionSeq = std::vector<int>;

struct RsdEntry {
  std::vector<int> reward_index;
  std::vector<double> rewards;
  double prob = 0.0;
};

struct ExactRSD {
  int T = 0;
  std::vector<RsdEntry> entries;  // sorted by reward_index, distinct

  double total_mass() const {
    double m = 0.0;
    for (const auto& e : entries) m += e.prob;
    return m;
  }
};

struct CFValue {
  double re = 0.0;
  double im = 0.0;

  double modulus() const { return std::hypot(re, im); }
  CFValue conj() const { return {re, -im}; }
  friend double distance(const CFValue& a, const CFValue& b) {
    return std::hypot(a.re - b.re, a.im - b.im);
  }
};

inline constexpr std::int64_t kEnumerationBudget = 1'000'000;
inline constexpr std::int64_t kActionSeqBudget = 10'000;

inline ExactRSD enumerate_rsd(const TaskCore& core, int s, const ActionSeq& actions) {
  if (actions.empty()) throw ParameterError("enumerate_rsd: action sequence must be non-empty");
  if (s < 0 || s >= core.num_states) throw ParameterError("enumerate_rsd: state out of range");
  for (int a : actions)
    if (a < 0 || a >= core.num_actions) throw ParameterError("enumerate_rsd: action out of range");

  const int S = core.num_states;
  const int R = core.num_rewards();
  std::map<std::vector<int>, std::vector<double>> layer;
  layer[{}] = std::vector<double>(S, 0.0);
  layer[{}][s] = 1.0;

  std::int64_t expanded = 0;
  for (int a : actions) {
    std::map<std::vector<int>, std::vector<double>> next;
    for (const auto& [prefix, mass] : layer) {
      for (int from = 0; from < S; ++from) {
        const double p = mass[from];
        if (p == 0.0) continue;
        if (++expanded > kEnumerationBudget)
          throw ResourceError("enumerate_rsd: enumeration budget exceeded");
        const double* row = core.row(from, a);
        for (int to = 0; to < S; ++to)
          for (int r = 0; r < R; ++r) {
            const double q = row[static_cast<std::size_t>(to) * R + r];
            if (q == 0.0) continue;
            std::vector<int> key = prefix;
            key.push_back(r);
            auto& slot = next[key];
            if (slot.empty()) slot.assign(S, 0.0);
            slot[to] += p * q;
          }
      }
    }
    layer = std::move(next);
  }

  ExactRSD out;
  out.T = static_cast<int>(actions.size());
  for (const auto& [key, mass] : layer) {
    RsdEntry e;
    e.reward_index = key;
    for (int r : key) e.rewards.push_back(core.reward_support[r]);
    for (double m : mass) e.prob += m;
    if (e.prob > 0.0) out.entries.push_back(std::move(e));
  }
  return out;
}

// phi(w) = sum_r p(r) exp(i <w, r>) with <w, r> = sum_{t=1..T} gamma_seq^t w_t r_t.
// Normalized by the total mass, which makes phi(0) = 1 exact in floating point.
inline CFValue exact_cf(const ExactRSD& rsd, const std::vector<double>& omega, double gamma_seq) {
  if (static_cast<int>(omega.size()) != rsd.T)
    throw ParameterError("exact_cf: omega length does not match T");
  if (!(gamma_seq > 0.0 && gamma_seq <= 1.0))
    throw ParameterError("exact_cf: gamma_seq must lie in (0,1]");
  double re = 0.0, im = 0.0, mass = 0.0;
  for (const auto& e : rsd.entries) {
    double u = 0.0, w = 1.0;
    for (int t = 0; t < rsd.T; ++t) {
      w *= gamma_seq;
      u += w * omega[t] * e.rewards[t];
    }
    re += e.prob * std::cos(u);
    im += e.prob * std::sin(u);
    mass += e.prob;
  }
  return {re / mass, im / mass};
}

// Max |p1 - p2| over the union of supports.
inline double rsd_max_abs_difference(const ExactRSD& a, const ExactRSD& b) {
  std::map<std::vector<int>, double> diff;
  for (const auto& e : a.entries) diff[e.reward_index] += e.prob;
  for (const auto& e : b.entries) diff[e.reward_index] -= e.prob;
  double m = 0.0;
  for (const auto& [k, v] : diff) m = std::max(m, std::abs(v));
  return m;
}

inline std::vector<ActionSeq> all_action_sequences(int num_actions, int T) {
  if (T < 1) throw ParameterError("all_action_sequences: T must be >= 1");
  std::int64_t count = 1;
  for (int t = 0; t < T; ++t) {
    count *= num_actions;
    if (count > kActionSeqBudget)
      throw ResourceError("all_action_sequences: |A|^T exceeds the enumeration guard");
  }
  std::vector<ActionSeq> out;
  out.reserve(static_cast<std::size_t>(count));
  ActionSeq cur(T, 0);
  for (std::int64_t i = 0; i < count; ++i) {
    out.push_back(cur);
    for (int t = T - 1; t >= 0; --t) {
      if (++cur[t] < num_actions) break;
      cur[t] = 0;
    }
  }
  return out;
}

inline std::vector<std::vector<double>> probe_omegas(int count, int T, std::uint64_t seed) {
  Rng rng = make_rng(seed, 7);
  std::vector<std::vector<double>> out(count, std::vector<double>(T));
  for (auto& w : out)
    for (auto& v : w) v = standard_normal(rng);
  return out;
}

struct RsdComparison {
  bool same = false;
  double max_cf_difference = 0.0;
};

// Comparison of two observations through exact CFs, exhaustive
// over A^T and over num_probe_omegas standard-normal frequencies.
inline RsdComparison compare_rsd(const BMDPInstance& inst, const Observation& o,
                                 const Observation& o2, int T, int num_probe_omegas,
                                 std::uint64_t seed, double tol = 1e-9,
                                 double gamma_seq = 0.8) {
  if (T < 1) throw ParameterError("same_rsd: T must be >= 1");
  if (num_probe_omegas < 1) throw ParameterError("same_rsd: need at least one probe frequency");
  const Decoded d1 = decode(inst, o);
  const Decoded d2 = decode(inst, o2);
  const auto seqs = all_action_sequences(inst.core.num_actions, T);
  const auto omegas = probe_omegas(num_probe_omegas, T, seed);
  RsdComparison out;
  for (const auto& seq : seqs) {
    const ExactRSD p = enumerate_rsd(inst.core, d1.state, seq);
    const ExactRSD q = enumerate_rsd(inst.core, d2.state, seq);
    for (const auto& w : omegas)
      out.max_cf_difference =
          std::max(out.max_cf_difference, distance(exact_cf(p, w, gamma_seq), exact_cf(q, w, gamma_seq)));
  }
  out.same = out.max_cf_difference <= tol;
  return out;
}

inline bool same_rsd(const BMDPInstance& inst, const Observation& o, const Observation& o2, int T,
                     int num_probe_omegas, std::uint64_t seed, double tol = 1e-9) {
  return compare_rsd(inst, o, o2, T, num_probe_omegas, seed, tol).same;
}

struct Partition {
  std::vector<int> block_of;  // state -> block id, ids numbered by first occurrence
  int num_blocks = 0;

  std::vector<std::vector<int>> blocks() const {
    std::vector<std::vector<int>> out(num_blocks);
    for (std::size_t s = 0; s < block_of.size(); ++s) out[block_of[s]].push_back(static_cast<int>(s));
    return out;
  }
  static Partition identity(int n) {
    Partition p;
    p.num_blocks = n;
    for (int i = 0; i < n; ++i) p.block_of.push_back(i);
    return p;
  }
  static Partition single(int n) {
    Partition p;
    p.num_blocks = n > 0 ? 1 : 0;
    p.block_of.assign(n, 0);
    return p;
  }
};

// True iff every block of `finer` lies inside one block of `coarser`.
inline bool refines(const Partition& finer, const Partition& coarser) {
  if (finer.block_of.size() != coarser.block_of.size()) return false;
  std::vector<int> image(finer.num_blocks, -1);
  for (std::size_t s = 0; s < finer.block_of.size(); ++s) {
    int& slot = image[finer.block_of[s]];
    if (slot == -1) slot = coarser.block_of[s];
    else if (slot != coarser.block_of[s]) return false;
  }
  return true;
}

// States are grouped iff their length-T RSDs coincide for every action
// sequence. Finite supports make this a direct table comparison.
inline Partition t_level_partition(const TaskCore& core, int T, double tol = 1e-12) {
  const auto seqs = all_action_sequences(core.num_actions, T);
  std::vector<std::vector<ExactRSD>> table(core.num_states);
  for (int s = 0; s < core.num_states; ++s)
    for (const auto& seq : seqs) table[s].push_back(enumerate_rsd(core, s, seq));

  Partition p;
  p.block_of.assign(core.num_states, -1);
  std::vector<int> representatives;
  for (int s = 0; s < core.num_states; ++s) {
    for (std::size_t b = 0; b < representatives.size(); ++b) {
      const int rep = representatives[b];
      bool match = true;
      for (std::size_t k = 0; k < seqs.size() && match; ++k)
        match = rsd_max_abs_difference(table[s][k], table[rep][k]) <= tol;
      if (match) {
        p.block_of[s] = static_cast<int>(b);
        break;
      }
    }
    if (p.block_of[s] == -1) {
      p.block_of[s] = static_cast<int>(representatives.size());
      representatives.push_back(s);
    }
  }
  p.num_blocks = static_cast<int>(representatives.size());
  return p;
}

inline Partition t_level_partition(const BMDPInstance& inst, int T) {
  return t_level_partition(inst.core, T);
}

inline nlohmann::json rsd_to_json(const ExactRSD& rsd) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : rsd.entries)
    entries.push_back({{"reward_index", e.reward_index}, {"rewards", e.rewards}, {"prob", e.prob}});
  return {{"T", rsd.T}, {"entries", entries}};
}

inline ExactRSD rsd_from_json(const nlohmann::json& j) {
  ExactRSD rsd;
  rsd.T = j.at("T").get<int>();
  for (const auto& e : j.at("entries")) {
    RsdEntry r;
    r.reward_index = e.at("reward_index").get<std::vector<int>>();
    r.rewards = e.at("rewards").get<std::vector<double>>();
    r.prob = e.at("prob").get<double>();
    rsd.entries.push_back(std::move(r));
  }
  return rsd;
}

}  // namespace cresp
