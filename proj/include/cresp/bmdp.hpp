#pragma once

// Finite Block MDPs with environment-specific distractor chains.
//
// An instance pairs a task core p(s', r | s, a) with one distractor chain
// q_e(x' | x) per environment. Observations are o = g(s, x) where g is a
// fixed linear map of one-hot codes: o = W onehot(s) + B onehot(x). The
// learner only ever sees o; decode() recovers (s, x) for oracles and probes.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cresp/core.hpp"

namespace cresp {

using Observation = std::vector<double>;

struct TaskCore {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> reward_support;
  // Row-major [s][a][s'][r_idx].
  std::vector<double> transition;
  double gamma = 0.99;
  double r_bar = 0.0;

  int num_rewards() const { return static_cast<int>(reward_support.size()); }
  std::size_t row_size() const {
    return static_cast<std::size_t>(num_states) * reward_support.size();
  }
  std::size_t row_offset(int s, int a) const {
    return (static_cast<std::size_t>(s) * num_actions + a) * row_size();
  }
  // Joint distribution over (s', r_idx) for one (s, a), length num_states*num_rewards.
  const double* row(int s, int a) const { return transition.data() + row_offset(s, a); }
  double& at(int s, int a, int s2, int r) {
    return transition[row_offset(s, a) + static_cast<std::size_t>(s2) * num_rewards() + r];
  }
  double at(int s, int a, int s2, int r) const {
    return transition[row_offset(s, a) + static_cast<std::size_t>(s2) * num_rewards() + r];
  }
};

struct DistractorChain {
  int env_id = 0;
  int num_factors = 0;
  std::vector<double> chain;  // row-major [x][x']
  std::vector<double> init;   // distribution over factors
};

// g(s, x) = state_part[s] + factor_part[x].
struct ObsMap {
  int obs_dim = 0;
  std::vector<std::vector<double>> state_part;
  std::vector<std::vector<double>> factor_part;
};

struct GridSpec {
  int width = 0;
  int height = 0;
  int goal = 0;
};

struct BMDPInstance {
  std::string kind = "random";
  TaskCore core;
  std::vector<DistractorChain> chains;
  ObsMap obs;
  int horizon = 50;
  std::optional<GridSpec> grid;

  int num_envs() const { return static_cast<int>(chains.size()); }
  int num_factors() const { return static_cast<int>(obs.factor_part.size()); }
  int obs_dim() const { return obs.obs_dim; }
};

// ---------------------------------------------------------------------------
// Invariants

inline double max_abs_reward(const std::vector<double>& support) {
  double m = 0.0;
  for (double r : support) m = std::max(m, std::abs(r));
  return m;
}

inline void validate_core(const TaskCore& core) {
  require(core.num_states >= 1 && core.num_actions >= 1, "task core: counts must be >= 1");
  require(core.num_rewards() >= 1, "task core: empty reward support");
  require(core.gamma >= 0.0 && core.gamma < 1.0, "task core: gamma must lie in [0,1)");
  require(core.transition.size() ==
              static_cast<std::size_t>(core.num_actions) * core.num_states * core.row_size(),
          "task core: transition table has wrong size");
  for (double r : core.reward_support) {
    require(std::abs(r) <= core.r_bar, "task core: reward exceeds r_bar");
  }
  for (int s = 0; s < core.num_states; ++s) {
    for (int a = 0; a < core.num_actions; ++a) {
      const double* row = core.row(s, a);
      double sum = 0.0;
      for (std::size_t i = 0; i < core.row_size(); ++i) {
        require(row[i] >= 0.0 && row[i] <= 1.0, "task core: probability outside [0,1]");
        sum += row[i];
      }
      require(std::abs(sum - 1.0) <= 1e-12, "task core: row does not sum to 1");
    }
  }
}

inline void validate_chain(const DistractorChain& c) {
  const int n = c.num_factors;
  require(n >= 1, "distractor chain: no factors");
  require(c.chain.size() == static_cast<std::size_t>(n) * n, "distractor chain: bad table size");
  require(c.init.size() == static_cast<std::size_t>(n), "distractor chain: bad init size");
  for (int x = 0; x < n; ++x) {
    double sum = 0.0;
    for (int y = 0; y < n; ++y) {
      double p = c.chain[static_cast<std::size_t>(x) * n + y];
      require(p >= 0.0 && p <= 1.0, "distractor chain: probability outside [0,1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "distractor chain: row does not sum to 1");
  }
  double sum = 0.0;
  for (double p : c.init) {
    require(p >= 0.0 && p <= 1.0, "distractor chain: init probability outside [0,1]");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "distractor chain: init does not sum to 1");
}

// Smallest pairwise L2 distance between distinct observations g(s,x).
inline double min_pairwise_distance(const ObsMap& m) {
  const int S = static_cast<int>(m.state_part.size());
  const int X = static_cast<int>(m.factor_part.size());
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < S; ++s)
    for (int x = 0; x < X; ++x)
      for (int s2 = s; s2 < S; ++s2)
        for (int x2 = (s2 == s ? x + 1 : 0); x2 < X; ++x2) {
          double d2 = 0.0;
          for (int k = 0; k < m.obs_dim; ++k) {
            double d = m.state_part[s][k] + m.factor_part[x][k] - m.state_part[s2][k] -
                       m.factor_part[x2][k];
            d2 += d * d;
          }
          best = std::min(best, std::sqrt(d2));
        }
  return best;
}

inline constexpr double kInjectivityMargin = 1e-6;

inline void validate(const BMDPInstance& inst) {
  validate_core(inst.core);
  require(!inst.chains.empty(), "instance: no environments");
  require(inst.horizon >= 1, "instance: horizon must be >= 1");
  const int X = inst.num_factors();
  for (std::size_t e = 0; e < inst.chains.size(); ++e) {
    validate_chain(inst.chains[e]);
    require(inst.chains[e].num_factors == X, "instance: chain factor count mismatch");
    require(inst.chains[e].env_id == static_cast<int>(e), "instance: env ids must be 0..E-1");
  }
  require(static_cast<int>(inst.obs.state_part.size()) == inst.core.num_states,
          "instance: observation map state count mismatch");
  for (const auto& v : inst.obs.state_part)
    require(static_cast<int>(v.size()) == inst.obs.obs_dim, "instance: observation dim mismatch");
  for (const auto& v : inst.obs.factor_part)
    require(static_cast<int>(v.size()) == inst.obs.obs_dim, "instance: observation dim mismatch");
  require(min_pairwise_distance(inst.obs) >= kInjectivityMargin,
          "instance: observation function is not injective");
}

// ---------------------------------------------------------------------------
// Generators

namespace detail {

inline std::vector<double> random_simplex(Rng& rng, int n) {
  std::vector<double> w(n);
  std::exponential_distribution<double> expo(1.0);
  double sum = 0.0;
  for (auto& v : w) {
    v = expo(rng);
    sum += v;
  }
  for (auto& v : w) v /= sum;
  // push rounding slack onto the largest entry so the row sums to 1 tightly
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  auto it = std::max_element(w.begin(), w.end());
  *it += 1.0 - total;
  return w;
}

inline std::vector<double> default_reward_support(int n) {
  if (n == 1) return {1.0};
  std::vector<double> r(n);
  for (int i = 0; i < n; ++i) r[i] = static_cast<double>(i) / (n - 1);
  return r;
}

// Rank of a set of column vectors via modified Gram-Schmidt.
inline int column_rank(std::vector<std::vector<double>> cols) {
  int rank = 0;
  std::vector<std::vector<double>> basis;
  for (auto& v : cols) {
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * b[k];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * b[k];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-9) {
      for (double& x : v) x /= norm;
      basis.push_back(v);
      ++rank;
    }
  }
  return rank;
}

}  // namespace detail

// Fully random core: every (s,a) row is a Dirichlet(1) draw over (s', r_idx).
inline TaskCore make_random_core(std::uint64_t seed, int num_states, int num_actions,
                                 int num_reward_values, double gamma = 0.99) {
  require(num_states >= 1 && num_actions >= 1 && num_reward_values >= 1,
          "make_random_core: counts must be >= 1");
  Rng rng = make_rng(seed, 1);
  TaskCore core;
  core.num_states = num_states;
  core.num_actions = num_actions;
  core.reward_support = detail::default_reward_support(num_reward_values);
  core.r_bar = max_abs_reward(core.reward_support);
  core.gamma = gamma;
  core.transition.reserve(static_cast<std::size_t>(num_states) * num_actions * core.row_size());
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) {
      auto row = detail::random_simplex(rng, static_cast<int>(core.row_size()));
      core.transition.insert(core.transition.end(), row.begin(), row.end());
    }
  return core;
}

// Core with built-in reward aliasing: states are paired (2k, 2k+1) and each pair
// shares its one-step reward law p(r | s, a). Half of the pairs additionally
// share their full next-state law, making them indistinguishable at every
// horizon; the rest separate only through later rewards. Independent draws
// p(s'|s,a) p(r|s,a) make the joint table factorize.
inline TaskCore make_aliased_core(std::uint64_t seed, int num_states, int num_actions,
                                  int num_reward_values, double gamma = 0.9) {
  require(num_states >= 1 && num_actions >= 1 && num_reward_values >= 1,
          "make_aliased_core: counts must be >= 1");
  Rng rng = make_rng(seed, 2);
  TaskCore core;
  core.num_states = num_states;
  core.num_actions = num_actions;
  core.reward_support = detail::default_reward_support(num_reward_values);
  core.r_bar = max_abs_reward(core.reward_support);
  core.gamma = gamma;
  const int R = num_reward_values;
  core.transition.assign(static_cast<std::size_t>(num_states) * num_actions * core.row_size(), 0.0);
  std::vector<std::vector<double>> reward_law(static_cast<std::size_t>(num_states) * num_actions);
  std::vector<std::vector<double>> next_law(static_cast<std::size_t>(num_states) * num_actions);
  for (int s = 0; s < num_states; ++s) {
    const bool second = (s % 2 == 1);
    const bool twin = second && uniform01(rng) < 0.5;
    for (int a = 0; a < num_actions; ++a) {
      const std::size_t i = static_cast<std::size_t>(s) * num_actions + a;
      const std::size_t partner = static_cast<std::size_t>(s - 1) * num_actions + a;
      reward_law[i] = second ? reward_law[partner] : detail::random_simplex(rng, R);
      next_law[i] = twin ? next_law[partner] : detail::random_simplex(rng, num_states);
    }
  }
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) {
      const std::size_t i = static_cast<std::size_t>(s) * num_actions + a;
      double total = 0.0;
      for (int s2 = 0; s2 < num_states; ++s2)
        for (int r = 0; r < R; ++r) {
          core.at(s, a, s2, r) = next_law[i][s2] * reward_law[i][r];
          total += core.at(s, a, s2, r);
        }
      // renormalize so the product table meets the 1e-12 row-sum contract
      for (int s2 = 0; s2 < num_states; ++s2)
        for (int r = 0; r < R; ++r) core.at(s, a, s2, r) /= total;
    }
  return core;
}

// Wraps a core with random distractor chains and a random linear observation
// map whose stacked columns are linearly independent.
inline BMDPInstance attach_random_observations(TaskCore core, std::uint64_t seed, int num_envs,
                                               int num_factors, int obs_dim) {
  require(num_envs >= 1 && num_factors >= 1 && obs_dim >= 1,
          "attach_random_observations: counts must be >= 1");
  require(obs_dim >= core.num_states + num_factors,
          "attach_random_observations: obs_dim must be >= num_states + num_factors");
  BMDPInstance inst;
  inst.core = std::move(core);
  Rng rng = make_rng(seed, 3);
  for (int e = 0; e < num_envs; ++e) {
    DistractorChain c;
    c.env_id = e;
    c.num_factors = num_factors;
    for (int x = 0; x < num_factors; ++x) {
      auto row = detail::random_simplex(rng, num_factors);
      c.chain.insert(c.chain.end(), row.begin(), row.end());
    }
    c.init = detail::random_simplex(rng, num_factors);
    inst.chains.push_back(std::move(c));
  }
  inst.obs.obs_dim = obs_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(obs_dim));
  for (int attempt = 0;; ++attempt) {
    if (attempt > 100) throw NumericError("attach_random_observations: could not draw injective map");
    auto draw = [&](int n) {
      std::vector<std::vector<double>> cols(n, std::vector<double>(obs_dim));
      for (auto& col : cols)
        for (auto& v : col) v = standard_normal(rng) * scale;
      return cols;
    };
    inst.obs.state_part = draw(inst.core.num_states);
    inst.obs.factor_part = draw(num_factors);
    auto stacked = inst.obs.state_part;
    stacked.insert(stacked.end(), inst.obs.factor_part.begin(), inst.obs.factor_part.end());
    if (detail::column_rank(stacked) == static_cast<int>(stacked.size()) &&
        min_pairwise_distance(inst.obs) >= kInjectivityMargin)
      break;
  }
  validate(inst);
  return inst;
}

inline BMDPInstance make_random_bmdp(std::uint64_t seed, int num_states, int num_actions,
                                     int num_reward_values, int num_envs, int num_factors,
                                     int obs_dim) {
  require(num_states >= 1 && num_actions >= 1 && num_reward_values >= 1 && num_envs >= 1 &&
              num_factors >= 1 && obs_dim >= 1,
          "make_random_bmdp: all counts must be >= 1");
  require(obs_dim >= num_states + num_factors,
          "make_random_bmdp: obs_dim must be >= num_states + num_factors");
  auto core = make_random_core(seed, num_states, num_actions, num_reward_values);
  return attach_random_observations(std::move(core), seed, num_envs, num_factors, obs_dim);
}

struct GridOptions {
  int cell_size = 2;          // rendered pixels per cell side
  int num_tiles = 8;          // background tiles shared by every environment
  double marker = 1.0;        // added to every pixel of the agent's cell
  double background = 1.0;    // tile pixels drawn from U(0, background)
  double scroll_prob = 0.5;   // chance the background advances one pixel column per step
  double switch_prob = 0.1;   // chance of redrawing the tile from the environment's preference
  double tile_concentration = 0.5;  // Dirichlet concentration of per-environment tile preferences
  double gamma = 0.99;
};

enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

namespace detail {

inline std::vector<double> dirichlet(Rng& rng, int n, double alpha) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> w(n);
  double sum = 0.0;
  for (auto& v : w) {
    v = g(rng);
    sum += v;
  }
  if (sum <= 0.0) return std::vector<double>(n, 1.0 / n);
  for (auto& v : w) v /= sum;
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  *std::max_element(w.begin(), w.end()) += 1.0 - total;
  return w;
}

}  // namespace detail

// Deterministic gridworld: the agent's cell is the state, moves clamp at walls,
// reward 1 on entering the goal (bottom-right) cell and 0 otherwise.
//
// Observations render the grid at cell_size x cell_size pixels per cell. The
// distractor factor is (tile, offset): one of num_tiles random textures,
// scrolled horizontally by offset pixel columns. All environments share the
// tile pool; environment e differs only in its chain, which scrolls the tile
// and occasionally swaps it for a draw from its own tile preference. Factor
// index is tile * (width * cell_size) + offset.
inline BMDPInstance make_gridworld(int width, int height, int num_envs, std::uint64_t seed,
                                   const GridOptions& opt = {}) {
  require(width >= 1 && height >= 1 && width * height >= 2,
          "make_gridworld: grid must have at least 2 cells");
  require(num_envs >= 1, "make_gridworld: need at least one environment");
  require(opt.cell_size >= 1 && opt.num_tiles >= 1, "make_gridworld: invalid rendering options");
  require(opt.scroll_prob >= 0.0 && opt.scroll_prob <= 1.0 && opt.switch_prob >= 0.0 &&
              opt.switch_prob <= 1.0,
          "make_gridworld: chain probabilities must lie in [0,1]");
  BMDPInstance inst;
  inst.kind = "gridworld";
  const int S = width * height;
  const int goal = S - 1;
  inst.grid = GridSpec{width, height, goal};

  TaskCore& core = inst.core;
  core.num_states = S;
  core.num_actions = 4;
  core.reward_support = {0.0, 1.0};
  core.r_bar = 1.0;
  core.gamma = opt.gamma;
  core.transition.assign(static_cast<std::size_t>(S) * 4 * core.row_size(), 0.0);
  for (int s = 0; s < S; ++s) {
    const int row = s / width;
    const int col = s % width;
    for (int a = 0; a < 4; ++a) {
      int r2 = row, c2 = col;
      if (a == kUp) r2 = std::max(0, row - 1);
      if (a == kDown) r2 = std::min(height - 1, row + 1);
      if (a == kLeft) c2 = std::max(0, col - 1);
      if (a == kRight) c2 = std::min(width - 1, col + 1);
      const int s2 = r2 * width + c2;
      core.at(s, a, s2, s2 == goal ? 1 : 0) = 1.0;
    }
  }

  const int cs = opt.cell_size;
  const int px_w = width * cs;
  const int px_h = height * cs;
  const int D = px_w * px_h;
  const int offsets = px_w;
  const int X = opt.num_tiles * offsets;
  inst.obs.obs_dim = D;
  inst.obs.state_part.assign(S, std::vector<double>(D, 0.0));
  for (int s = 0; s < S; ++s) {
    const int row = s / width;
    const int col = s % width;
    for (int dy = 0; dy < cs; ++dy)
      for (int dx = 0; dx < cs; ++dx) inst.obs.state_part[s][(row * cs + dy) * px_w + col * cs + dx] = opt.marker;
  }

  Rng rng = make_rng(seed, 4);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 100) throw NumericError("make_gridworld: could not draw injective backgrounds");
    inst.obs.factor_part.assign(X, std::vector<double>(D, 0.0));
    for (int p = 0; p < opt.num_tiles; ++p) {
      std::vector<double> tile(D);
      for (auto& v : tile) v = opt.background * uniform01(rng);
      for (int k = 0; k < offsets; ++k) {
        auto& img = inst.obs.factor_part[p * offsets + k];
        for (int y = 0; y < px_h; ++y)
          for (int x = 0; x < px_w; ++x) img[y * px_w + x] = tile[y * px_w + (x + k) % px_w];
      }
    }
    if (min_pairwise_distance(inst.obs) >= kInjectivityMargin) break;
  }

  for (int e = 0; e < num_envs; ++e) {
    const std::vector<double> pref = detail::dirichlet(rng, opt.num_tiles, opt.tile_concentration);
    DistractorChain c;
    c.env_id = e;
    c.num_factors = X;
    c.chain.assign(static_cast<std::size_t>(X) * X, 0.0);
    c.init.assign(X, 0.0);
    for (int x = 0; x < X; ++x) {
      const int tile = x / offsets;
      const int k = x % offsets;
      double* row = c.chain.data() + static_cast<std::size_t>(x) * X;
      // keep the tile (prob 1 - switch) or redraw it from pref; then scroll
      for (int t2 = 0; t2 < opt.num_tiles; ++t2) {
        const double tile_p = (t2 == tile ? 1.0 - opt.switch_prob : 0.0) + opt.switch_prob * pref[t2];
        if (tile_p == 0.0) continue;
        row[t2 * offsets + k] += tile_p * (1.0 - opt.scroll_prob);
        row[t2 * offsets + (k + 1) % offsets] += tile_p * opt.scroll_prob;
      }
      double total = 0.0;
      for (int y = 0; y < X; ++y) total += row[y];
      for (int y = 0; y < X; ++y) row[y] /= total;
    }
    for (int x = 0; x < X; ++x) c.init[x] = pref[x / offsets] / offsets;
    double total = std::accumulate(c.init.begin(), c.init.end(), 0.0);
    for (auto& v : c.init) v /= total;
    inst.chains.push_back(std::move(c));
  }
  validate(inst);
  return inst;
}

// ---------------------------------------------------------------------------
// Observation function and its inverse

inline Observation observe(const BMDPInstance& inst, int s, int x) {
  if (s < 0 || s >= inst.core.num_states) throw ParameterError("observe: state out of range");
  if (x < 0 || x >= inst.num_factors()) throw ParameterError("observe: factor out of range");
  Observation o(inst.obs.obs_dim);
  for (int k = 0; k < inst.obs.obs_dim; ++k)
    o[k] = inst.obs.state_part[s][k] + inst.obs.factor_part[x][k];
  return o;
}

struct Decoded {
  int state = 0;
  int factor = 0;
  bool operator==(const Decoded&) const = default;
};

// Nearest-neighbour inversion of g. Only oracles and probes may call this.
inline Decoded decode(const BMDPInstance& inst, const Observation& o) {
  if (static_cast<int>(o.size()) != inst.obs.obs_dim)
    throw DecodeError("decode: observation has wrong dimension");
  double best = std::numeric_limits<double>::infinity();
  Decoded out;
  for (int s = 0; s < inst.core.num_states; ++s)
    for (int x = 0; x < inst.num_factors(); ++x) {
      double d2 = 0.0;
      for (int k = 0; k < inst.obs.obs_dim; ++k) {
        double d = o[k] - inst.obs.state_part[s][k] - inst.obs.factor_part[x][k];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        out = {s, x};
      }
    }
  if (std::sqrt(best) > kInjectivityMargin)
    throw DecodeError("decode: observation is not in the image of g");
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

struct StepResult {
  Observation obs;
  double reward = 0.0;
  int reward_index = 0;
  bool done = false;
};

// Single-owner simulation handle. Holds a pointer to the instance, which must
// outlive it.
class Episode {
 public:
  static std::pair<Episode, Observation> reset(const BMDPInstance& inst, int env_id,
                                               std::uint64_t seed) {
    if (env_id < 0 || env_id >= inst.num_envs())
      throw ParameterError("reset: unknown environment id");
    Episode ep(inst, env_id, seed);
    ep.state_ = uniform_index(ep.rng_, inst.core.num_states);
    ep.factor_ = sample_discrete(ep.rng_, inst.chains[env_id].init);
    Observation first = observe(inst, ep.state_, ep.factor_);
    return {std::move(ep), std::move(first)};
  }

  StepResult step(int action) {
    if (done_) throw StateError("step: episode is done");
    if (action < 0 || action >= inst_->core.num_actions)
      throw ParameterError("step: action out of range");
    const TaskCore& core = inst_->core;
    const int joint = sample_discrete(rng_, core.row(state_, action), static_cast<int>(core.row_size()));
    state_ = joint / core.num_rewards();
    const int r_idx = joint % core.num_rewards();
    const auto& chain = inst_->chains[env_id_];
    factor_ = sample_discrete(rng_, chain.chain.data() + static_cast<std::size_t>(factor_) * chain.num_factors,
                              chain.num_factors);
    ++t_;
    done_ = t_ >= inst_->horizon;
    return {observe(*inst_, state_, factor_), core.reward_support[r_idx], r_idx, done_};
  }

  int state() const { return state_; }
  int factor() const { return factor_; }
  int env_id() const { return env_id_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  Rng& rng() { return rng_; }

 private:
  Episode(const BMDPInstance& inst, int env_id, std::uint64_t seed)
      : inst_(&inst), env_id_(env_id), rng_(make_rng(seed, 100 + env_id)) {}

  const BMDPInstance* inst_;
  int env_id_;
  Rng rng_;
  int state_ = 0;
  int factor_ = 0;
  int t_ = 0;
  bool done_ = false;
};

struct BehaviorPolicy {
  enum class Kind { kUniform, kEpsilonScripted };
  Kind kind = Kind::kUniform;
  double epsilon = 0.1;
  int scripted_action = 0;

  std::vector<double> action_probs(int num_actions) const {
    std::vector<double> p(num_actions, 1.0 / num_actions);
    if (kind == Kind::kEpsilonScripted) {
      for (auto& v : p) v = epsilon / num_actions;
      p[scripted_action] += 1.0 - epsilon;
    }
    return p;
  }

  int sample(Rng& rng, int num_actions) const {
    if (kind == Kind::kUniform) return uniform_index(rng, num_actions);
    if (uniform01(rng) < epsilon) return uniform_index(rng, num_actions);
    return scripted_action;
  }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json core_to_json(const TaskCore& c) {
  return {{"num_states", c.num_states}, {"num_actions", c.num_actions},
          {"reward_support", c.reward_support}, {"gamma", c.gamma},
          {"r_bar", c.r_bar}, {"transition", c.transition}};
}

inline TaskCore core_from_json(const nlohmann::json& j) {
  TaskCore c;
  c.num_states = j.at("num_states").get<int>();
  c.num_actions = j.at("num_actions").get<int>();
  c.reward_support = j.at("reward_support").get<std::vector<double>>();
  c.gamma = j.at("gamma").get<double>();
  c.r_bar = j.at("r_bar").get<double>();
  c.transition = j.at("transition").get<std::vector<double>>();
  return c;
}

inline nlohmann::json instance_to_json(const BMDPInstance& inst) {
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& c : inst.chains)
    chains.push_back({{"env_id", c.env_id}, {"num_factors", c.num_factors},
                      {"chain", c.chain}, {"init", c.init}});
  nlohmann::json j = {{"format", "cresp-bmdp/1"},
                      {"kind", inst.kind},
                      {"horizon", inst.horizon},
                      {"core", core_to_json(inst.core)},
                      {"chains", chains},
                      {"obs_map",
                       {{"obs_dim", inst.obs.obs_dim},
                        {"state_part", inst.obs.state_part},
                        {"factor_part", inst.obs.factor_part}}}};
  if (inst.grid)
    j["grid"] = {{"width", inst.grid->width}, {"height", inst.grid->height}, {"goal", inst.grid->goal}};
  return j;
}

inline BMDPInstance instance_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cresp-bmdp/1")
    throw ParameterError("instance JSON: unsupported format tag");
  BMDPInstance inst;
  try {
    inst.kind = j.at("kind").get<std::string>();
    inst.horizon = j.at("horizon").get<int>();
    inst.core = core_from_json(j.at("core"));
    for (const auto& c : j.at("chains")) {
      DistractorChain d;
      d.env_id = c.at("env_id").get<int>();
      d.num_factors = c.at("num_factors").get<int>();
      d.chain = c.at("chain").get<std::vector<double>>();
      d.init = c.at("init").get<std::vector<double>>();
      inst.chains.push_back(std::move(d));
    }
    const auto& m = j.at("obs_map");
    inst.obs.obs_dim = m.at("obs_dim").get<int>();
    inst.obs.state_part = m.at("state_part").get<std::vector<std::vector<double>>>();
    inst.obs.factor_part = m.at("factor_part").get<std::vector<std::vector<double>>>();
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      inst.grid = GridSpec{g.at("width").get<int>(), g.at("height").get<int>(), g.at("goal").get<int>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("instance JSON: ") + e.what());
  }
  validate(inst);
  return inst;
}

// Stable across runs: derived from the canonical JSON dump.
inline std::uint64_t fingerprint(const BMDPInstance& inst) {
  return fnv1a(instance_to_json(inst).dump());
}

}  // namespace cresp
