#pragma once

// Replay of partial trajectories, representation objectives, and the
// collect/update loop that trains an encoder with one of them.
//
// Objectives (all take the encoder plus one or two heads):
//   cresp      squared error of predicted (cos, sin) against cos/sin <w, R>
//   cresp_sum  the same on the discounted reward sum with scalar w
//   rp         mean-per-coordinate L1 regression of the reward sequence
//   rp_sum     L1 regression of the discounted reward sum
//   rdp        dot-product InfoNCE between (phi(o_t), a_t) and phi(o_{t+1})

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cresp/bmdp.hpp"
#include "cresp/charfn.hpp"
#include "cresp/core.hpp"
#include "cresp/diffnet.hpp"

namespace cresp {

struct TrajectorySegment {
  Observation o_start;
  Observation o_next;  // observation after actions[0]; used by the contrastive objective
  ActionSeq actions;
  std::vector<double> rewards;
  int env_id = 0;
  int state_id = -1;  // oracle label for probes and alignment checks only
};

// Ring buffer of segments fed by per-environment sliding windows. A segment
// is emitted once T consecutive transitions of one episode are available;
// windows are cleared at episode boundaries so no segment spans two episodes.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int T) : capacity_(capacity), T_(T) {
    require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
    require(T >= 1, "ReplayBuffer: T must be >= 1");
  }

  // Records (o_t, a_t, r_{t+1}, o_{t+1}); returns the number of segments emitted.
  int push_transition(int env_id, const Observation& o, int a, double r, const Observation& o_next,
                      bool episode_boundary, int state_id = -1) {
    auto& win = windows_[env_id];
    win.push_back({o, o_next, a, r, state_id});
    int emitted = 0;
    if (static_cast<int>(win.size()) == T_) {
      TrajectorySegment seg;
      seg.o_start = win.front().o;
      seg.o_next = win.front().o_next;
      seg.env_id = env_id;
      seg.state_id = win.front().state_id;
      for (const auto& tr : win) {
        seg.actions.push_back(tr.a);
        seg.rewards.push_back(tr.r);
      }
      insert(std::move(seg));
      win.pop_front();
      emitted = 1;
    }
    if (episode_boundary) win.clear();
    return emitted;
  }

  std::size_t size() const { return segments_.size(); }
  std::size_t capacity() const { return capacity_; }
  int horizon() const { return T_; }
  // Index 0 is the oldest retained segment.
  const TrajectorySegment& at(std::size_t i) const {
    return segments_[(head_ + i) % segments_.size()];
  }

 private:
  struct Transition {
    Observation o;
    Observation o_next;
    int a;
    double r;
    int state_id;
  };

  void insert(TrajectorySegment seg) {
    if (segments_.size() < capacity_) {
      segments_.push_back(std::move(seg));
    } else {
      segments_[head_] = std::move(seg);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t capacity_;
  int T_;
  std::vector<TrajectorySegment> segments_;
  std::size_t head_ = 0;
  std::map<int, std::deque<Transition>> windows_;
};

// Uniform with replacement.
inline std::vector<TrajectorySegment> sample_batch(const ReplayBuffer& buf, int n, std::uint64_t seed) {
  require(n >= 1, "sample_batch: n must be >= 1");
  if (buf.size() < static_cast<std::size_t>(n)) throw StateError("sample_batch: not enough segments");
  Rng rng = make_rng(seed, 31);
  std::uniform_int_distribution<std::size_t> pick(0, buf.size() - 1);
  std::vector<TrajectorySegment> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(buf.at(pick(rng)));
  return out;
}

// ---------------------------------------------------------------------------
// Objectives

enum class Objective { kCresp, kRp, kRpSum, kCrespSum, kRdp };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::kCresp: return "cresp";
    case Objective::kRp: return "rp";
    case Objective::kRpSum: return "rp_sum";
    case Objective::kCrespSum: return "cresp_sum";
    case Objective::kRdp: return "rdp";
  }
  return "cresp";
}

inline Objective objective_from_string(const std::string& s) {
  if (s == "cresp") return Objective::kCresp;
  if (s == "rp") return Objective::kRp;
  if (s == "rp_sum") return Objective::kRpSum;
  if (s == "cresp_sum") return Objective::kCrespSum;
  if (s == "rdp") return Objective::kRdp;
  throw ParameterError("unknown objective '" + s + "'");
}

// Gradients of a loss with respect to the encoder and up to two heads.
struct LossGrads {
  ParamSet encoder;
  ParamSet head_a;
  ParamSet head_b;
};

namespace detail {

inline Matrix stack_observations(std::span<const TrajectorySegment> batch, bool next) {
  if (batch.empty()) throw ParameterError("loss: empty batch");
  const int D = static_cast<int>(batch[0].o_start.size());
  Matrix m(static_cast<int>(batch.size()), D);
  for (int b = 0; b < m.rows; ++b) {
    const auto& o = next ? batch[b].o_next : batch[b].o_start;
    if (static_cast<int>(o.size()) != D) throw ParameterError("loss: inconsistent observation size");
    std::copy(o.begin(), o.end(), m.row(b));
  }
  return m;
}

// Writes [z, onehot(a_1), ..., onehot(a_T)] into dst.
inline void write_conditioning(double* dst, const double* z, int latent, const ActionSeq& actions,
                               int num_actions) {
  std::copy(z, z + latent, dst);
  double* a = dst + latent;
  std::fill(a, a + actions.size() * num_actions, 0.0);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    if (actions[t] < 0 || actions[t] >= num_actions) throw ParameterError("loss: action out of range");
    a[t * num_actions + actions[t]] = 1.0;
  }
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + ": loss is not finite");
}

inline constexpr int kLossShards = 8;

// Shared core of cresp and cresp_sum: every segment b is paired with every
// frequency k; the predictors see [z_b, onehot(actions_b), w_k] and regress
// (cos u_bk, sin u_bk).
inline double cf_regression_loss(const ParamSet& enc, const ParamSet& pred_cos, const ParamSet& pred_sin,
                                 std::span<const TrajectorySegment> batch, const OmegaBatch& omegas,
                                 int num_actions, const std::function<double(int b, int k)>& phase,
                                 LossGrads* grads) {
  if (omegas.kappa < 1) throw ParameterError("cf loss: kappa must be >= 1");
  const int B = static_cast<int>(batch.size());
  const int T = static_cast<int>(batch[0].actions.size());
  const int W = omegas.T;
  const int L = enc.output_dim();
  const int in_dim = L + T * num_actions + W;
  if (pred_cos.input_dim() != in_dim || pred_sin.input_dim() != in_dim)
    throw ParameterError("cf loss: predictor input dimension mismatch");
  if (pred_cos.output_dim() != 1 || pred_sin.output_dim() != 1)
    throw ParameterError("cf loss: predictors must have scalar output");
  for (const auto& seg : batch)
    if (static_cast<int>(seg.actions.size()) != T || seg.rewards.size() != seg.actions.size())
      throw ParameterError("cf loss: inconsistent segment length");

  ForwardCache enc_cache;
  const Matrix Z = forward_batch(enc, stack_observations(batch, false), grads ? &enc_cache : nullptr);
  const int K = omegas.kappa;
  const double inv_pairs = 1.0 / (static_cast<double>(B) * K);

  const int shards = std::min(kLossShards, B);
  std::vector<double> partial(shards, 0.0);
  std::vector<ParamSet> g_cos(grads ? shards : 0), g_sin(grads ? shards : 0);
  Matrix dZ(grads ? B : 0, L);

  run_shards(shards, [&](int sh) {
    const int b0 = B * sh / shards;
    const int b1 = B * (sh + 1) / shards;
    const int rows = (b1 - b0) * K;
    Matrix in(rows, in_dim);
    std::vector<double> u(rows);
    for (int b = b0; b < b1; ++b)
      for (int k = 0; k < K; ++k) {
        const int r = (b - b0) * K + k;
        double* dst = in.row(r);
        write_conditioning(dst, Z.row(b), L, batch[b].actions, num_actions);
        const auto w = omegas.row(k);
        std::copy(w.begin(), w.end(), dst + L + T * num_actions);
        u[r] = phase(b, k);
      }
    ForwardCache cc, cs;
    const Matrix pc = forward_batch(pred_cos, in, grads ? &cc : nullptr);
    const Matrix ps = forward_batch(pred_sin, in, grads ? &cs : nullptr);
    Matrix dc(rows, 1), ds(rows, 1);
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double ec = pc.data[r] - std::cos(u[r]);
      const double es = ps.data[r] - std::sin(u[r]);
      acc += ec * ec + es * es;
      dc.data[r] = 2.0 * ec * inv_pairs;
      ds.data[r] = 2.0 * es * inv_pairs;
    }
    partial[sh] = acc;
    if (!grads) return;
    g_cos[sh] = pred_cos.zeros_like();
    g_sin[sh] = pred_sin.zeros_like();
    const Matrix din_c = backward_batch(pred_cos, cc, dc, g_cos[sh]);
    const Matrix din_s = backward_batch(pred_sin, cs, ds, g_sin[sh]);
    for (int b = b0; b < b1; ++b)
      for (int k = 0; k < K; ++k) {
        const int r = (b - b0) * K + k;
        for (int l = 0; l < L; ++l) dZ(b, l) += din_c(r, l) + din_s(r, l);
      }
  });

  double total = 0.0;
  for (double p : partial) total += p;
  const double loss = total * inv_pairs;
  check_finite(loss, "cf loss");
  if (grads) {
    grads->head_a = pred_cos.zeros_like();
    grads->head_b = pred_sin.zeros_like();
    for (int sh = 0; sh < shards; ++sh) {
      grads->head_a.add_scaled(g_cos[sh], 1.0);
      grads->head_b.add_scaled(g_sin[sh], 1.0);
    }
    grads->encoder = enc.zeros_like();
    backward_batch(enc, enc_cache, dZ, grads->encoder);
  }
  return loss;
}

// L1 regression of per-segment targets from [z, onehot(actions)].
inline double l1_regression_loss(const ParamSet& enc, const ParamSet& head,
                                 std::span<const TrajectorySegment> batch, int num_actions,
                                 const std::function<void(int b, double* target)>& targets,
                                 LossGrads* grads) {
  const int B = static_cast<int>(batch.size());
  const int T = static_cast<int>(batch[0].actions.size());
  const int L = enc.output_dim();
  const int out = head.output_dim();
  if (head.input_dim() != L + T * num_actions) throw ParameterError("l1 loss: head input dimension mismatch");
  ForwardCache enc_cache, head_cache;
  const Matrix Z = forward_batch(enc, stack_observations(batch, false), grads ? &enc_cache : nullptr);
  Matrix in(B, L + T * num_actions);
  for (int b = 0; b < B; ++b) {
    if (static_cast<int>(batch[b].actions.size()) != T) throw ParameterError("l1 loss: inconsistent segment length");
    write_conditioning(in.row(b), Z.row(b), L, batch[b].actions, num_actions);
  }
  const Matrix pred = forward_batch(head, in, grads ? &head_cache : nullptr);
  const double inv = 1.0 / (static_cast<double>(B) * out);
  Matrix d(B, out);
  std::vector<double> target(out);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    targets(b, target.data());
    for (int j = 0; j < out; ++j) {
      const double e = pred(b, j) - target[j];
      total += std::abs(e);
      d(b, j) = (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) * inv;
    }
  }
  const double loss = total * inv;
  check_finite(loss, "l1 loss");
  if (grads) {
    grads->head_a = head.zeros_like();
    const Matrix din = backward_batch(head, head_cache, d, grads->head_a);
    Matrix dZ(B, L);
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) dZ(b, l) = din(b, l);
    grads->encoder = enc.zeros_like();
    backward_batch(enc, enc_cache, dZ, grads->encoder);
  }
  return loss;
}

inline double discounted_sum(const std::vector<double>& r, double gamma_seq) {
  double g = 0.0, w = 1.0;
  for (double v : r) {
    w *= gamma_seq;
    g += w * v;
  }
  return g;
}

}  // namespace detail

inline double cresp_loss(const ParamSet& enc, const ParamSet& pred_cos, const ParamSet& pred_sin,
                         std::span<const TrajectorySegment> batch, const OmegaBatch& omegas,
                         double gamma_seq, int num_actions, LossGrads* grads = nullptr) {
  if (batch.empty()) throw ParameterError("cresp_loss: empty batch");
  if (omegas.T != static_cast<int>(batch[0].rewards.size()))
    throw ParameterError("cresp_loss: omega width must equal T");
  return detail::cf_regression_loss(
      enc, pred_cos, pred_sin, batch, omegas, num_actions,
      [&](int b, int k) { return weighted_inner(omegas.row(k), batch[b].rewards, gamma_seq); }, grads);
}

// omegas must be kappa x 1; the phase is w * sum_t gamma_seq^t r_t.
inline double cresp_sum_loss(const ParamSet& enc, const ParamSet& pred_cos, const ParamSet& pred_sin,
                             std::span<const TrajectorySegment> batch, const OmegaBatch& scalar_omegas,
                             double gamma_seq, int num_actions, LossGrads* grads = nullptr) {
  if (batch.empty()) throw ParameterError("cresp_sum_loss: empty batch");
  if (scalar_omegas.T != 1) throw ParameterError("cresp_sum_loss: omegas must be scalar");
  std::vector<double> sums;
  for (const auto& seg : batch) sums.push_back(detail::discounted_sum(seg.rewards, gamma_seq));
  return detail::cf_regression_loss(
      enc, pred_cos, pred_sin, batch, scalar_omegas, num_actions,
      [&](int b, int k) { return scalar_omegas.row(k)[0] * sums[b]; }, grads);
}

inline double rp_loss(const ParamSet& enc, const ParamSet& head, std::span<const TrajectorySegment> batch,
                      int num_actions, LossGrads* grads = nullptr) {
  if (batch.empty()) throw ParameterError("rp_loss: empty batch");
  const int T = static_cast<int>(batch[0].rewards.size());
  if (head.output_dim() != T) throw ParameterError("rp_loss: head output dimension must equal T");
  return detail::l1_regression_loss(
      enc, head, batch, num_actions,
      [&](int b, double* target) { std::copy(batch[b].rewards.begin(), batch[b].rewards.end(), target); },
      grads);
}

inline double rp_sum_loss(const ParamSet& enc, const ParamSet& head, std::span<const TrajectorySegment> batch,
                          double gamma_seq, int num_actions, LossGrads* grads = nullptr) {
  if (batch.empty()) throw ParameterError("rp_sum_loss: empty batch");
  if (head.output_dim() != 1) throw ParameterError("rp_sum_loss: head output dimension must be 1");
  return detail::l1_regression_loss(
      enc, head, batch, num_actions,
      [&](int b, double* target) { target[0] = detail::discounted_sum(batch[b].rewards, gamma_seq); },
      grads);
}

// Mean over rows of -log softmax(q_b . k_j)_b. Writes dL/dq and dL/dk when asked.
inline double infonce_loss(const Matrix& queries, const Matrix& keys, Matrix* d_queries = nullptr,
                           Matrix* d_keys = nullptr) {
  if (queries.rows < 2) throw ParameterError("infonce_loss: need at least two pairs");
  if (queries.rows != keys.rows || queries.cols != keys.cols)
    throw ParameterError("infonce_loss: query/key shape mismatch");
  const int B = queries.rows;
  const int L = queries.cols;
  Matrix scores(B, B);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double s = 0.0;
      for (int l = 0; l < L; ++l) s += queries(i, l) * keys(j, l);
      scores(i, j) = s;
    }
  std::vector<int> labels(B);
  for (int i = 0; i < B; ++i) labels[i] = i;
  Matrix d_scores;
  const double loss = softmax_cross_entropy(scores, labels, (d_queries || d_keys) ? &d_scores : nullptr);
  if (d_queries) {
    *d_queries = Matrix(B, L);
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j)
        for (int l = 0; l < L; ++l) (*d_queries)(i, l) += d_scores(i, j) * keys(j, l);
  }
  if (d_keys) {
    *d_keys = Matrix(B, L);
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j)
        for (int l = 0; l < L; ++l) (*d_keys)(j, l) += d_scores(i, j) * queries(i, l);
  }
  return loss;
}

// Queries proj([phi(o_t), onehot(a_t)]) are matched to keys phi(o_{t+1}) with
// the rest of the batch as negatives.
inline double rdp_contrastive_loss(const ParamSet& enc, const ParamSet& proj,
                                   std::span<const TrajectorySegment> batch, int num_actions,
                                   LossGrads* grads = nullptr) {
  if (batch.size() < 2) throw ParameterError("rdp_contrastive_loss: batch must hold >= 2 pairs");
  const int B = static_cast<int>(batch.size());
  const int L = enc.output_dim();
  if (proj.input_dim() != L + num_actions || proj.output_dim() != L)
    throw ParameterError("rdp_contrastive_loss: projection shape mismatch");
  const Matrix cur = detail::stack_observations(batch, false);
  const Matrix nxt = detail::stack_observations(batch, true);
  Matrix both(2 * B, cur.cols);
  std::copy(cur.data.begin(), cur.data.end(), both.data.begin());
  std::copy(nxt.data.begin(), nxt.data.end(), both.data.begin() + cur.data.size());

  ForwardCache enc_cache, proj_cache;
  const Matrix Z = forward_batch(enc, both, grads ? &enc_cache : nullptr);
  Matrix qin(B, L + num_actions);
  Matrix keys(B, L);
  for (int b = 0; b < B; ++b) {
    detail::write_conditioning(qin.row(b), Z.row(b), L, ActionSeq{batch[b].actions.at(0)}, num_actions);
    std::copy(Z.row(B + b), Z.row(B + b) + L, keys.row(b));
  }
  const Matrix queries = forward_batch(proj, qin, grads ? &proj_cache : nullptr);
  Matrix dq, dk;
  const double loss = infonce_loss(queries, keys, grads ? &dq : nullptr, grads ? &dk : nullptr);
  detail::check_finite(loss, "rdp_contrastive_loss");
  if (grads) {
    grads->head_a = proj.zeros_like();
    const Matrix dqin = backward_batch(proj, proj_cache, dq, grads->head_a);
    Matrix dZ(2 * B, L);
    for (int b = 0; b < B; ++b)
      for (int l = 0; l < L; ++l) {
        dZ(b, l) = dqin(b, l);
        dZ(B + b, l) = dk(b, l);
      }
    grads->encoder = enc.zeros_like();
    backward_batch(enc, enc_cache, dZ, grads->encoder);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Models

struct NetConfig {
  int latent_dim = 16;
  int encoder_hidden = 64;
  int head_hidden = 64;
  Activation predictor_output = Activation::kIdentity;
};

struct Model {
  Objective objective = Objective::kCresp;
  int T = 5;
  int num_actions = 0;
  ParamSet encoder;
  ParamSet head_a;  // pred_cos | rp head | rdp projection
  ParamSet head_b;  // pred_sin (cf objectives only)

  bool has_head_b() const { return objective == Objective::kCresp || objective == Objective::kCrespSum; }
};

inline Model init_model(Objective objective, int obs_dim, int num_actions, int T, const NetConfig& net,
                        std::uint64_t seed) {
  require(obs_dim >= 1 && num_actions >= 1 && T >= 1, "init_model: invalid dimensions");
  Model m;
  m.objective = objective;
  m.T = T;
  m.num_actions = num_actions;
  const int L = net.latent_dim;
  const int H = net.head_hidden;
  m.encoder = init_mlp({obs_dim, net.encoder_hidden, L}, Activation::kRelu, Activation::kTanh, mix_seed(seed, 1));
  const int cond = L + T * num_actions;
  switch (objective) {
    case Objective::kCresp:
    case Objective::kCrespSum: {
      const int w = objective == Objective::kCresp ? T : 1;
      m.head_a = init_mlp({cond + w, H, H, 1}, Activation::kRelu, net.predictor_output, mix_seed(seed, 2));
      m.head_b = init_mlp({cond + w, H, H, 1}, Activation::kRelu, net.predictor_output, mix_seed(seed, 3));
      break;
    }
    case Objective::kRp:
      m.head_a = init_mlp({cond, H, H, T}, Activation::kRelu, Activation::kIdentity, mix_seed(seed, 2));
      break;
    case Objective::kRpSum:
      m.head_a = init_mlp({cond, H, H, 1}, Activation::kRelu, Activation::kIdentity, mix_seed(seed, 2));
      break;
    case Objective::kRdp:
      m.head_a = init_mlp({L + num_actions, H, L}, Activation::kRelu, Activation::kIdentity, mix_seed(seed, 2));
      break;
  }
  return m;
}

// Objective-dispatched loss. `omegas` is ignored by the regression and
// contrastive objectives.
inline double objective_loss(const Model& m, std::span<const TrajectorySegment> batch, const OmegaBatch& omegas,
                             double gamma_seq, LossGrads* grads = nullptr) {
  switch (m.objective) {
    case Objective::kCresp:
      return cresp_loss(m.encoder, m.head_a, m.head_b, batch, omegas, gamma_seq, m.num_actions, grads);
    case Objective::kCrespSum:
      return cresp_sum_loss(m.encoder, m.head_a, m.head_b, batch, omegas, gamma_seq, m.num_actions, grads);
    case Objective::kRp:
      return rp_loss(m.encoder, m.head_a, batch, m.num_actions, grads);
    case Objective::kRpSum:
      return rp_sum_loss(m.encoder, m.head_a, batch, gamma_seq, m.num_actions, grads);
    case Objective::kRdp:
      return rdp_contrastive_loss(m.encoder, m.head_a, batch, m.num_actions, grads);
  }
  return 0.0;
}

inline Matrix encode(const ParamSet& enc, const std::vector<Observation>& obs) {
  return forward_batch(enc, Matrix::from_rows(obs));
}

// Predicted (cos, sin) for one (observation, action sequence, frequency).
inline CosSin predict_cf(const Model& m, const Observation& o, const ActionSeq& actions,
                         std::span<const double> omega) {
  const std::vector<double> z = forward(m.encoder, o);
  const int L = static_cast<int>(z.size());
  std::vector<double> in(L + actions.size() * m.num_actions + omega.size());
  detail::write_conditioning(in.data(), z.data(), L, actions, m.num_actions);
  std::copy(omega.begin(), omega.end(), in.begin() + L + actions.size() * m.num_actions);
  return {forward(m.head_a, in)[0], forward(m.head_b, in)[0]};
}

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j = {{"objective", to_string(m.objective)},
                      {"T", m.T},
                      {"num_actions", m.num_actions},
                      {"encoder", params_to_json(m.encoder)},
                      {"head_a", params_to_json(m.head_a)}};
  if (m.has_head_b()) j["head_b"] = params_to_json(m.head_b);
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  Model m;
  try {
    m.objective = objective_from_string(j.at("objective").get<std::string>());
    m.T = j.at("T").get<int>();
    m.num_actions = j.at("num_actions").get<int>();
    m.encoder = params_from_json(j.at("encoder"));
    m.head_a = params_from_json(j.at("head_a"));
    if (m.has_head_b()) m.head_b = params_from_json(j.at("head_b"));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("model JSON: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  CFConfig cf{};  // T = 5, kappa = 256, gamma_seq = 0.8
  int batch_size = 256;
  int gradient_steps = 1000;
  Objective objective = Objective::kCresp;
  std::uint64_t seed = 0;
  NetConfig net{};
  double lr = 5e-4;
  std::size_t buffer_capacity = 100000;
  int initial_steps = 1000;        // environment steps before the first update
  int env_steps_per_update = 1;    // per training environment
  std::vector<int> train_envs;     // empty: every environment of the instance
  bool record_wall_time = false;   // wall_ms stays 0 unless set, keeping histories reproducible
  BehaviorPolicy behavior{};

  void validate() const {
    cf.validate();
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(gradient_steps >= 0, "TrainConfig: gradient_steps must be >= 0");
    require(lr > 0.0, "TrainConfig: lr must be positive");
    require(buffer_capacity >= 1, "TrainConfig: buffer capacity must be >= 1");
    require(initial_steps >= 0 && env_steps_per_update >= 1, "TrainConfig: invalid step counts");
    if (objective == Objective::kRdp) require(batch_size >= 2, "TrainConfig: rdp needs batch_size >= 2");
  }
};

struct MetricRow {
  int step = 0;
  Objective objective = Objective::kCresp;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<MetricRow> history;
};

using CheckpointHook = std::function<void(int step, const Model&)>;

// Round-robin data collection over the training environments under a fixed
// behaviour policy, interleaved with one gradient step on the objective per
// round.
class Collector {
 public:
  Collector(const BMDPInstance& inst, std::vector<int> envs, const BehaviorPolicy& policy, std::uint64_t seed)
      : inst_(&inst), envs_(std::move(envs)), policy_(policy), seed_(seed), rng_(make_rng(seed, 41)) {
    for (int e : envs_) require(e >= 0 && e < inst.num_envs(), "Collector: unknown environment id");
    for (int e : envs_) slots_.push_back(fresh_slot(e));
  }

  // One environment step in env slot i; pushes the transition into buf.
  void step(std::size_t i, ReplayBuffer& buf) {
    Slot& slot = slots_.at(i);
    const int s = slot.episode->state();
    const int a = policy_.sample(rng_, inst_->core.num_actions);
    StepResult res = slot.episode->step(a);
    buf.push_transition(envs_[i], slot.obs, a, res.reward, res.obs, res.done, s);
    slot.obs = std::move(res.obs);
    if (res.done) slot = fresh_slot(envs_[i]);
  }

  std::size_t num_envs() const { return envs_.size(); }

 private:
  struct Slot {
    std::optional<Episode> episode;
    Observation obs;
  };

  Slot fresh_slot(int env) {
    auto [ep, obs] = Episode::reset(*inst_, env, mix_seed(seed_, 1000003ULL * env + episodes_++));
    Slot slot;
    slot.episode.emplace(std::move(ep));
    slot.obs = std::move(obs);
    return slot;
  }

  const BMDPInstance* inst_;
  std::vector<int> envs_;
  BehaviorPolicy policy_;
  std::uint64_t seed_;
  Rng rng_;
  std::vector<Slot> slots_;
  std::uint64_t episodes_ = 0;
};

inline TrainResult train_representation(const BMDPInstance& inst, const TrainConfig& cfg,
                                        const CheckpointHook& on_checkpoint = {}, int checkpoint_every = 0) {
  cfg.validate();
  std::vector<int> envs = cfg.train_envs;
  if (envs.empty())
    for (int e = 0; e < inst.num_envs(); ++e) envs.push_back(e);

  TrainResult result;
  Model& model = result.model;
  model = init_model(cfg.objective, inst.obs_dim(), inst.core.num_actions, cfg.cf.T, cfg.net, cfg.seed);
  if (cfg.gradient_steps == 0) return result;

  ReplayBuffer buf(cfg.buffer_capacity, cfg.cf.T);
  Collector collector(inst, envs, cfg.behavior, mix_seed(cfg.seed, 5));
  for (int i = 0; i < cfg.initial_steps; ++i) collector.step(static_cast<std::size_t>(i) % envs.size(), buf);

  OptState opt_enc = OptState::for_params(model.encoder, cfg.lr);
  OptState opt_a = OptState::for_params(model.head_a, cfg.lr);
  OptState opt_b = model.has_head_b() ? OptState::for_params(model.head_b, cfg.lr) : OptState{};

  CFConfig omega_cfg = cfg.cf;
  if (cfg.objective == Objective::kCrespSum) omega_cfg.T = 1;

  Rng rng = make_rng(cfg.seed, 6);
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  for (int step = 1; step <= cfg.gradient_steps; ++step) {
    for (std::size_t e = 0; e < envs.size(); ++e)
      for (int k = 0; k < cfg.env_steps_per_update; ++k) collector.step(e, buf);
    while (buf.size() < static_cast<std::size_t>(cfg.batch_size))
      for (std::size_t e = 0; e < envs.size(); ++e) collector.step(e, buf);

    const auto batch = sample_batch(buf, cfg.batch_size, rng());
    const OmegaBatch omegas = sample_omega(omega_cfg, rng());
    LossGrads g;
    const double loss = objective_loss(model, batch, omegas, cfg.cf.gamma_seq, &g);
    adam_update(model.encoder, g.encoder, opt_enc);
    adam_update(model.head_a, g.head_a, opt_a);
    if (model.has_head_b()) adam_update(model.head_b, g.head_b, opt_b);

    MetricRow row{step, cfg.objective, loss, 0.0};
    if (cfg.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    result.history.push_back(row);
    if (on_checkpoint && checkpoint_every > 0 && step % checkpoint_every == 0) on_checkpoint(step, model);
  }
  return result;
}

}  // namespace cresp
