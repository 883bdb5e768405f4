#pragma once

// Dense feed-forward networks with hand-written reverse-mode gradients.
//
// A network is a ParamSet: a chain of affine layers, each followed by an
// elementwise activation. Batches are row-major matrices (one sample per
// row). forward_batch() records the per-layer inputs and outputs that
// backward_batch() needs; gradients accumulate into a ParamSet of the same
// shape, so several loss terms can add into one buffer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cresp/core.hpp"

namespace cresp {

enum class Activation { kIdentity, kRelu, kTanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ParameterError("unknown activation '" + s + "'");
}

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) return {};
    Matrix m(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
    for (int r = 0; r < m.rows; ++r) {
      if (static_cast<int>(rows_in[r].size()) != m.cols)
        throw ParameterError("Matrix::from_rows: ragged rows");
      std::copy(rows_in[r].begin(), rows_in[r].end(), m.row(r));
    }
    return m;
  }
};

struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  Activation act = Activation::kIdentity;

  double& w(int o, int i) { return weight[static_cast<std::size_t>(o) * in + i]; }
  double w(int o, int i) const { return weight[static_cast<std::size_t>(o) * in + i]; }
};

struct ParamSet {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Flat view over all parameters, weights of a layer before its biases.
  double& param(std::size_t idx) {
    for (auto& l : layers) {
      if (idx < l.weight.size()) return l.weight[idx];
      idx -= l.weight.size();
      if (idx < l.bias.size()) return l.bias[idx];
      idx -= l.bias.size();
    }
    throw ParameterError("ParamSet::param: index out of range");
  }
  double param(std::size_t idx) const { return const_cast<ParamSet*>(this)->param(idx); }

  ParamSet zeros_like() const {
    ParamSet z = *this;
    for (auto& l : z.layers) {
      std::fill(l.weight.begin(), l.weight.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return z;
  }

  bool same_shape(const ParamSet& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].in != o.layers[i].in || layers[i].out != o.layers[i].out) return false;
    return true;
  }

  void add_scaled(const ParamSet& o, double scale) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& a = layers[i];
      const auto& b = o.layers[i];
      for (std::size_t k = 0; k < a.weight.size(); ++k) a.weight[k] += scale * b.weight[k];
      for (std::size_t k = 0; k < a.bias.size(); ++k) a.bias[k] += scale * b.bias[k];
    }
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      for (double v : l.weight)
        if (!std::isfinite(v)) return false;
      for (double v : l.bias)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const ParamSet& o) const {
    if (!same_shape(o)) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weight != o.layers[i].weight || layers[i].bias != o.layers[i].bias ||
          layers[i].act != o.layers[i].act)
        return false;
    return true;
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
inline ParamSet init_dense(const std::vector<int>& sizes, const std::vector<Activation>& acts,
                           std::uint64_t seed) {
  if (sizes.size() < 2) throw ParameterError("init_dense: need at least two layer sizes");
  if (acts.size() != sizes.size() - 1)
    throw ParameterError("init_dense: need one activation per layer");
  for (int s : sizes)
    if (s <= 0) throw ParameterError("init_dense: layer sizes must be positive");
  Rng rng = make_rng(seed, 21);
  ParamSet p;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Layer l;
    l.in = sizes[k];
    l.out = sizes[k + 1];
    l.act = acts[k];
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    l.weight.resize(static_cast<std::size_t>(l.in) * l.out);
    for (auto& v : l.weight) v = dist(rng);
    l.bias.assign(l.out, 0.0);
    p.layers.push_back(std::move(l));
  }
  return p;
}

// Convenience: hidden layers share one activation, the output layer has its own.
inline ParamSet init_mlp(const std::vector<int>& sizes, Activation hidden, Activation output,
                         std::uint64_t seed) {
  std::vector<Activation> acts(sizes.size() - 1, hidden);
  acts.back() = output;
  return init_dense(sizes, acts, seed);
}

namespace detail {

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kIdentity: break;
  }
  return x;
}

// Derivative expressed through the activation's output y.
inline double activate_grad(Activation a, double y) {
  switch (a) {
    case Activation::kRelu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kIdentity: break;
  }
  return 1.0;
}

}  // namespace detail

struct ForwardCache {
  std::vector<Matrix> inputs;   // input to each layer
  Matrix output;
};

inline Matrix forward_batch(const ParamSet& p, const Matrix& x, ForwardCache* cache = nullptr) {
  if (p.layers.empty()) throw ParameterError("forward: empty network");
  if (x.cols != p.input_dim()) throw ParameterError("forward: input dimension mismatch");
  if (cache) cache->inputs.clear();
  Matrix cur = x;
  for (const auto& l : p.layers) {
    Matrix next(cur.rows, l.out);
    for (int n = 0; n < cur.rows; ++n) {
      const double* xi = cur.row(n);
      double* yo = next.row(n);
      for (int o = 0; o < l.out; ++o) {
        const double* wrow = l.weight.data() + static_cast<std::size_t>(o) * l.in;
        double acc = l.bias[o];
        for (int i = 0; i < l.in; ++i) acc += wrow[i] * xi[i];
        yo[o] = detail::activate(l.act, acc);
      }
    }
    if (cache) cache->inputs.push_back(std::move(cur));
    cur = std::move(next);
  }
  if (cache) cache->output = cur;
  return cur;
}

inline std::vector<double> forward(const ParamSet& p, std::span<const double> x) {
  Matrix m(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), m.data.begin());
  return forward_batch(p, m).data;
}

// Given dL/d(output), accumulates parameter gradients into `grad` and returns
// dL/d(input).
inline Matrix backward_batch(const ParamSet& p, const ForwardCache& cache, const Matrix& d_out,
                             ParamSet& grad) {
  if (cache.inputs.size() != p.layers.size()) throw ParameterError("backward: stale forward cache");
  if (d_out.rows != cache.output.rows || d_out.cols != cache.output.cols)
    throw ParameterError("backward: gradient shape mismatch");
  Matrix delta = d_out;
  for (int li = static_cast<int>(p.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = p.layers[li];
    Layer& g = grad.layers[li];
    const Matrix& x = cache.inputs[li];
    const Matrix& y = (li + 1 < static_cast<int>(p.layers.size())) ? cache.inputs[li + 1] : cache.output;
    Matrix d_in(x.rows, l.in);
    for (int n = 0; n < x.rows; ++n) {
      const double* xi = x.row(n);
      const double* yo = y.row(n);
      double* dr = delta.row(n);
      double* di = d_in.row(n);
      for (int o = 0; o < l.out; ++o) {
        const double d = dr[o] * detail::activate_grad(l.act, yo[o]);
        if (d == 0.0) continue;
        g.bias[o] += d;
        double* gw = g.weight.data() + static_cast<std::size_t>(o) * l.in;
        const double* wrow = l.weight.data() + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) {
          gw[i] += d * xi[i];
          di[i] += d * wrow[i];
        }
      }
    }
    delta = std::move(d_in);
  }
  return delta;
}

// A loss over one ParamSet: returns the loss and adds dL/dp into the second
// argument (which arrives zeroed).
using LossClosure = std::function<double(const ParamSet&, ParamSet&)>;

inline ParamSet grad(const ParamSet& p, const LossClosure& loss, double* value_out = nullptr) {
  ParamSet g = p.zeros_like();
  const double v = loss(p, g);
  if (!std::isfinite(v)) throw NumericError("grad: loss is not finite");
  if (!g.all_finite()) throw NumericError("grad: gradient is not finite");
  if (value_out) *value_out = v;
  return g;
}

// Mean softmax cross-entropy over rows; writes dL/dlogits when d_logits != nullptr.
inline double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                                    Matrix* d_logits = nullptr) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw ParameterError("softmax_cross_entropy: label count mismatch");
  if (logits.rows == 0) throw ParameterError("softmax_cross_entropy: empty batch");
  if (d_logits) *d_logits = Matrix(logits.rows, logits.cols);
  double total = 0.0;
  const double inv_n = 1.0 / logits.rows;
  std::vector<double> prob(logits.cols);
  for (int n = 0; n < logits.rows; ++n) {
    const double* z = logits.row(n);
    const int y = labels[n];
    if (y < 0 || y >= logits.cols) throw ParameterError("softmax_cross_entropy: label out of range");
    double zmax = *std::max_element(z, z + logits.cols);
    double sum = 0.0;
    for (int c = 0; c < logits.cols; ++c) {
      prob[c] = std::exp(z[c] - zmax);
      sum += prob[c];
    }
    total += std::log(sum) + zmax - z[y];
    if (d_logits) {
      double* d = d_logits->row(n);
      for (int c = 0; c < logits.cols; ++c) d[c] = prob[c] / sum * inv_n;
      d[y] -= inv_n;
    }
  }
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Adam

struct OptState {
  ParamSet m;
  ParamSet v;
  std::int64_t step = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptState for_params(const ParamSet& p, double lr = 5e-4) {
    OptState st;
    st.m = p.zeros_like();
    st.v = p.zeros_like();
    st.lr = lr;
    return st;
  }
};

inline void adam_update(ParamSet& p, const ParamSet& g, OptState& st) {
  if (!p.same_shape(g) || !p.same_shape(st.m) || !p.same_shape(st.v))
    throw ParameterError("adam_step: shape mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  auto update = [&](std::vector<double>& w, const std::vector<double>& gw, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * gw[k];
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * gw[k] * gw[k];
      w[k] -= st.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + st.eps);
    }
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    update(p.layers[i].weight, g.layers[i].weight, st.m.layers[i].weight, st.v.layers[i].weight);
    update(p.layers[i].bias, g.layers[i].bias, st.m.layers[i].bias, st.v.layers[i].bias);
  }
}

inline std::pair<ParamSet, OptState> adam_step(ParamSet p, const ParamSet& g, OptState st) {
  adam_update(p, g, st);
  return {std::move(p), std::move(st)};
}

// ---------------------------------------------------------------------------
// JSON snapshots: weights as nested [out][in] arrays.

inline nlohmann::json params_to_json(const ParamSet& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers) {
    std::vector<std::vector<double>> w(l.out, std::vector<double>(l.in));
    for (int o = 0; o < l.out; ++o)
      for (int i = 0; i < l.in; ++i) w[o][i] = l.w(o, i);
    layers.push_back({{"activation", to_string(l.act)}, {"weight", w}, {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

inline ParamSet params_from_json(const nlohmann::json& j) {
  ParamSet p;
  try {
    for (const auto& jl : j.at("layers")) {
      Layer l;
      l.act = activation_from_string(jl.at("activation").get<std::string>());
      auto w = jl.at("weight").get<std::vector<std::vector<double>>>();
      l.bias = jl.at("bias").get<std::vector<double>>();
      l.out = static_cast<int>(w.size());
      l.in = l.out > 0 ? static_cast<int>(w[0].size()) : 0;
      if (static_cast<int>(l.bias.size()) != l.out) throw ParameterError("params JSON: bias size mismatch");
      for (const auto& row : w) {
        if (static_cast<int>(row.size()) != l.in) throw ParameterError("params JSON: ragged weight");
        l.weight.insert(l.weight.end(), row.begin(), row.end());
      }
      if (!p.layers.empty() && p.layers.back().out != l.in)
        throw ParameterError("params JSON: layer dimensions do not chain");
      p.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("params JSON: ") + e.what());
  }
  return p;
}

}  // namespace cresp
