#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "varsnn/rng.hpp"
#include "varsnn/tape.hpp"
#include "varsnn/tensor.hpp"

namespace varsnn::nn {

// Glorot-style uniform init, bound sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_fill(Tensor<T>& w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
struct DenseLayer {
  Tensor<T> w;  // [in x out]
  Tensor<T> b;  // [out]
  Act act = Act::Linear;

  void init(int in, int out, Act activation, Rng& rng) {
    w = Tensor<T>({in, out});
    b = Tensor<T>({out});
    act = activation;
    glorot_fill(w, in, out, rng);
  }

  int out_size() const { return w.dim(1); }

  typename Tape<T>::NodeId forward(Tape<T>& tape, typename Tape<T>::NodeId x) const {
    auto z = tape.add_row_bias(tape.matmul(x, tape.borrow(w)), tape.borrow(b));
    return act == Act::Linear ? z : tape.activation(z, act);
  }
};

template <typename T>
struct ConvLayer {
  Tensor<T> k;  // [kh x kw x C x F]
  Tensor<T> b;  // [F]

  void init(int kh, int kw, int in_ch, int out_ch, Rng& rng) {
    k = Tensor<T>({kh, kw, in_ch, out_ch});
    b = Tensor<T>({out_ch});
    glorot_fill(k, kh * kw * in_ch, kh * kw * out_ch, rng);
  }

  typename Tape<T>::NodeId forward(Tape<T>& tape, typename Tape<T>::NodeId x) const {
    return tape.conv2d_bias_relu(x, tape.borrow(k), tape.borrow(b), 1);
  }
};

// Standard LSTM cell, no biases anywhere in the layer. Gate blocks are packed
// as [input | forget | cell candidate | output] along the columns of both
// weight matrices; each gate block is initialized with its own fan pair.
// Gates are sigmoid, cell candidate and hidden activation tanh.
template <typename T>
struct LstmLayer {
  Tensor<T> wx;  // [in x 4H]
  Tensor<T> wh;  // [H x 4H]
  int input_size = 0;
  int hidden = 0;

  void init(int in, int h, Rng& rng) {
    input_size = in;
    hidden = h;
    wx = Tensor<T>({in, 4 * h});
    wh = Tensor<T>({h, 4 * h});
    const double lim_x = std::sqrt(6.0 / (in + h));
    const double lim_h = std::sqrt(6.0 / (h + h));
    for (int64_t i = 0; i < wx.size(); ++i) wx[i] = static_cast<T>(rng.uniform(-lim_x, lim_x));
    for (int64_t i = 0; i < wh.size(); ++i) wh[i] = static_cast<T>(rng.uniform(-lim_h, lim_h));
  }
};

// Runs the recurrence over a batched step sequence (each step [B x in]) and
// returns the hidden state after every step. State starts at zeros; nothing
// carries over between calls.
template <typename T>
std::vector<typename Tape<T>::NodeId> lstm_forward(Tape<T>& tape, const LstmLayer<T>& layer,
                                                   const std::vector<typename Tape<T>::NodeId>& steps) {
  using NodeId = typename Tape<T>::NodeId;
  if (steps.empty()) throw std::invalid_argument("lstm_forward: empty sequence");
  const int B = tape.value(steps[0]).dim(0);
  for (NodeId s : steps) {
    const Tensor<T>& v = tape.value(s);
    if (v.rank() != 2 || v.dim(1) != layer.input_size || v.dim(0) != B) {
      throw std::invalid_argument("lstm_forward: step shape " + shape_str(v.shape()) +
                                  " does not match input size " + std::to_string(layer.input_size));
    }
  }
  const int H = layer.hidden;
  NodeId wx = tape.borrow(layer.wx);
  NodeId wh = tape.borrow(layer.wh);
  NodeId h = tape.constant(Tensor<T>({B, H}));
  NodeId c = tape.constant(Tensor<T>({B, H}));
  std::vector<NodeId> hidden_states;
  hidden_states.reserve(steps.size());
  for (NodeId x : steps) {
    NodeId gates = tape.add(tape.matmul(x, wx), tape.matmul(h, wh));
    NodeId in_gate = tape.activation(tape.slice_cols(gates, 0, H), Act::Sigmoid);
    NodeId forget_gate = tape.activation(tape.slice_cols(gates, H, 2 * H), Act::Sigmoid);
    NodeId candidate = tape.activation(tape.slice_cols(gates, 2 * H, 3 * H), Act::Tanh);
    NodeId out_gate = tape.activation(tape.slice_cols(gates, 3 * H, 4 * H), Act::Sigmoid);
    c = tape.add(tape.hadamard(forget_gate, c), tape.hadamard(in_gate, candidate));
    h = tape.hadamard(out_gate, tape.activation(c, Act::Tanh));
    hidden_states.push_back(h);
  }
  return hidden_states;
}

template <typename T>
struct Heads {
  typename Tape<T>::NodeId main_logits;
  std::optional<typename Tape<T>::NodeId> vars_logits;
};

// Recall model: LSTM over the 4 trial steps, then a dense layer with bias
// from the final hidden state into a 10-way head (and a 48-unit head in the
// VARS condition). The heads' pre-activations are linear by default;
// tanh_dense squashes them with tanh before softmax/sigmoid are applied
// downstream.
struct Sim1Config {
  bool with_vars = false;
  int hidden = 200;
  bool tanh_dense = false;
};

template <typename T>
struct Sim1Model {
  Sim1Config cfg;
  LstmLayer<T> lstm;
  DenseLayer<T> main_head;
  std::optional<DenseLayer<T>> vars_head;

  void init(const Sim1Config& c, Rng& rng) {
    cfg = c;
    lstm.init(c.with_vars ? 17 : 14, c.hidden, rng);
    main_head.init(c.hidden, 10, Act::Linear, rng);
    if (c.with_vars) {
      vars_head.emplace();
      vars_head->init(c.hidden, 48, Act::Linear, rng);
    }
  }

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> p = {&lstm.wx, &lstm.wh, &main_head.w, &main_head.b};
    if (vars_head) {
      p.push_back(&vars_head->w);
      p.push_back(&vars_head->b);
    }
    return p;
  }

  // steps: exactly 4 input nodes of [B x input_width]. Heads read the
  // step-4 hidden state only.
  Heads<T> forward(Tape<T>& tape, const std::vector<typename Tape<T>::NodeId>& steps) const {
    if (steps.size() != 4) {
      throw std::logic_error("Sim1Model: expected 4 steps, got " + std::to_string(steps.size()));
    }
    auto hs = lstm_forward(tape, lstm, steps);
    auto last = hs.back();
    Heads<T> out{main_head.forward(tape, last), std::nullopt};
    if (cfg.tanh_dense) out.main_logits = tape.activation(out.main_logits, Act::Tanh);
    if (vars_head) {
      auto v = vars_head->forward(tape, last);
      if (cfg.tanh_dense) v = tape.activation(v, Act::Tanh);
      out.vars_logits = v;
    }
    return out;
  }
};

// Odd-one-out model: three conv/pool blocks, two fully connected relu layers,
// then a 3-way head (and a 48-unit head with a 4-unit token input in the
// VARS conditions). Input images are 48x48x3; the feature map chain is
// 48 -> 46 -> 23 -> 21 -> 10 -> 8 -> 4.
struct Sim2Config {
  bool with_vars = false;
  int channels[3] = {16, 32, 64};
  int fc1 = 256;
  int fc2 = 128;
};

template <typename T>
struct Sim2Model {
  Sim2Config cfg;
  ConvLayer<T> conv1, conv2, conv3;
  DenseLayer<T> fc1, fc2;
  DenseLayer<T> main_head;
  std::optional<DenseLayer<T>> vars_head;

  static constexpr int kFlatSide = 4;

  void init(const Sim2Config& c, Rng& rng) {
    cfg = c;
    conv1.init(3, 3, 3, c.channels[0], rng);
    conv2.init(3, 3, c.channels[0], c.channels[1], rng);
    conv3.init(3, 3, c.channels[1], c.channels[2], rng);
    const int flat = kFlatSide * kFlatSide * c.channels[2];
    fc1.init(flat + (c.with_vars ? 4 : 0), c.fc1, Act::Relu, rng);
    fc2.init(c.fc1, c.fc2, Act::Relu, rng);
    main_head.init(c.fc2, 3, Act::Linear, rng);
    if (c.with_vars) {
      vars_head.emplace();
      vars_head->init(c.fc2, 48, Act::Linear, rng);
    }
  }

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> p = {&conv1.k, &conv1.b, &conv2.k,     &conv2.b,     &conv3.k,
                                 &conv3.b, &fc1.w,   &fc1.b,       &fc2.w,       &fc2.b,
                                 &main_head.w,       &main_head.b};
    if (vars_head) {
      p.push_back(&vars_head->w);
      p.push_back(&vars_head->b);
    }
    return p;
  }

  // images: [N x 48 x 48 x 3]; tokens: [N x 4] in the VARS conditions,
  // concatenated onto the flattened conv features before fc1.
  Heads<T> forward(Tape<T>& tape, typename Tape<T>::NodeId images,
                   std::optional<typename Tape<T>::NodeId> tokens = std::nullopt) const {
    const Tensor<T>& img = tape.value(images);
    if (img.rank() != 4 || img.dim(1) != 48 || img.dim(2) != 48 || img.dim(3) != 3) {
      throw std::invalid_argument("Sim2Model: expected [N x 48 x 48 x 3] images, got " +
                                  shape_str(img.shape()));
    }
    if (cfg.with_vars && !tokens) {
      throw std::logic_error("Sim2Model: token input required in the VARS condition");
    }
    const int N = img.dim(0);
    auto x = tape.maxpool2d(conv1.forward(tape, images));
    x = tape.maxpool2d(conv2.forward(tape, x));
    x = tape.maxpool2d(conv3.forward(tape, x));
    x = tape.reshape(x, {N, kFlatSide * kFlatSide * cfg.channels[2]});
    if (tokens) x = tape.concat_cols(x, *tokens);
    x = fc2.forward(tape, fc1.forward(tape, x));
    Heads<T> out{main_head.forward(tape, x), std::nullopt};
    if (vars_head) out.vars_logits = vars_head->forward(tape, x);
    return out;
  }
};

// ---- losses on produced outputs (evaluation-side; training uses the fused
// tape ops which compute the same quantities from logits) ----

// -sum_i t_i log p_i with p clamped away from zero.
template <typename T>
double categorical_cross_entropy(const Tensor<T>& probs, const Tensor<T>& target) {
  if (!probs.same_shape(target)) {
    throw std::invalid_argument("categorical_cross_entropy: shape mismatch");
  }
  double sum = 0, loss = 0;
  for (int64_t i = 0; i < target.size(); ++i) {
    const double t = static_cast<double>(target[i]);
    if (t < 0) throw std::invalid_argument("categorical_cross_entropy: negative target");
    sum += t;
    if (t > 0) loss -= t * std::log(std::max(static_cast<double>(probs[i]), 1e-12));
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("categorical_cross_entropy: target is not a distribution");
  }
  return loss;
}

// Elementwise binary cross-entropy summed over units; targets must be 0/1.
template <typename T>
double binary_cross_entropy_sum(const Tensor<T>& probs, const Tensor<T>& target) {
  if (!probs.same_shape(target)) {
    throw std::invalid_argument("binary_cross_entropy_sum: shape mismatch");
  }
  double loss = 0;
  for (int64_t i = 0; i < target.size(); ++i) {
    const double t = static_cast<double>(target[i]);
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("binary_cross_entropy_sum: target is not binary");
    }
    const double p = std::min(std::max(static_cast<double>(probs[i]), 1e-12), 1.0 - 1e-12);
    loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return loss;
}

// Sum of the main-task and (when present) VARS-task errors for one example.
template <typename T>
double combined_loss(const Tensor<T>& main_out, const Tensor<T>& main_target,
                     const Tensor<T>* vars_out = nullptr, const Tensor<T>* vars_target = nullptr) {
  if ((vars_out == nullptr) != (vars_target == nullptr)) {
    throw std::invalid_argument("combined_loss: VARS output and target must come together");
  }
  double loss = categorical_cross_entropy(main_out, main_target);
  if (vars_out) loss += binary_cross_entropy_sum(*vars_out, *vars_target);
  return loss;
}

// ---- optimizers ----

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(1e-3);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
struct AdamState {
  AdamConfig<T> cfg;
  int64_t step = 0;
  std::vector<Tensor<T>> m, v;

  void init(const std::vector<Tensor<T>*>& params, AdamConfig<T> c = {}) {
    cfg = c;
    step = 0;
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
  }
};

template <typename T>
void adam_step(AdamState<T>& state, const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads) {
  if (params.size() != state.m.size() || grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(static_cast<double>(state.cfg.beta1), static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(static_cast<double>(state.cfg.beta2), static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    const T b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    for (int64_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      p[j] -= static_cast<T>(static_cast<double>(state.cfg.lr) * mhat /
                             (std::sqrt(vhat) + static_cast<double>(state.cfg.eps)));
    }
  }
}

template <typename T>
struct RmspropConfig {
  T lr = static_cast<T>(1e-4);
  T rho = static_cast<T>(0.9);
  T eps = static_cast<T>(1e-8);
};

template <typename T>
struct RmspropState {
  RmspropConfig<T> cfg;
  int64_t step = 0;
  std::vector<Tensor<T>> v;

  void init(const std::vector<Tensor<T>*>& params, RmspropConfig<T> c = {}) {
    cfg = c;
    step = 0;
    v.clear();
    for (auto* p : params) v.emplace_back(p->shape());
  }
};

template <typename T>
void rmsprop_step(RmspropState<T>& state, const std::vector<Tensor<T>*>& params,
                  const std::vector<const Tensor<T>*>& grads) {
  if (params.size() != state.v.size() || grads.size() != params.size()) {
    throw std::invalid_argument("rmsprop_step: parameter/gradient count mismatch");
  }
  ++state.step;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(state.v[i])) {
      throw std::invalid_argument("rmsprop_step: shape mismatch at parameter " + std::to_string(i));
    }
    Tensor<T>& v = state.v[i];
    const T rho = state.cfg.rho;
    for (int64_t j = 0; j < p.size(); ++j) {
      v[j] = rho * v[j] + (T(1) - rho) * g[j] * g[j];
      p[j] -= state.cfg.lr * g[j] / (std::sqrt(v[j]) + state.cfg.eps);
    }
  }
}

}  // namespace varsnn::nn
