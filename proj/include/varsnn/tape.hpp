#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "varsnn/conv_direct.hpp"
#include "varsnn/fastmath.hpp"
#include "varsnn/gemm.hpp"
#include "varsnn/tensor.hpp"

namespace varsnn {

enum class Act { Tanh, Relu, Sigmoid, Linear };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::Tanh: return "tanh";
    case Act::Relu: return "relu";
    case Act::Sigmoid: return "sigmoid";
    case Act::Linear: return "linear";
  }
  return "?";
}

namespace detail {

template <typename T>
inline T sigmoid_scalar(T x) {
  return scalar_sigmoid(x);
}

}  // namespace detail

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// the same list in exact reverse order, accumulating gradients. A tape lives
// for one forward/backward pass and is single-threaded; independent tapes on
// independent threads do not share state.
//
// Leaves come in two flavours: constant() (no gradient) and param()/borrow()
// (gradient tracked). borrow() keeps only a pointer; the caller guarantees
// the tensor outlives the tape, which holds for model parameters living
// across the per-batch tape.
template <typename T>
class Tape {
 public:
  using NodeId = int32_t;

  NodeId constant(Tensor<T> v) { return push(std::move(v), nullptr, false, nullptr); }

  NodeId param(Tensor<T> v) { return push(std::move(v), nullptr, true, nullptr); }

  // Borrowing the same tensor again returns the existing node, so gradients
  // from every use accumulate in one place and callers can look a node up by
  // the tensor's identity after a forward pass.
  NodeId borrow(const Tensor<T>& v, bool requires_grad = true) {
    auto it = borrowed_.find(&v);
    if (it != borrowed_.end()) {
      if (node(it->second).tracked != requires_grad) {
        throw std::logic_error("Tape::borrow: tensor borrowed twice with different grad tracking");
      }
      return it->second;
    }
    NodeId id = push(Tensor<T>(), &v, requires_grad, nullptr);
    borrowed_.emplace(&v, id);
    return id;
  }

  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  const Tensor<T>& value(NodeId id) const {
    const Node& n = node(id);
    return n.view ? *n.view : n.owned;
  }

  bool requires_grad(NodeId id) const { return node(id).tracked; }

  // Gradient of the last backward() w.r.t. node `id`. Zero for tracked nodes
  // the loss does not depend on.
  const Tensor<T>& grad(NodeId id) {
    Node& n = node(id);
    if (!n.tracked) throw std::logic_error("Tape::grad: node does not track gradients");
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  // ---- ops ----

  // Strict 2-d matrix product.
  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
      throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape()) + " and " +
                                  shape_str(B.shape()));
    }
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    detail::gemm_nn(m, n, k, A.data(), B.data(), out.data(), false);
    NodeId id = push_op(std::move(out), {a, b});
    if (node(id).tracked) {
      node(id).back = [this, id, a, b, m, n, k]() {
        const T* g = grad_ref(id).data();
        if (requires_grad(a)) {
          bool fresh;
          Tensor<T>& ga = grad_sink(a, fresh);
          detail::gemm_nt(m, k, n, g, value(b).data(), ga.data(), !fresh);
        }
        if (requires_grad(b)) {
          bool fresh;
          Tensor<T>& gb = grad_sink(b, fresh);
          detail::gemm_tn(k, n, m, value(a).data(), g, gb.data(), !fresh);
        }
      };
    }
    return id;
  }

  // Valid-padding 2-d convolution over NHWC (or HWC) input with kernels
  // [kh x kw x C x F], implemented as im2col + matmul. The column matrix is
  // kept for the backward pass.
  NodeId conv2d(NodeId input, NodeId kernels, int stride = 1) {
    const Tensor<T>& x = value(input);
    const Tensor<T>& k = value(kernels);
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if ((x.rank() != 3 && x.rank() != 4) || k.rank() != 4) {
      throw std::invalid_argument("conv2d: expected NHWC/HWC input and [kh,kw,C,F] kernels, got " +
                                  shape_str(x.shape()) + " and " + shape_str(k.shape()));
    }
    const bool batched = x.rank() == 4;
    const int N = batched ? x.dim(0) : 1;
    const int H = x.dim(batched ? 1 : 0), W = x.dim(batched ? 2 : 1), C = x.dim(batched ? 3 : 2);
    const int kh = k.dim(0), kw = k.dim(1), kc = k.dim(2), F = k.dim(3);
    if (kc != C || kh > H || kw > W) {
      throw std::invalid_argument("conv2d: kernel " + shape_str(k.shape()) +
                                  " does not fit input " + shape_str(x.shape()));
    }
    const int Ho = (H - kh) / stride + 1;
    const int Wo = (W - kw) / stride + 1;
    const int64_t rows = static_cast<int64_t>(N) * Ho * Wo;
    const int cols = kh * kw * C;

    auto col = std::make_shared<Tensor<T>>(Shape{static_cast<int>(rows), cols});
    im2col(x.data(), N, H, W, C, kh, kw, stride, Ho, Wo, col->data());
    Tensor<T> out(batched ? Shape{N, Ho, Wo, F} : Shape{Ho, Wo, F});
    detail::gemm_nn(static_cast<int>(rows), F, cols, col->data(), k.data(), out.data(), false);

    NodeId id = push_op(std::move(out), {input, kernels});
    if (node(id).tracked) {
      node(id).back = [this, id, input, kernels, col, N, H, W, C, kh, kw, stride, Ho, Wo, F,
                       rows, cols]() {
        const T* g = grad_ref(id).data();
        if (requires_grad(kernels)) {
          bool fresh;
          Tensor<T>& gk = grad_sink(kernels, fresh);
          detail::gemm_tn(cols, F, static_cast<int>(rows), col->data(), g, gk.data(), !fresh);
        }
        if (requires_grad(input)) {
          Tensor<T> gcol({static_cast<int>(rows), cols});
          detail::gemm_nt(static_cast<int>(rows), cols, F, g, value(kernels).data(), gcol.data(),
                          false);
          bool fresh;
          Tensor<T>& gx = grad_sink(input, fresh);
          if (fresh) gx.fill(T(0));
          col2im_add(gcol.data(), N, H, W, C, kh, kw, stride, Ho, Wo, gx.data());
        }
      };
    }
    return id;
  }

  // conv2d + channel bias + relu in one node. Equivalent to composing the
  // three ops but skips materializing the two intermediate feature maps and
  // their gradient buffers, which dominate memory traffic on large maps.
  NodeId conv2d_bias_relu(NodeId input, NodeId kernels, NodeId bias, int stride = 1) {
    const Tensor<T>& x = value(input);
    const Tensor<T>& k = value(kernels);
    const Tensor<T>& bv = value(bias);
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if ((x.rank() != 3 && x.rank() != 4) || k.rank() != 4 || bv.rank() != 1 ||
        bv.dim(0) != k.dim(3)) {
      throw std::invalid_argument("conv2d_bias_relu: shapes " + shape_str(x.shape()) + ", " +
                                  shape_str(k.shape()) + ", " + shape_str(bv.shape()));
    }
    const bool batched = x.rank() == 4;
    const int N = batched ? x.dim(0) : 1;
    const int H = x.dim(batched ? 1 : 0), W = x.dim(batched ? 2 : 1), C = x.dim(batched ? 3 : 2);
    const int kh = k.dim(0), kw = k.dim(1), kc = k.dim(2), F = k.dim(3);
    if (kc != C || kh > H || kw > W) {
      throw std::invalid_argument("conv2d_bias_relu: kernel " + shape_str(k.shape()) +
                                  " does not fit input " + shape_str(x.shape()));
    }
    const int Ho = (H - kh) / stride + 1;
    const int Wo = (W - kw) / stride + 1;
    const int64_t rows = static_cast<int64_t>(N) * Ho * Wo;

    Tensor<T> out(batched ? Shape{N, Ho, Wo, F} : Shape{Ho, Wo, F});
    detail::conv_fwd_bias_relu(x.data(), N, H, W, C, k.data(), kh, kw, F, stride, bv.data(),
                               out.data(), Ho, Wo);

    NodeId id = push_op(std::move(out), {input, kernels, bias});
    if (node(id).tracked) {
      node(id).back = [this, id, input, kernels, bias, N, H, W, C, kh, kw, stride, Ho, Wo, F,
                       rows]() {
        const Tensor<T>& g = grad_ref(id);
        const Tensor<T>& y = value(id);
        // dz = g masked by the relu gate
        Tensor<T> dz({static_cast<int>(rows), F});
        for (int64_t i = 0; i < dz.size(); ++i) dz[i] = y[i] > T(0) ? g[i] : T(0);
        if (requires_grad(bias)) {
          bool fresh;
          Tensor<T>& gb = grad_sink(bias, fresh);
          if (fresh) gb.fill(T(0));
          const T* p = dz.data();
          for (int64_t r = 0; r < rows; ++r, p += F) {
            for (int i = 0; i < F; ++i) gb[i] += p[i];
          }
        }
        if (requires_grad(kernels)) {
          bool fresh;
          Tensor<T>& gk = grad_sink(kernels, fresh);
          if (fresh) gk.fill(T(0));
          detail::conv_grad_kernels(value(input).data(), N, H, W, C, dz.data(), kh, kw, F, stride,
                                    gk.data(), Ho, Wo);
        }
        if (requires_grad(input)) {
          bool fresh;
          Tensor<T>& gx = grad_sink(input, fresh);
          if (fresh) gx.fill(T(0));
          detail::conv_grad_input(gx.data(), N, H, W, C, value(kernels).data(), kh, kw, F, stride,
                                  dz.data(), Ho, Wo);
        }
      };
    }
    return id;
  }

  // 2x2 max pooling, stride 2, over NHWC (or HWC). Gradient flows to the
  // argmax element only; on ties the first element in row-major window order
  // wins.
  NodeId maxpool2d(NodeId input) {
    const Tensor<T>& x = value(input);
    if (x.rank() != 3 && x.rank() != 4) {
      throw std::invalid_argument("maxpool2d: expected NHWC/HWC input, got " + shape_str(x.shape()));
    }
    const bool batched = x.rank() == 4;
    const int N = batched ? x.dim(0) : 1;
    const int H = x.dim(batched ? 1 : 0), W = x.dim(batched ? 2 : 1), C = x.dim(batched ? 3 : 2);
    if (H < 2 || W < 2) {
      throw std::invalid_argument("maxpool2d: input " + shape_str(x.shape()) + " smaller than window");
    }
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out(batched ? Shape{N, Ho, Wo, C} : Shape{Ho, Wo, C});
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    const T* in = x.data();
    T* o = out.data();
    int64_t oi = 0;
    for (int n = 0; n < N; ++n) {
      const int64_t base = static_cast<int64_t>(n) * H * W * C;
      for (int y = 0; y < Ho; ++y) {
        for (int xw = 0; xw < Wo; ++xw) {
          for (int c = 0; c < C; ++c) {
            int64_t best = base + ((2 * y) * static_cast<int64_t>(W) + 2 * xw) * C + c;
            T bv = in[best];
            const int64_t cand[3] = {
                base + ((2 * y) * static_cast<int64_t>(W) + 2 * xw + 1) * C + c,
                base + ((2 * y + 1) * static_cast<int64_t>(W) + 2 * xw) * C + c,
                base + ((2 * y + 1) * static_cast<int64_t>(W) + 2 * xw + 1) * C + c};
            for (int64_t idx : cand) {
              if (in[idx] > bv) {
                bv = in[idx];
                best = idx;
              }
            }
            o[oi] = bv;
            (*argmax)[static_cast<size_t>(oi)] = best;
            ++oi;
          }
        }
      }
    }
    NodeId id = push_op(std::move(out), {input});
    if (node(id).tracked) {
      node(id).back = [this, id, input, argmax]() {
        const Tensor<T>& g = grad_ref(id);
        bool fresh;
        Tensor<T>& gx = grad_sink(input, fresh);
        if (fresh) gx.fill(T(0));
        for (int64_t i = 0; i < g.size(); ++i) gx[(*argmax)[static_cast<size_t>(i)]] += g[i];
      };
    }
    return id;
  }

  NodeId activation(NodeId input, Act kind) {
    const Tensor<T>& x = value(input);
    Tensor<T> out(x.shape());
    const T* in = x.data();
    T* o = out.data();
    const int64_t n = x.size();
    switch (kind) {
      case Act::Tanh:
        for (int64_t i = 0; i < n; ++i) o[i] = detail::scalar_tanh(in[i]);
        break;
      case Act::Relu:
        for (int64_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
        break;
      case Act::Sigmoid:
        for (int64_t i = 0; i < n; ++i) o[i] = detail::sigmoid_scalar(in[i]);
        break;
      case Act::Linear:
        for (int64_t i = 0; i < n; ++i) o[i] = in[i];
        break;
    }
    NodeId id = push_op(std::move(out), {input});
    if (node(id).tracked) {
      node(id).back = [this, id, input, kind]() {
        const Tensor<T>& g = grad_ref(id);
        const Tensor<T>& y = value(id);
        bool fresh;
        Tensor<T>& gx = grad_sink(input, fresh);
        const int64_t m = g.size();
        switch (kind) {
          case Act::Tanh:
            for (int64_t i = 0; i < m; ++i) gx[i] = acc(fresh, gx[i], g[i] * (T(1) - y[i] * y[i]));
            break;
          case Act::Relu:
            for (int64_t i = 0; i < m; ++i) gx[i] = acc(fresh, gx[i], y[i] > T(0) ? g[i] : T(0));
            break;
          case Act::Sigmoid:
            for (int64_t i = 0; i < m; ++i) gx[i] = acc(fresh, gx[i], g[i] * y[i] * (T(1) - y[i]));
            break;
          case Act::Linear:
            for (int64_t i = 0; i < m; ++i) gx[i] = acc(fresh, gx[i], g[i]);
            break;
        }
      };
    }
    return id;
  }

  // Row-wise softmax over the last dimension, stabilized by subtracting the
  // row max.
  NodeId softmax(NodeId input) {
    const Tensor<T>& x = value(input);
    if (x.rank() < 1) throw std::invalid_argument("softmax: rank-0 input");
    const int n = x.dim(x.rank() - 1);
    const int64_t rows = x.size() / n;
    Tensor<T> out(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
      const T* in = x.data() + r * n;
      T* o = out.data() + r * n;
      T mx = in[0];
      for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
      double sum = 0;
      for (int i = 0; i < n; ++i) {
        o[i] = detail::scalar_exp(in[i] - mx);
        sum += static_cast<double>(o[i]);
      }
      const T inv = static_cast<T>(1.0 / sum);
      for (int i = 0; i < n; ++i) o[i] *= inv;
    }
    NodeId id = push_op(std::move(out), {input});
    if (node(id).tracked) {
      node(id).back = [this, id, input, n, rows]() {
        const Tensor<T>& g = grad_ref(id);
        const Tensor<T>& y = value(id);
        bool fresh;
        Tensor<T>& gx = grad_sink(input, fresh);
        for (int64_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * n;
          const T* yr = y.data() + r * n;
          double dot = 0;
          for (int i = 0; i < n; ++i) dot += static_cast<double>(gr[i]) * yr[i];
          for (int i = 0; i < n; ++i) {
            gx[r * n + i] = acc(fresh, gx[r * n + i], yr[i] * (gr[i] - static_cast<T>(dot)));
          }
        }
      };
    }
    return id;
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (!A.same_shape(B)) {
      throw std::invalid_argument("add: shape mismatch " + shape_str(A.shape()) + " vs " +
                                  shape_str(B.shape()));
    }
    Tensor<T> out(A.shape());
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    NodeId id = push_op(std::move(out), {a, b});
    if (node(id).tracked) {
      node(id).back = [this, id, a, b]() {
        const Tensor<T>& g = grad_ref(id);
        for (NodeId src : {a, b}) {
          if (!requires_grad(src)) continue;
          bool fresh;
          Tensor<T>& gs = grad_sink(src, fresh);
          for (int64_t i = 0; i < g.size(); ++i) gs[i] = acc(fresh, gs[i], g[i]);
        }
      };
    }
    return id;
  }

  NodeId hadamard(NodeId a, NodeId b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B = value(b);
    if (!A.same_shape(B)) {
      throw std::invalid_argument("hadamard: shape mismatch " + shape_str(A.shape()) + " vs " +
                                  shape_str(B.shape()));
    }
    Tensor<T> out(A.shape());
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    NodeId id = push_op(std::move(out), {a, b});
    if (node(id).tracked) {
      node(id).back = [this, id, a, b]() {
        const Tensor<T>& g = grad_ref(id);
        if (requires_grad(a)) {
          const Tensor<T>& B2 = value(b);
          bool fresh;
          Tensor<T>& ga = grad_sink(a, fresh);
          for (int64_t i = 0; i < g.size(); ++i) ga[i] = acc(fresh, ga[i], g[i] * B2[i]);
        }
        if (requires_grad(b)) {
          const Tensor<T>& A2 = value(a);
          bool fresh;
          Tensor<T>& gb = grad_sink(b, fresh);
          for (int64_t i = 0; i < g.size(); ++i) gb[i] = acc(fresh, gb[i], g[i] * A2[i]);
        }
      };
    }
    return id;
  }

  // x: [B x n], bias: [n], broadcast over rows.
  NodeId add_row_bias(NodeId x, NodeId bias) {
    const Tensor<T>& X = value(x);
    const Tensor<T>& Bb = value(bias);
    if (X.rank() != 2 || Bb.rank() != 1 || Bb.dim(0) != X.dim(1)) {
      throw std::invalid_argument("add_row_bias: shapes " + shape_str(X.shape()) + " and " +
                                  shape_str(Bb.shape()));
    }
    const int B = X.dim(0), n = X.dim(1);
    Tensor<T> out(X.shape());
    for (int r = 0; r < B; ++r) {
      for (int i = 0; i < n; ++i) out[static_cast<int64_t>(r) * n + i] = X[static_cast<int64_t>(r) * n + i] + Bb[i];
    }
    NodeId id = push_op(std::move(out), {x, bias});
    if (node(id).tracked) {
      node(id).back = [this, id, x, bias, B, n]() {
        const Tensor<T>& g = grad_ref(id);
        if (requires_grad(x)) {
          bool fresh;
          Tensor<T>& gx = grad_sink(x, fresh);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] = acc(fresh, gx[i], g[i]);
        }
        if (requires_grad(bias)) {
          bool fresh;
          Tensor<T>& gb = grad_sink(bias, fresh);
          if (fresh) gb.fill(T(0));
          for (int r = 0; r < B; ++r) {
            for (int i = 0; i < n; ++i) gb[i] += g[static_cast<int64_t>(r) * n + i];
          }
        }
      };
    }
    return id;
  }

  // x: [... x F], bias: [F], broadcast over all leading dims (conv bias).
  NodeId add_channel_bias(NodeId x, NodeId bias) {
    const Tensor<T>& X = value(x);
    const Tensor<T>& Bb = value(bias);
    if (Bb.rank() != 1 || X.rank() < 1 || X.dim(X.rank() - 1) != Bb.dim(0)) {
      throw std::invalid_argument("add_channel_bias: shapes " + shape_str(X.shape()) + " and " +
                                  shape_str(Bb.shape()));
    }
    const int F = Bb.dim(0);
    const int64_t rows = X.size() / F;
    Tensor<T> out(X.shape());
    for (int64_t r = 0; r < rows; ++r) {
      for (int i = 0; i < F; ++i) out[r * F + i] = X[r * F + i] + Bb[i];
    }
    NodeId id = push_op(std::move(out), {x, bias});
    if (node(id).tracked) {
      node(id).back = [this, id, x, bias, F, rows]() {
        const Tensor<T>& g = grad_ref(id);
        if (requires_grad(x)) {
          bool fresh;
          Tensor<T>& gx = grad_sink(x, fresh);
          for (int64_t i = 0; i < g.size(); ++i) gx[i] = acc(fresh, gx[i], g[i]);
        }
        if (requires_grad(bias)) {
          bool fresh;
          Tensor<T>& gb = grad_sink(bias, fresh);
          if (fresh) gb.fill(T(0));
          for (int64_t r = 0; r < rows; ++r) {
            for (int i = 0; i < F; ++i) gb[i] += g[r * F + i];
          }
        }
      };
    }
    return id;
  }

  // Column-range view [lo, hi) of a [B x n] matrix, as a copy.
  NodeId slice_cols(NodeId x, int lo, int hi) {
    const Tensor<T>& X = value(x);
    if (X.rank() != 2 || lo < 0 || hi > X.dim(1) || lo >= hi) {
      throw std::invalid_argument("slice_cols: [" + std::to_string(lo) + "," + std::to_string(hi) +
                                  ") of " + shape_str(X.shape()));
    }
    const int B = X.dim(0), n = X.dim(1), w = hi - lo;
    Tensor<T> out({B, w});
    for (int r = 0; r < B; ++r) {
      const T* src = X.data() + static_cast<int64_t>(r) * n + lo;
      std::copy(src, src + w, out.data() + static_cast<int64_t>(r) * w);
    }
    NodeId id = push_op(std::move(out), {x});
    if (node(id).tracked) {
      node(id).back = [this, id, x, lo, n, B, w]() {
        const Tensor<T>& g = grad_ref(id);
        bool fresh;
        Tensor<T>& gx = grad_sink(x, fresh);
        if (fresh) gx.fill(T(0));
        for (int r = 0; r < B; ++r) {
          for (int i = 0; i < w; ++i) gx[static_cast<int64_t>(r) * n + lo + i] += g[static_cast<int64_t>(r) * w + i];
        }
      };
    }
    return id;
  }

  // [B x n1] ++ [B x n2] -> [B x (n1+n2)]
  NodeId concat_cols(NodeId a, NodeId b) {
    const Tensor<T>& A = value(a);
    const Tensor<T>& B2 = value(b);
    if (A.rank() != 2 || B2.rank() != 2 || A.dim(0) != B2.dim(0)) {
      throw std::invalid_argument("concat_cols: shapes " + shape_str(A.shape()) + " and " +
                                  shape_str(B2.shape()));
    }
    const int B = A.dim(0), n1 = A.dim(1), n2 = B2.dim(1);
    Tensor<T> out({B, n1 + n2});
    for (int r = 0; r < B; ++r) {
      std::copy(A.data() + static_cast<int64_t>(r) * n1, A.data() + static_cast<int64_t>(r + 1) * n1,
                out.data() + static_cast<int64_t>(r) * (n1 + n2));
      std::copy(B2.data() + static_cast<int64_t>(r) * n2, B2.data() + static_cast<int64_t>(r + 1) * n2,
                out.data() + static_cast<int64_t>(r) * (n1 + n2) + n1);
    }
    NodeId id = push_op(std::move(out), {a, b});
    if (node(id).tracked) {
      node(id).back = [this, id, a, b, B, n1, n2]() {
        const Tensor<T>& g = grad_ref(id);
        if (requires_grad(a)) {
          bool fresh;
          Tensor<T>& ga = grad_sink(a, fresh);
          for (int r = 0; r < B; ++r) {
            for (int i = 0; i < n1; ++i) {
              ga[static_cast<int64_t>(r) * n1 + i] =
                  acc(fresh, ga[static_cast<int64_t>(r) * n1 + i], g[static_cast<int64_t>(r) * (n1 + n2) + i]);
            }
          }
        }
        if (requires_grad(b)) {
          bool fresh;
          Tensor<T>& gb = grad_sink(b, fresh);
          for (int r = 0; r < B; ++r) {
            for (int i = 0; i < n2; ++i) {
              gb[static_cast<int64_t>(r) * n2 + i] =
                  acc(fresh, gb[static_cast<int64_t>(r) * n2 + i], g[static_cast<int64_t>(r) * (n1 + n2) + n1 + i]);
            }
          }
        }
      };
    }
    return id;
  }

  NodeId reshape(NodeId x, Shape shape) {
    const Tensor<T>& X = value(x);
    if (numel(shape) != X.size()) {
      throw std::invalid_argument("reshape: cannot view " + shape_str(X.shape()) + " as " +
                                  shape_str(shape));
    }
    Tensor<T> out(shape, std::vector<T>(X.data(), X.data() + X.size()));
    NodeId id = push_op(std::move(out), {x});
    if (node(id).tracked) {
      node(id).back = [this, id, x]() {
        const Tensor<T>& g = grad_ref(id);
        bool fresh;
        Tensor<T>& gx = grad_sink(x, fresh);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] = acc(fresh, gx[i], g[i]);
      };
    }
    return id;
  }

  // Sum of all elements, as a scalar node.
  NodeId sum(NodeId x) {
    const Tensor<T>& X = value(x);
    double s = 0;
    for (int64_t i = 0; i < X.size(); ++i) s += static_cast<double>(X[i]);
    NodeId id = push_op(Tensor<T>::scalar(static_cast<T>(s)), {x});
    if (node(id).tracked) {
      node(id).back = [this, id, x]() {
        const T g = grad_ref(id)[0];
        bool fresh;
        Tensor<T>& gx = grad_sink(x, fresh);
        for (int64_t i = 0; i < gx.size(); ++i) gx[i] = acc(fresh, gx[i], g);
      };
    }
    return id;
  }

  // Mean over rows of the per-row categorical cross-entropy between
  // softmax(logits) and the target distribution. Fused for stability; the
  // softmax probabilities are kept for the backward pass.
  NodeId softmax_cross_entropy(NodeId logits, NodeId targets) {
    const Tensor<T>& Z = value(logits);
    const Tensor<T>& Tt = value(targets);
    if (Z.rank() != 2 || !Z.same_shape(Tt)) {
      throw std::invalid_argument("softmax_cross_entropy: shapes " + shape_str(Z.shape()) +
                                  " and " + shape_str(Tt.shape()));
    }
    const int B = Z.dim(0), n = Z.dim(1);
    auto probs = std::make_shared<Tensor<T>>(Z.shape());
    double total = 0;
    for (int r = 0; r < B; ++r) {
      const T* z = Z.data() + static_cast<int64_t>(r) * n;
      T* p = probs->data() + static_cast<int64_t>(r) * n;
      T mx = z[0];
      for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
      double lse = 0;
      for (int i = 0; i < n; ++i) lse += std::exp(static_cast<double>(z[i] - mx));
      lse = std::log(lse);
      for (int i = 0; i < n; ++i) p[i] = static_cast<T>(std::exp(static_cast<double>(z[i] - mx) - lse));
      const T* t = Tt.data() + static_cast<int64_t>(r) * n;
      for (int i = 0; i < n; ++i) {
        if (t[i] != T(0)) total += static_cast<double>(t[i]) * (lse - static_cast<double>(z[i] - mx));
      }
    }
    NodeId id = push_op(Tensor<T>::scalar(static_cast<T>(total / B)), {logits, targets});
    if (node(id).tracked) {
      node(id).back = [this, id, logits, targets, probs, B, n]() {
        if (!requires_grad(logits)) return;
        const T g = grad_ref(id)[0];
        const Tensor<T>& Tt2 = value(targets);
        bool fresh;
        Tensor<T>& gz = grad_sink(logits, fresh);
        const T scale = g / static_cast<T>(B);
        for (int64_t i = 0; i < Tt2.size(); ++i) {
          gz[i] = acc(fresh, gz[i], scale * ((*probs)[i] - Tt2[i]));
        }
      };
    }
    return id;
  }

  // Mean over rows of the sum over units of binary cross-entropy between
  // sigmoid(logits) and binary targets. Fused form: per unit
  // max(z,0) - z*t + log(1+exp(-|z|)).
  NodeId sigmoid_binary_cross_entropy(NodeId logits, NodeId targets) {
    const Tensor<T>& Z = value(logits);
    const Tensor<T>& Tt = value(targets);
    if (Z.rank() != 2 || !Z.same_shape(Tt)) {
      throw std::invalid_argument("sigmoid_binary_cross_entropy: shapes " + shape_str(Z.shape()) +
                                  " and " + shape_str(Tt.shape()));
    }
    const int B = Z.dim(0);
    double total = 0;
    for (int64_t i = 0; i < Z.size(); ++i) {
      const double z = static_cast<double>(Z[i]);
      const double t = static_cast<double>(Tt[i]);
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    NodeId id = push_op(Tensor<T>::scalar(static_cast<T>(total / B)), {logits, targets});
    if (node(id).tracked) {
      node(id).back = [this, id, logits, targets, B]() {
        if (!requires_grad(logits)) return;
        const T g = grad_ref(id)[0];
        const Tensor<T>& Z2 = value(logits);
        const Tensor<T>& Tt2 = value(targets);
        bool fresh;
        Tensor<T>& gz = grad_sink(logits, fresh);
        const T scale = g / static_cast<T>(B);
        for (int64_t i = 0; i < Z2.size(); ++i) {
          gz[i] = acc(fresh, gz[i], scale * (detail::sigmoid_scalar(Z2[i]) - Tt2[i]));
        }
      };
    }
    return id;
  }

  // ---- backward ----

  // Clears accumulators so a second backward() can be compared against the
  // first.
  void zero_grad() {
    for (Node& n : nodes_) n.has_grad = false;
  }

  void backward(NodeId loss) {
    const Tensor<T>& L = value(loss);
    if (L.size() != 1) {
      throw std::logic_error("backward: loss must be scalar, got " + shape_str(L.shape()));
    }
    if (!node(loss).tracked) {
      throw std::logic_error("backward: loss does not depend on any tracked parameter");
    }
    zero_grad();
    {
      bool fresh;
      Tensor<T>& g = grad_sink(loss, fresh);
      g.fill(T(1));
    }
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = node(id);
      if (n.has_grad && n.back) n.back();
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* view = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool tracked = false;
    std::function<void()> back;
  };

  Node& node(NodeId id) { return nodes_.at(static_cast<size_t>(id)); }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<size_t>(id)); }

  NodeId push(Tensor<T> owned, const Tensor<T>* view, bool tracked, std::function<void()> back) {
    Node n;
    n.owned = std::move(owned);
    n.view = view;
    n.tracked = tracked;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId push_op(Tensor<T> out, std::initializer_list<NodeId> inputs) {
    bool req = false;
    for (NodeId i : inputs) req = req || node(i).tracked;
    return push(std::move(out), nullptr, req, nullptr);
  }

  // Gradient accumulation target. `fresh` reports whether this is the first
  // contribution this pass (the buffer then holds stale data and must be
  // assigned, not accumulated into).
  Tensor<T>& grad_sink(NodeId id, bool& fresh) {
    Node& n = node(id);
    fresh = !n.has_grad;
    if (fresh) {
      if (!n.grad.same_shape(value(id))) n.grad = Tensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  const Tensor<T>& grad_ref(NodeId id) {
    Node& n = node(id);
    if (!n.has_grad) throw std::logic_error("internal: reading gradient before accumulation");
    return n.grad;
  }

  static T acc(bool fresh, T current, T contribution) {
    return fresh ? contribution : current + contribution;
  }

  static void im2col(const T* x, int N, int H, int W, int C, int kh, int kw, int stride, int Ho,
                     int Wo, T* col) {
    const int cols = kh * kw * C;
    for (int n = 0; n < N; ++n) {
      const T* img = x + static_cast<int64_t>(n) * H * W * C;
      T* dst = col + static_cast<int64_t>(n) * Ho * Wo * cols;
      for (int y = 0; y < Ho; ++y) {
        for (int xw = 0; xw < Wo; ++xw) {
          for (int ky = 0; ky < kh; ++ky) {
            const T* src = img + ((static_cast<int64_t>(y * stride + ky)) * W + xw * stride) * C;
            std::copy(src, src + static_cast<int64_t>(kw) * C, dst);
            dst += kw * C;
          }
        }
      }
    }
  }

  static void col2im_add(const T* col, int N, int H, int W, int C, int kh, int kw, int stride,
                         int Ho, int Wo, T* gx) {
    const int cols = kh * kw * C;
    for (int n = 0; n < N; ++n) {
      T* img = gx + static_cast<int64_t>(n) * H * W * C;
      const T* src = col + static_cast<int64_t>(n) * Ho * Wo * cols;
      for (int y = 0; y < Ho; ++y) {
        for (int xw = 0; xw < Wo; ++xw) {
          for (int ky = 0; ky < kh; ++ky) {
            T* dst = img + ((static_cast<int64_t>(y * stride + ky)) * W + xw * stride) * C;
            for (int i = 0; i < kw * C; ++i) dst[i] += src[i];
            src += kw * C;
          }
        }
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, NodeId> borrowed_;
};

}  // namespace varsnn
