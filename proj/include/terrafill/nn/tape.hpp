#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "terrafill/nn/tensor.hpp"

namespace terrafill::nn {

// Reverse-mode autodiff over a linear tape. Each op appends a node holding
// its value and a closure that scatters the node's gradient back into its
// inputs; backward() walks the tape once in reverse creation order.
//
// A tape built with grad_enabled = false evaluates forward only (used for
// sampling/inference, where backward state would be wasted memory).
template <class S>
class Tape {
 public:
  using Id = int;
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Id input(Tensor<S> v) { return push(std::move(v), false, {}); }
  Id param(Tensor<S> v) { return push(std::move(v), grad_enabled_, {}); }

  const Tensor<S>& value(Id id) const { return nodes_[id].value; }
  const Tensor<S>& grad(Id id) const { return nodes_[id].grad; }
  bool grad_enabled() const { return grad_enabled_; }

  // ---- primitive ops ----

  // Cross-correlation with zero padding (K-1)/2, odd square kernel,
  // stride 1 (same spatial dims) or 2. w: (Cout, Cin, K, K), b: (1, Cout, 1, 1).
  Id conv2d(Id x, Id w, Id b, int stride = 1);

  // x: (B, Kin, 1, 1), w: (Kout, Kin, 1, 1), b: (1, Kout, 1, 1)
  Id linear(Id x, Id w, Id b);

  // GroupNorm over (C/G, H, W) slices per (batch, group); affine per channel.
  Id group_norm(Id x, Id gamma, Id beta, int groups);

  Id silu(Id x) {
    const Tensor<S>& xv = val(x);
    Tensor<S> out = xv;
    out.data = xv.data / (S(1) + (-xv.data).exp());
    return push(std::move(out), needs({x}), [this, x](Id self) {
      const Tensor<S>& xv = val(x);
      const auto sig = (S(1) + (-xv.data).exp()).inverse();
      ensure_grad(x).data += nodes_[self].grad.data * sig * (S(1) + xv.data * (S(1) - sig));
    });
  }

  Id add(Id a, Id b) {
    const Tensor<S>& av = val(a);
    if (!av.same_shape(val(b))) {
      throw ShapeMismatch("add: " + av.shape_str() + " vs " + val(b).shape_str());
    }
    Tensor<S> out = av;
    out.data += val(b).data;
    return push(std::move(out), needs({a, b}), [this, a, b](Id self) {
      const Tensor<S>& g = nodes_[self].grad;
      if (needs_grad(a)) ensure_grad(a).data += g.data;
      if (needs_grad(b)) ensure_grad(b).data += g.data;
    });
  }

  // x: (B, C, H, W); v: (B, C, 1, 1) or (1, C, 1, 1), broadcast over space
  // (and over batch for the latter).
  Id add_bias(Id x, Id v);

  Id upsample_nearest2x(Id x);

  Id concat_channels(Id a, Id b);

  // Single-head spatial self-attention over H*W positions:
  //   A = softmax_rows(Q K^T / sqrt(C)), O = A V,
  // with Q, K, V viewed as (positions, channels) matrices per batch item.
  Id self_attention(Id q, Id k, Id v);

  Id scale(Id x, S s) {
    Tensor<S> out = val(x);
    out.data *= s;
    return push(std::move(out), needs({x}), [this, x, s](Id self) {
      ensure_grad(x).data += nodes_[self].grad.data * s;
    });
  }

  // mean((a - b)^2) over all elements -> scalar node
  Id mse_loss(Id a, Id b) {
    const Tensor<S>& av = val(a);
    if (!av.same_shape(val(b))) {
      throw ShapeMismatch("mse_loss: " + av.shape_str() + " vs " + val(b).shape_str());
    }
    Tensor<S> out(1, 1, 1, 1);
    out.data[0] = (av.data - val(b).data).square().mean();
    return push(std::move(out), needs({a, b}), [this, a, b](Id self) {
      const S g = nodes_[self].grad.data[0];
      const S c = S(2) / static_cast<S>(val(a).size());
      if (needs_grad(a)) ensure_grad(a).data += c * g * (val(a).data - val(b).data);
      if (needs_grad(b)) ensure_grad(b).data -= c * g * (val(a).data - val(b).data);
    });
  }

  // sum(x^2) -> scalar node
  Id sum_squares(Id x) {
    Tensor<S> out(1, 1, 1, 1);
    out.data[0] = val(x).data.square().sum();
    return push(std::move(out), needs({x}), [this, x](Id self) {
      ensure_grad(x).data += S(2) * nodes_[self].grad.data[0] * val(x).data;
    });
  }

  // ---- engine ----

  void backward(Id loss) {
    if (!grad_enabled_) throw GraphConsumed("backward on a no-grad tape");
    if (consumed_) throw GraphConsumed("backward called twice on the same graph");
    consumed_ = true;
    if (nodes_[loss].value.size() != 1) throw ShapeMismatch("backward: loss must be scalar");
    ensure_grad(loss).data[0] = S(1);
    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
      if (nodes_[id].backprop && nodes_[id].grad.size() > 0) nodes_[id].backprop(id);
    }
  }

  // Debug hook: verify every node value is finite.
  void check_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].value.all_finite()) {
        throw NonFinite("non-finite value at tape node " + std::to_string(i));
      }
    }
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool needs_grad = false;
    std::function<void(Id)> backprop;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool consumed_ = false;

  const Tensor<S>& val(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }

  bool needs(std::initializer_list<Id> ids) const {
    if (!grad_enabled_) return false;
    for (Id id : ids) {
      if (nodes_[id].needs_grad) return true;
    }
    return false;
  }

  Id push(Tensor<S> v, bool needs_grad, std::function<void(Id)> bp) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Tensor<S>& ensure_grad(Id id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = Tensor<S>(n.value.dims[0], n.value.dims[1], n.value.dims[2], n.value.dims[3]);
    }
    return n.grad;
  }

  static void im2col(const Tensor<S>& x, int item, int K, int stride, int out_h, int out_w,
                     Mat& cols);
  void conv2d_backward(Id x, Id w, Id b, int stride, Id self);
  void group_norm_backward(Id x, Id gamma, Id beta, int groups, const std::vector<S>& mu,
                           const std::vector<S>& ivar, Id self);
};

// ---- conv2d ----

template <class S>
void Tape<S>::im2col(const Tensor<S>& x, int item, int K, int stride, int out_h, int out_w,
                     Mat& cols) {
  const int C = x.dims[1], H = x.dims[2], W = x.dims[3];
  const int pad = (K - 1) / 2;
  cols.resize(static_cast<Eigen::Index>(C) * K * K, static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * K + ky) * K + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - pad;
            cols(row, static_cast<Eigen::Index>(oy) * out_w + ox) =
                (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x.at(item, c, iy, ix) : S(0);
          }
        }
      }
    }
  }
}

template <class S>
typename Tape<S>::Id Tape<S>::conv2d(Id x, Id w, Id b, int stride) {
  const Tensor<S>& xv = val(x);
  const Tensor<S>& wv = val(w);
  const Tensor<S>& bv = val(b);
  const int K = wv.dims[2];
  if (wv.dims[3] != K || K % 2 == 0) throw ShapeMismatch("conv2d: kernel must be odd square");
  if (wv.dims[1] != xv.dims[1]) {
    throw ShapeMismatch("conv2d: kernel " + wv.shape_str() + " vs input " + xv.shape_str());
  }
  if (bv.dims[1] != wv.dims[0] || bv.size() != wv.dims[0]) {
    throw ShapeMismatch("conv2d: bias must be (1, Cout, 1, 1)");
  }
  if (stride != 1 && stride != 2) throw ShapeMismatch("conv2d: stride must be 1 or 2");

  const int B = xv.dims[0], Cin = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
  const int Cout = wv.dims[0];
  const int pad = (K - 1) / 2;
  const int out_h = (H + 2 * pad - K) / stride + 1;
  const int out_w = (W + 2 * pad - K) / stride + 1;

  Tensor<S> out(B, Cout, out_h, out_w);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(
      wv.data.data(), Cout, static_cast<Eigen::Index>(Cin) * K * K);
  Mat cols;
  for (int n = 0; n < B; ++n) {
    im2col(xv, n, K, stride, out_h, out_w, cols);
    // (positions, Cout) view of this item's output block
    Eigen::Map<Mat> omat(out.data.data() + static_cast<Eigen::Index>(n) * Cout * out_h * out_w,
                         static_cast<Eigen::Index>(out_h) * out_w, Cout);
    omat.noalias() = cols.transpose() * wmat.transpose();
    for (int c = 0; c < Cout; ++c) omat.col(c).array() += bv.data[c];
  }
  return push(std::move(out), needs({x, w, b}),
              [this, x, w, b, stride](Id self) { conv2d_backward(x, w, b, stride, self); });
}

template <class S>
void Tape<S>::conv2d_backward(Id x, Id w, Id b, int stride, Id self) {
  const Tensor<S>& xv = val(x);
  const Tensor<S>& wv = val(w);
  const Tensor<S>& g = nodes_[self].grad;
  const int B = xv.dims[0], Cin = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
  const int Cout = wv.dims[0], K = wv.dims[2];
  const int pad = (K - 1) / 2;
  const int out_h = g.dims[2], out_w = g.dims[3];

  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(
      wv.data.data(), Cout, static_cast<Eigen::Index>(Cin) * K * K);

  Mat cols;
  Mat dcols;
  for (int n = 0; n < B; ++n) {
    Eigen::Map<const Mat> gmat(g.data.data() + static_cast<Eigen::Index>(n) * Cout * out_h * out_w,
                               static_cast<Eigen::Index>(out_h) * out_w, Cout);
    if (needs_grad(w)) {
      im2col(xv, n, K, stride, out_h, out_w, cols);
      Tensor<S>& gw = ensure_grad(w);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gwmat(
          gw.data.data(), Cout, static_cast<Eigen::Index>(Cin) * K * K);
      gwmat.noalias() += (cols * gmat).transpose();
    }
    if (needs_grad(b)) {
      Tensor<S>& gb = ensure_grad(b);
      for (int c = 0; c < Cout; ++c) gb.data[c] += gmat.col(c).sum();
    }
    if (needs_grad(x)) {
      dcols.noalias() = wmat.transpose() * gmat.transpose();  // (Cin*K*K, positions)
      Tensor<S>& gx = ensure_grad(x);
      for (int c = 0; c < Cin; ++c) {
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const Eigen::Index row = (static_cast<Eigen::Index>(c) * K + ky) * K + kx;
            for (int oy = 0; oy < out_h; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int ox = 0; ox < out_w; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                gx.at(n, c, iy, ix) += dcols(row, static_cast<Eigen::Index>(oy) * out_w + ox);
              }
            }
          }
        }
      }
    }
  }
}

// ---- linear ----

template <class S>
typename Tape<S>::Id Tape<S>::linear(Id x, Id w, Id b) {
  const Tensor<S>& xv = val(x);
  const Tensor<S>& wv = val(w);
  const Tensor<S>& bv = val(b);
  if (xv.dims[2] != 1 || xv.dims[3] != 1 || wv.dims[1] != xv.dims[1]) {
    throw ShapeMismatch("linear: x " + xv.shape_str() + " vs w " + wv.shape_str());
  }
  if (bv.size() != wv.dims[0]) throw ShapeMismatch("linear: bias size mismatch");
  const int B = xv.dims[0], kin = xv.dims[1], kout = wv.dims[0];

  Eigen::Map<const Mat> xm(xv.data.data(), kin, B);  // column per item
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wm(
      wv.data.data(), kout, kin);
  Tensor<S> out(B, kout, 1, 1);
  Eigen::Map<Mat> om(out.data.data(), kout, B);
  om.noalias() = wm * xm;
  om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bv.data.data(), kout);

  return push(std::move(out), needs({x, w, b}), [this, x, w, b](Id self) {
    const Tensor<S>& xv = val(x);
    const Tensor<S>& wv = val(w);
    const Tensor<S>& g = nodes_[self].grad;
    const int B = xv.dims[0], kin = xv.dims[1], kout = wv.dims[0];
    Eigen::Map<const Mat> xm(xv.data.data(), kin, B);
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wm(
        wv.data.data(), kout, kin);
    Eigen::Map<const Mat> gm(g.data.data(), kout, B);
    if (needs_grad(x)) {
      Eigen::Map<Mat> gx(ensure_grad(x).data.data(), kin, B);
      gx.noalias() += wm.transpose() * gm;
    }
    if (needs_grad(w)) {
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
          ensure_grad(w).data.data(), kout, kin);
      gw.noalias() += gm * xm.transpose();
    }
    if (needs_grad(b)) {
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(ensure_grad(b).data.data(), kout);
      gb.noalias() += gm.rowwise().sum();
    }
  });
}

// ---- group norm ----

template <class S>
typename Tape<S>::Id Tape<S>::group_norm(Id x, Id gamma, Id beta, int groups) {
  const Tensor<S>& xv = val(x);
  const int B = xv.dims[0], C = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
  if (groups < 1 || C % groups != 0) {
    throw ShapeMismatch("group_norm: groups must divide channels");
  }
  if (val(gamma).size() != C || val(beta).size() != C) {
    throw ShapeMismatch("group_norm: affine params must have C entries");
  }
  constexpr S kEps = S(1e-5);
  const int cg = C / groups;
  const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
  const Eigen::Index gsize = static_cast<Eigen::Index>(cg) * hw;

  auto mu = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B) * groups);
  auto ivar = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B) * groups);
  const Tensor<S>& gv = val(gamma);
  const Tensor<S>& bv = val(beta);
  Tensor<S> out = xv;
  for (int n = 0; n < B; ++n) {
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index base = (static_cast<Eigen::Index>(n) * C + g * cg) * hw;
      auto seg = xv.data.segment(base, gsize);
      const S m = seg.mean();
      const S var = (seg - m).square().mean();
      const S iv = S(1) / std::sqrt(var + kEps);
      (*mu)[static_cast<std::size_t>(n) * groups + g] = m;
      (*ivar)[static_cast<std::size_t>(n) * groups + g] = iv;
      for (int cc = 0; cc < cg; ++cc) {
        const int c = g * cg + cc;
        const Eigen::Index cbase = (static_cast<Eigen::Index>(n) * C + c) * hw;
        out.data.segment(cbase, hw) =
            (xv.data.segment(cbase, hw) - m) * iv * gv.data[c] + bv.data[c];
      }
    }
  }
  return push(std::move(out), needs({x, gamma, beta}),
              [this, x, gamma, beta, groups, mu, ivar](Id self) {
                group_norm_backward(x, gamma, beta, groups, *mu, *ivar, self);
              });
}

template <class S>
void Tape<S>::group_norm_backward(Id x, Id gamma, Id beta, int groups,
                                  const std::vector<S>& mu, const std::vector<S>& ivar,
                                  Id self) {
  const Tensor<S>& xv = val(x);
  const Tensor<S>& gv = val(gamma);
  const Tensor<S>& g = nodes_[self].grad;
  const int B = xv.dims[0], C = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
  const int cg = C / groups;
  const Eigen::Index hw = static_cast<Eigen::Index>(H) * W;
  const Eigen::Index gsize = static_cast<Eigen::Index>(cg) * hw;

  for (int n = 0; n < B; ++n) {
    for (int gr = 0; gr < groups; ++gr) {
      const S m = mu[static_cast<std::size_t>(n) * groups + gr];
      const S iv = ivar[static_cast<std::size_t>(n) * groups + gr];
      const Eigen::Index base = (static_cast<Eigen::Index>(n) * C + gr * cg) * hw;

      // xhat and dxhat for the whole group
      Eigen::Array<S, Eigen::Dynamic, 1> xhat = (xv.data.segment(base, gsize) - m) * iv;
      Eigen::Array<S, Eigen::Dynamic, 1> dxhat(gsize);
      for (int cc = 0; cc < cg; ++cc) {
        const int c = gr * cg + cc;
        dxhat.segment(cc * hw, hw) =
            g.data.segment(base + cc * hw, hw) * gv.data[c];
      }
      if (needs_grad(gamma)) {
        Tensor<S>& gg = ensure_grad(gamma);
        for (int cc = 0; cc < cg; ++cc) {
          const int c = gr * cg + cc;
          gg.data[c] +=
              (g.data.segment(base + cc * hw, hw) * xhat.segment(cc * hw, hw)).sum();
        }
      }
      if (needs_grad(beta)) {
        Tensor<S>& gb = ensure_grad(beta);
        for (int cc = 0; cc < cg; ++cc) {
          const int c = gr * cg + cc;
          gb.data[c] += g.data.segment(base + cc * hw, hw).sum();
        }
      }
      if (needs_grad(x)) {
        const S mean_dxhat = dxhat.mean();
        const S mean_dxhat_xhat = (dxhat * xhat).mean();
        ensure_grad(x).data.segment(base, gsize) +=
            iv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    }
  }
}

// ---- spatial ops ----

template <class S>
typename Tape<S>::Id Tape<S>::add_bias(Id x, Id v) {
  const Tensor<S>& xv = val(x);
  const Tensor<S>& vv = val(v);
  const int B = xv.dims[0], C = xv.dims[1];
  if (vv.dims[1] != C || vv.dims[2] != 1 || vv.dims[3] != 1 ||
      (vv.dims[0] != 1 && vv.dims[0] != B)) {
    throw ShapeMismatch("add_bias: bias " + vv.shape_str() + " vs x " + xv.shape_str());
  }
  const Eigen::Index hw = static_cast<Eigen::Index>(xv.dims[2]) * xv.dims[3];
  Tensor<S> out = xv;
  for (int n = 0; n < B; ++n) {
    for (int c = 0; c < C; ++c) {
      out.data.segment((static_cast<Eigen::Index>(n) * C + c) * hw, hw) +=
          vv.data[(vv.dims[0] == B ? n : 0) * C + c];
    }
  }
  return push(std::move(out), needs({x, v}), [this, x, v](Id self) {
    const Tensor<S>& g = nodes_[self].grad;
    const Tensor<S>& vv = val(v);
    const int B = g.dims[0], C = g.dims[1];
    const Eigen::Index hw = static_cast<Eigen::Index>(g.dims[2]) * g.dims[3];
    if (needs_grad(x)) ensure_grad(x).data += g.data;
    if (needs_grad(v)) {
      Tensor<S>& gv = ensure_grad(v);
      for (int n = 0; n < B; ++n) {
        for (int c = 0; c < C; ++c) {
          gv.data[(vv.dims[0] == B ? n : 0) * C + c] +=
              g.data.segment((static_cast<Eigen::Index>(n) * C + c) * hw, hw).sum();
        }
      }
    }
  });
}

template <class S>
typename Tape<S>::Id Tape<S>::upsample_nearest2x(Id x) {
  const Tensor<S>& xv = val(x);
  const int B = xv.dims[0], C = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
  Tensor<S> out(B, C, H * 2, W * 2);
  for (int n = 0; n < B; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < 2 * H; ++y) {
        for (int xx = 0; xx < 2 * W; ++xx) out.at(n, c, y, xx) = xv.at(n, c, y / 2, xx / 2);
      }
    }
  }
  return push(std::move(out), needs({x}), [this, x](Id self) {
    const Tensor<S>& g = nodes_[self].grad;
    Tensor<S>& gx = ensure_grad(x);
    const int B = gx.dims[0], C = gx.dims[1], H = gx.dims[2], W = gx.dims[3];
    for (int n = 0; n < B; ++n) {
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < 2 * H; ++y) {
          for (int xx = 0; xx < 2 * W; ++xx) gx.at(n, c, y / 2, xx / 2) += g.at(n, c, y, xx);
        }
      }
    }
  });
}

template <class S>
typename Tape<S>::Id Tape<S>::concat_channels(Id a, Id b) {
  const Tensor<S>& av = val(a);
  const Tensor<S>& bv = val(b);
  if (av.dims[0] != bv.dims[0] || av.dims[2] != bv.dims[2] || av.dims[3] != bv.dims[3]) {
    throw ShapeMismatch("concat_channels: " + av.shape_str() + " vs " + bv.shape_str());
  }
  const int B = av.dims[0], Ca = av.dims[1], Cb = bv.dims[1];
  const Eigen::Index hw = static_cast<Eigen::Index>(av.dims[2]) * av.dims[3];
  Tensor<S> out(B, Ca + Cb, av.dims[2], av.dims[3]);
  for (int n = 0; n < B; ++n) {
    out.data.segment(static_cast<Eigen::Index>(n) * (Ca + Cb) * hw, Ca * hw) =
        av.data.segment(static_cast<Eigen::Index>(n) * Ca * hw, Ca * hw);
    out.data.segment(static_cast<Eigen::Index>(n) * (Ca + Cb) * hw + Ca * hw, Cb * hw) =
        bv.data.segment(static_cast<Eigen::Index>(n) * Cb * hw, Cb * hw);
  }
  return push(std::move(out), needs({a, b}), [this, a, b](Id self) {
    const Tensor<S>& g = nodes_[self].grad;
    const int B = val(a).dims[0], Ca = val(a).dims[1], Cb = val(b).dims[1];
    const Eigen::Index hw = static_cast<Eigen::Index>(val(a).dims[2]) * val(a).dims[3];
    if (needs_grad(a)) {
      Tensor<S>& ga = ensure_grad(a);
      for (int n = 0; n < B; ++n) {
        ga.data.segment(static_cast<Eigen::Index>(n) * Ca * hw, Ca * hw) +=
            g.data.segment(static_cast<Eigen::Index>(n) * (Ca + Cb) * hw, Ca * hw);
      }
    }
    if (needs_grad(b)) {
      Tensor<S>& gb = ensure_grad(b);
      for (int n = 0; n < B; ++n) {
        gb.data.segment(static_cast<Eigen::Index>(n) * Cb * hw, Cb * hw) +=
            g.data.segment(static_cast<Eigen::Index>(n) * (Ca + Cb) * hw + Ca * hw, Cb * hw);
      }
    }
  });
}

template <class S>
typename Tape<S>::Id Tape<S>::self_attention(Id q, Id k, Id v) {
  const Tensor<S>& qv = val(q);
  if (!qv.same_shape(val(k)) || !qv.same_shape(val(v))) {
    throw ShapeMismatch("self_attention: q/k/v shapes differ");
  }
  const int B = qv.dims[0], C = qv.dims[1];
  const Eigen::Index hw = static_cast<Eigen::Index>(qv.dims[2]) * qv.dims[3];
  const S sc = S(1) / std::sqrt(static_cast<S>(C));

  // Per item, channel plane c is a contiguous run of hw values, so the
  // column-major (hw, C) map is the (position, channel) matrix.
  auto attn = std::make_shared<std::vector<Mat>>();
  attn->reserve(B);
  Tensor<S> out = qv;
  for (int n = 0; n < B; ++n) {
    Eigen::Map<const Mat> Q(qv.data.data() + n * C * hw, hw, C);
    Eigen::Map<const Mat> K(val(k).data.data() + n * C * hw, hw, C);
    Eigen::Map<const Mat> V(val(v).data.data() + n * C * hw, hw, C);
    Mat scores = (Q * K.transpose()) * sc;  // (hw, hw), row i = target position
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const S mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    Eigen::Map<Mat>(out.data.data() + n * C * hw, hw, C).noalias() = scores * V;
    attn->push_back(std::move(scores));
  }
  return push(std::move(out), needs({q, k, v}), [this, q, k, v, attn, sc](Id self) {
    const Tensor<S>& g = nodes_[self].grad;
    const int B = val(q).dims[0], C = val(q).dims[1];
    const Eigen::Index hw = static_cast<Eigen::Index>(val(q).dims[2]) * val(q).dims[3];
    for (int n = 0; n < B; ++n) {
      const Mat& A = (*attn)[n];
      Eigen::Map<const Mat> Q(val(q).data.data() + n * C * hw, hw, C);
      Eigen::Map<const Mat> K(val(k).data.data() + n * C * hw, hw, C);
      Eigen::Map<const Mat> V(val(v).data.data() + n * C * hw, hw, C);
      Eigen::Map<const Mat> dO(g.data.data() + n * C * hw, hw, C);
      if (needs_grad(v)) {
        Eigen::Map<Mat> dV(ensure_grad(v).data.data() + n * C * hw, hw, C);
        dV.noalias() += A.transpose() * dO;
      }
      if (needs_grad(q) || needs_grad(k)) {
        Mat dA = dO * V.transpose();  // (hw, hw)
        Mat dS(hw, hw);
        for (Eigen::Index r = 0; r < hw; ++r) {
          const S dot = dA.row(r).dot(A.row(r));
          dS.row(r) = (dA.row(r).array() - dot) * A.row(r).array();
        }
        if (needs_grad(q)) {
          Eigen::Map<Mat> dQ(ensure_grad(q).data.data() + n * C * hw, hw, C);
          dQ.noalias() += sc * (dS * K);
        }
        if (needs_grad(k)) {
          Eigen::Map<Mat> dK(ensure_grad(k).data.data() + n * C * hw, hw, C);
          dK.noalias() += sc * (dS.transpose() * Q);
        }
      }
    }
  });
}

// Standalone forward-only convolution, the library entry point for callers
// that just want the op without a tape.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, const Tensor<S>& bias) {
  Tape<S> tape(false);
  return tape.value(tape.conv2d(tape.input(x), tape.input(kernel), tape.input(bias)));
}

// Sinusoidal timestep embedding: concat(sin(t * w_k), cos(t * w_k)) with
// w_k = 10000^(-2k/dim), k = 0 .. dim/2 - 1. One row per batch item,
// shape (B, dim, 1, 1).
template <class S>
Tensor<S> time_embedding(const std::vector<int>& t, int dim) {
  if (dim % 2 != 0) throw ShapeMismatch("time_embedding: dim must be even");
  const int B = static_cast<int>(t.size());
  Tensor<S> out(B, dim, 1, 1);
  const int half = dim / 2;
  for (int n = 0; n < B; ++n) {
    for (int kk = 0; kk < half; ++kk) {
      const double w = std::pow(10000.0, -2.0 * kk / dim);
      out.data[n * dim + kk] = static_cast<S>(std::sin(t[n] * w));
      out.data[n * dim + half + kk] = static_cast<S>(std::cos(t[n] * w));
    }
  }
  return out;
}

}  // namespace terrafill::nn
