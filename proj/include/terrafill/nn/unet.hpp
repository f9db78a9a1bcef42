#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "terrafill/nn/tape.hpp"
#include "terrafill/rng.hpp"

namespace terrafill::nn {

// Noise-prediction U-Net: residual blocks with GroupNorm + SiLU and
// time-embedding injection, downsampling by strided conv, nearest-neighbour
// upsampling with skip concatenation, optional self-attention per level.
struct UNetConfig {
  int in_channels = 1;
  int base_channels = 32;
  std::vector<int> channel_mults = {1, 2, 2};
  int num_res_blocks = 1;               // per level
  int time_embed_dim = 128;
  std::set<int> attention_levels = {};  // level indices
  int groupnorm_groups = 8;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  int channels_at(int level) const { return base_channels * channel_mults[level]; }
  // input spatial size must be divisible by this
  int spatial_divisor() const { return 1 << (levels() - 1); }
};

// Compact preset for CPU-scale experiments (~140k parameters at 32x32).
inline UNetConfig desk_unet_config() {
  UNetConfig cfg;
  cfg.base_channels = 16;
  cfg.time_embed_dim = 64;
  return cfg;
}

template <class S>
using ParamStore = std::map<std::string, Tensor<S>>;

template <class S>
class UNet {
 public:
  explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.in_channels < 1 || cfg_.base_channels < 1 || cfg_.channel_mults.empty() ||
        cfg_.num_res_blocks < 1 || cfg_.time_embed_dim < 2 || cfg_.time_embed_dim % 2 != 0) {
      throw InvalidConfig("UNet: bad architecture descriptor");
    }
  }

  const UNetConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  long param_count() const {
    long n = 0;
    for (const auto& [path, t] : params_) n += static_cast<long>(t.size());
    return n;
  }

  // Kaiming-uniform conv/linear weights, zero biases, unit norm gains, and a
  // zero-initialized output conv (initial prediction 0 against unit noise).
  void init_params(Rng& rng) {
    params_.clear();
    const int temb = cfg_.time_embed_dim;
    make_linear("time.l1", temb, temb, rng);
    make_linear("time.l2", temb, temb, rng);
    make_conv("conv_in", cfg_.in_channels, cfg_.base_channels, 3, rng);

    std::vector<int> skip_stack{cfg_.base_channels};
    int cur = cfg_.base_channels;
    for (int i = 0; i < cfg_.levels(); ++i) {
      const int ch = cfg_.channels_at(i);
      for (int b = 0; b < cfg_.num_res_blocks; ++b) {
        make_res_block(path("down", i, "res", b), cur, ch, rng);
        if (cfg_.attention_levels.count(i)) make_attn_block(path("down", i, "attn", b), ch, rng);
        cur = ch;
        skip_stack.push_back(ch);
      }
      if (i + 1 < cfg_.levels()) {
        make_conv(path("down", i, "down"), ch, ch, 3, rng);
        skip_stack.push_back(ch);
      }
    }
    make_res_block("mid.res", cur, cur, rng);

    for (int i = cfg_.levels() - 1; i >= 0; --i) {
      const int ch = cfg_.channels_at(i);
      for (int b = 0; b <= cfg_.num_res_blocks; ++b) {
        const int skip_ch = skip_stack.back();
        skip_stack.pop_back();
        make_res_block(path("up", i, "res", b), cur + skip_ch, ch, rng);
        if (cfg_.attention_levels.count(i)) make_attn_block(path("up", i, "attn", b), ch, rng);
        cur = ch;
      }
      if (i > 0) {
        make_conv(path("up", i, "out"), ch, cfg_.channels_at(i - 1), 3, rng);
        cur = cfg_.channels_at(i - 1);
      }
    }
    make_gn("out.gn", cur);
    make_conv("out.conv", cur, cfg_.in_channels, 3, rng, /*zero_init=*/true);
  }

  // Predicted noise for x (B, in_channels, S, S) at per-item timesteps t.
  // Binds every parameter onto the tape and returns the output node id.
  typename Tape<S>::Id forward(Tape<S>& tape, typename Tape<S>::Id x,
                               const std::vector<int>& t) {
    using Id = typename Tape<S>::Id;
    const Tensor<S>& xv = tape.value(x);
    if (xv.dims[1] != cfg_.in_channels) {
      throw ShapeMismatch("unet: input channels " + xv.shape_str());
    }
    if (xv.dims[0] != static_cast<int>(t.size())) {
      throw ShapeMismatch("unet: timestep batch size mismatch");
    }
    const int div = cfg_.spatial_divisor();
    if (xv.dims[2] % div != 0 || xv.dims[3] % div != 0 || xv.dims[2] < div || xv.dims[3] < div) {
      throw ShapeMismatch("unet: spatial dims must be divisible by " + std::to_string(div));
    }
    bound_.clear();

    Id temb = tape.input(time_embedding<S>(t, cfg_.time_embed_dim));
    temb = tape.linear(temb, bind(tape, "time.l1.w"), bind(tape, "time.l1.b"));
    temb = tape.linear(tape.silu(temb), bind(tape, "time.l2.w"), bind(tape, "time.l2.b"));

    Id h = tape.conv2d(x, bind(tape, "conv_in.w"), bind(tape, "conv_in.b"));
    std::vector<Id> skips{h};
    for (int i = 0; i < cfg_.levels(); ++i) {
      for (int b = 0; b < cfg_.num_res_blocks; ++b) {
        h = res_block(tape, path("down", i, "res", b), h, temb);
        if (cfg_.attention_levels.count(i)) h = attn_block(tape, path("down", i, "attn", b), h);
        skips.push_back(h);
      }
      if (i + 1 < cfg_.levels()) {
        h = tape.conv2d(h, bind(tape, path("down", i, "down") + ".w"),
                        bind(tape, path("down", i, "down") + ".b"), /*stride=*/2);
        skips.push_back(h);
      }
    }
    h = res_block(tape, "mid.res", h, temb);
    for (int i = cfg_.levels() - 1; i >= 0; --i) {
      for (int b = 0; b <= cfg_.num_res_blocks; ++b) {
        Id skip = skips.back();
        skips.pop_back();
        h = res_block(tape, path("up", i, "res", b), tape.concat_channels(h, skip), temb);
        if (cfg_.attention_levels.count(i)) h = attn_block(tape, path("up", i, "attn", b), h);
      }
      if (i > 0) {
        h = tape.upsample_nearest2x(h);
        h = tape.conv2d(h, bind(tape, path("up", i, "out") + ".w"),
                        bind(tape, path("up", i, "out") + ".b"));
      }
    }
    h = tape.silu(tape.group_norm(h, bind(tape, "out.gn.g"), bind(tape, "out.gn.b"),
                                  cfg_.groupnorm_groups));
    return tape.conv2d(h, bind(tape, "out.conv.w"), bind(tape, "out.conv.b"));
  }

  // Convenience forward on a private no-grad tape.
  Tensor<S> apply(const Tensor<S>& x, const std::vector<int>& t) {
    Tape<S> tape(false);
    return tape.value(forward(tape, tape.input(x), t));
  }

  // Gradients keyed like the parameter store, from the last forward's tape.
  ParamStore<S> collect_grads(const Tape<S>& tape) const {
    ParamStore<S> grads;
    for (const auto& [p, tensor] : params_) {
      const auto it = bound_.find(p);
      if (it != bound_.end() && tape.grad(it->second).size() > 0) {
        grads[p] = tape.grad(it->second);
      } else {
        grads[p] = Tensor<S>(tensor.dims[0], tensor.dims[1], tensor.dims[2], tensor.dims[3]);
      }
    }
    return grads;
  }

 private:
  UNetConfig cfg_;
  ParamStore<S> params_;
  std::map<std::string, typename Tape<S>::Id> bound_;

  static std::string path(const char* a, int i, const char* b, int j) {
    return std::string(a) + "." + std::to_string(i) + "." + b + std::to_string(j);
  }
  static std::string path(const char* a, int i, const char* b) {
    return std::string(a) + "." + std::to_string(i) + "." + b;
  }

  typename Tape<S>::Id bind(Tape<S>& tape, const std::string& p) {
    auto it = bound_.find(p);
    if (it != bound_.end()) return it->second;
    const auto pit = params_.find(p);
    if (pit == params_.end()) throw Error("unet: missing parameter " + p);
    const auto id = tape.param(pit->second);
    bound_.emplace(p, id);
    return id;
  }

  // ---- parameter creation ----

  Tensor<S> he_uniform(int n, int c, int h, int w, int fan_in, Rng& rng) {
    Tensor<S> t(n, c, h, w);
    const double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data[i] = static_cast<S>((2.0 * rng.uniform() - 1.0) * bound);
    }
    return t;
  }

  void make_conv(const std::string& prefix, int in, int out, int k, Rng& rng,
                 bool zero_init = false) {
    params_[prefix + ".w"] =
        zero_init ? Tensor<S>(out, in, k, k) : he_uniform(out, in, k, k, in * k * k, rng);
    params_[prefix + ".b"] = Tensor<S>(1, out, 1, 1);
  }

  void make_linear(const std::string& prefix, int in, int out, Rng& rng) {
    params_[prefix + ".w"] = he_uniform(out, in, 1, 1, in, rng);
    params_[prefix + ".b"] = Tensor<S>(1, out, 1, 1);
  }

  void make_gn(const std::string& prefix, int ch) {
    Tensor<S> g(1, ch, 1, 1);
    g.data.setConstant(S(1));
    params_[prefix + ".g"] = std::move(g);
    params_[prefix + ".b"] = Tensor<S>(1, ch, 1, 1);
  }

  void check_groups(int ch) const {
    if (ch % cfg_.groupnorm_groups != 0) {
      throw InvalidConfig("UNet: groupnorm_groups must divide channel count " +
                          std::to_string(ch));
    }
  }

  void make_res_block(const std::string& prefix, int in, int out, Rng& rng) {
    check_groups(in);
    check_groups(out);
    make_gn(prefix + ".gn1", in);
    make_conv(prefix + ".conv1", in, out, 3, rng);
    make_linear(prefix + ".temb", cfg_.time_embed_dim, out, rng);
    make_gn(prefix + ".gn2", out);
    make_conv(prefix + ".conv2", out, out, 3, rng);
    if (in != out) make_conv(prefix + ".skip", in, out, 1, rng);
  }

  void make_attn_block(const std::string& prefix, int ch, Rng& rng) {
    make_gn(prefix + ".gn", ch);
    make_conv(prefix + ".q", ch, ch, 1, rng);
    make_conv(prefix + ".k", ch, ch, 1, rng);
    make_conv(prefix + ".v", ch, ch, 1, rng);
    make_conv(prefix + ".proj", ch, ch, 1, rng, /*zero_init=*/true);
  }

  // ---- forward pieces ----

  typename Tape<S>::Id res_block(Tape<S>& tape, const std::string& prefix,
                                 typename Tape<S>::Id x, typename Tape<S>::Id temb) {
    using Id = typename Tape<S>::Id;
    const int in = tape.value(x).dims[1];
    const int out = tape.value(bind(tape, prefix + ".conv1.w")).dims[0];
    Id h = tape.silu(tape.group_norm(x, bind(tape, prefix + ".gn1.g"),
                                     bind(tape, prefix + ".gn1.b"), cfg_.groupnorm_groups));
    h = tape.conv2d(h, bind(tape, prefix + ".conv1.w"), bind(tape, prefix + ".conv1.b"));
    Id tproj = tape.linear(tape.silu(temb), bind(tape, prefix + ".temb.w"),
                           bind(tape, prefix + ".temb.b"));
    h = tape.add_bias(h, tproj);
    h = tape.silu(tape.group_norm(h, bind(tape, prefix + ".gn2.g"),
                                  bind(tape, prefix + ".gn2.b"), cfg_.groupnorm_groups));
    h = tape.conv2d(h, bind(tape, prefix + ".conv2.w"), bind(tape, prefix + ".conv2.b"));
    Id skip = (in == out) ? x
                          : tape.conv2d(x, bind(tape, prefix + ".skip.w"),
                                        bind(tape, prefix + ".skip.b"));
    return tape.add(h, skip);
  }

  typename Tape<S>::Id attn_block(Tape<S>& tape, const std::string& prefix,
                                  typename Tape<S>::Id x) {
    using Id = typename Tape<S>::Id;
    Id h = tape.group_norm(x, bind(tape, prefix + ".gn.g"), bind(tape, prefix + ".gn.b"),
                           cfg_.groupnorm_groups);
    Id q = tape.conv2d(h, bind(tape, prefix + ".q.w"), bind(tape, prefix + ".q.b"));
    Id k = tape.conv2d(h, bind(tape, prefix + ".k.w"), bind(tape, prefix + ".k.b"));
    Id v = tape.conv2d(h, bind(tape, prefix + ".v.w"), bind(tape, prefix + ".v.b"));
    Id o = tape.self_attention(q, k, v);
    o = tape.conv2d(o, bind(tape, prefix + ".proj.w"), bind(tape, prefix + ".proj.b"));
    return tape.add(x, o);
  }
};

}  // namespace terrafill::nn
