#pragma once

#include <cmath>
#include <map>
#include <string>

#include "terrafill/nn/unet.hpp"

namespace terrafill::nn {

template <class S>
struct AdamState {
  long step = 0;
  ParamStore<S> m;  // first moments
  ParamStore<S> v;  // second moments
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Moments are allocated lazily on the
// first step; shapes are checked against the incoming gradients.
template <class S>
void adam_step(ParamStore<S>& params, const ParamStore<S>& grads, AdamState<S>& state,
               const AdamConfig& cfg = {}) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [path, p] : params) {
    const auto git = grads.find(path);
    if (git == grads.end()) throw ShapeMismatch("adam_step: missing gradient for " + path);
    const Tensor<S>& g = git->second;
    if (!g.same_shape(p)) {
      throw ShapeMismatch("adam_step: gradient shape " + g.shape_str() + " vs param " +
                          p.shape_str() + " for " + path);
    }
    Tensor<S>& m = state.m.try_emplace(path, p.dims[0], p.dims[1], p.dims[2], p.dims[3])
                       .first->second;
    Tensor<S>& v = state.v.try_emplace(path, p.dims[0], p.dims[1], p.dims[2], p.dims[3])
                       .first->second;
    m.data = S(cfg.beta1) * m.data + S(1.0 - cfg.beta1) * g.data;
    v.data = S(cfg.beta2) * v.data + S(1.0 - cfg.beta2) * g.data.square();
    p.data -= S(cfg.lr) * (m.data / S(bc1)) / ((v.data / S(bc2)).sqrt() + S(cfg.eps));
  }
}

}  // namespace terrafill::nn
