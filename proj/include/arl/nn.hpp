#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "arl/linalg.hpp"
#include "arl/rng.hpp"

namespace arl {

// Numerical-stability constants used by the squashed-Gaussian policy head.
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;
inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

// ---- dense feedforward network ----

// Plain value type holding a fully-connected net. Hidden layers use the
// rectifier, the output layer is linear. weights[i] has shape
// (layer_sizes[i+1], layer_sizes[i]).
struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  int in_dim() const { return layer_sizes.front(); }
  int out_dim() const { return layer_sizes.back(); }
  int n_layers() const { return static_cast<int>(weights.size()); }
};

// Uniform +-1/sqrt(fan_in) weights, zero biases. Keeps initial outputs near
// zero so early value estimates (and thus early adversary rewards) start
// near zero.
inline MlpParams make_mlp(const std::vector<int>& layer_sizes, RngStream& rng) {
  require(layer_sizes.size() >= 2, "make_mlp: need at least input and output layer");
  for (int n : layer_sizes) require(n > 0, "make_mlp: layer sizes must be positive");
  MlpParams p;
  p.layer_sizes = layer_sizes;
  for (size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    Matrix w(layer_sizes[i + 1], layer_sizes[i]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer_sizes[i]));
    for (double& x : w.a) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(layer_sizes[i + 1], 0.0);
  }
  return p;
}

// Gradient (or moment) container mirroring MlpParams shapes.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;

  static MlpGrads zeros_like(const MlpParams& p) {
    MlpGrads g;
    for (int i = 0; i < p.n_layers(); ++i) {
      g.weights.emplace_back(p.weights[i].rows, p.weights[i].cols);
      g.biases.emplace_back(p.biases[i].size(), 0.0);
    }
    return g;
  }

  void scale(double f) {
    for (auto& w : weights)
      for (double& x : w.a) x *= f;
    for (auto& b : biases)
      for (double& x : b) x *= f;
  }
};

// Post-activation values per layer; acts[0] is the input copy.
struct MlpCache {
  std::vector<Vec> acts;
};

struct MlpBatchCache {
  std::vector<BatchMat> acts;
};

inline Vec mlp_forward(const MlpParams& p, const Vec& x, MlpCache* cache = nullptr) {
  require(static_cast<int>(x.size()) == p.in_dim(), "mlp_forward: input dim mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  Vec cur = x;
  Vec next;
  for (int i = 0; i < p.n_layers(); ++i) {
    matvec_add(p.weights[i], cur, p.biases[i], next);
    if (i + 1 < p.n_layers())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur = next;
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

inline BatchMat mlp_forward(const MlpParams& p, const BatchMat& x,
                            MlpBatchCache* cache = nullptr) {
  require(x.dim == p.in_dim(), "mlp_forward: batch input dim mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  BatchMat cur = x;
  BatchMat next;
  for (int i = 0; i < p.n_layers(); ++i) {
    matmul_add(p.weights[i], cur, p.biases[i], next);
    if (i + 1 < p.n_layers())
      for (double& v : next.v) v = v > 0.0 ? v : 0.0;
    cur = next;
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

// Exact gradients of (upstream . output) w.r.t. parameters and input, given
// the cache of a matching forward pass. Parameter gradients accumulate into
// `grads`; the return value is the input gradient.
inline Vec mlp_backprop(const MlpParams& p, const MlpCache& cache,
                        const Vec& upstream, MlpGrads& grads) {
  require(cache.acts.size() == static_cast<size_t>(p.n_layers()) + 1,
          "mlp_backprop: cache does not match network depth");
  require(static_cast<int>(upstream.size()) == p.out_dim(),
          "mlp_backprop: upstream dim mismatch");
  Vec g = upstream;
  for (int i = p.n_layers() - 1; i >= 0; --i) {
    const Vec& a_prev = cache.acts[i];
    Matrix& dw = grads.weights[i];
    Vec& db = grads.biases[i];
    Vec g_prev(p.weights[i].cols, 0.0);
    for (int j = 0; j < p.weights[i].rows; ++j) {
      const double gj = g[j];
      db[j] += gj;
      double* dwr = dw.row(j);
      const double* wr = p.weights[i].row(j);
      for (int k = 0; k < p.weights[i].cols; ++k) {
        dwr[k] += gj * a_prev[k];
        g_prev[k] += wr[k] * gj;
      }
    }
    if (i > 0) {
      // g_prev is w.r.t. acts[i], the rectified output of layer i-1; the
      // rectifier derivative is recovered from the post-activation sign.
      const Vec& a = cache.acts[i];
      for (size_t k = 0; k < g_prev.size(); ++k)
        if (a[k] <= 0.0) g_prev[k] = 0.0;
    }
    g = std::move(g_prev);
  }
  return g;
}

// Batched variant; parameter gradients are summed over the batch. Returns the
// per-sample input gradients.
inline BatchMat mlp_backprop(const MlpParams& p, const MlpBatchCache& cache,
                             const BatchMat& upstream, MlpGrads& grads) {
  require(cache.acts.size() == static_cast<size_t>(p.n_layers()) + 1,
          "mlp_backprop: batch cache does not match network depth");
  require(upstream.dim == p.out_dim(), "mlp_backprop: batch upstream dim mismatch");
  const int n = upstream.count;
  BatchMat g = upstream;
  for (int i = p.n_layers() - 1; i >= 0; --i) {
    const BatchMat& a_prev = cache.acts[i];
    Matrix& dw = grads.weights[i];
    Vec& db = grads.biases[i];
    BatchMat g_prev(p.weights[i].cols, n);
    for (int j = 0; j < p.weights[i].rows; ++j) {
      const double* gj = g.feature(j);
      double acc_b = 0.0;
      for (int s = 0; s < n; ++s) acc_b += gj[s];
      db[j] += acc_b;
      double* dwr = dw.row(j);
      const double* wr = p.weights[i].row(j);
      for (int k = 0; k < p.weights[i].cols; ++k) {
        const double* ak = a_prev.feature(k);
        double acc_w = 0.0;
        for (int s = 0; s < n; ++s) acc_w += gj[s] * ak[s];
        dwr[k] += acc_w;
        double* gpk = g_prev.feature(k);
        const double wjk = wr[k];
        for (int s = 0; s < n; ++s) gpk[s] += wjk * gj[s];
      }
    }
    if (i > 0) {
      for (int k = 0; k < g_prev.dim; ++k) {
        double* gpk = g_prev.feature(k);
        const double* ak = cache.acts[i].feature(k);
        for (int s = 0; s < n; ++s)
          if (ak[s] <= 0.0) gpk[s] = 0.0;
      }
    }
    g = std::move(g_prev);
  }
  return g;
}

// ---- Adam ----

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step_count = 0;
  MlpGrads m;
  MlpGrads v;

  static AdamState init(const MlpParams& p, const AdamConfig& cfg) {
    AdamState s;
    s.cfg = cfg;
    s.m = MlpGrads::zeros_like(p);
    s.v = MlpGrads::zeros_like(p);
    return s;
  }
};

namespace detail {
inline void adam_update_span(double* p, const double* g, double* m, double* v,
                             size_t n, const AdamConfig& c, double bc1, double bc2,
                             int layer) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i]))
      throw DivergenceError("adam_step: non-finite gradient in layer " +
                                std::to_string(layer),
                            layer);
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}
}  // namespace detail

// Standard Adam with bias-corrected moments; step_count increments before the
// correction terms are formed.
inline void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
  require(grads.weights.size() == params.weights.size(),
          "adam_step: gradient/parameter layer count mismatch");
  state.step_count += 1;
  const AdamConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  for (int i = 0; i < params.n_layers(); ++i) {
    detail::adam_update_span(params.weights[i].a.data(), grads.weights[i].a.data(),
                             state.m.weights[i].a.data(), state.v.weights[i].a.data(),
                             params.weights[i].a.size(), c, bc1, bc2, i);
    detail::adam_update_span(params.biases[i].data(), grads.biases[i].data(),
                             state.m.biases[i].data(), state.v.biases[i].data(),
                             params.biases[i].size(), c, bc1, bc2, i);
  }
}

struct ScalarAdam {
  AdamConfig cfg;
  long step_count = 0;
  double m = 0.0;
  double v = 0.0;
};

inline void adam_step(ScalarAdam& state, double& param, double grad) {
  if (!std::isfinite(grad))
    throw DivergenceError("adam_step: non-finite scalar gradient", 0);
  state.step_count += 1;
  const AdamConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grad * grad;
  param -= c.lr * (state.m / bc1) / (std::sqrt(state.v / bc2) + c.eps);
}

// ---- squashed-Gaussian policy head ----

struct GaussianHead {
  Vec mean;
  Vec log_std;  // clamped to [kLogStdMin, kLogStdMax]
};

// Splits a policy-net output vector (first half means, second half raw log
// stds) and applies the clamp.
inline GaussianHead split_policy_output(const Vec& out) {
  require(out.size() % 2 == 0, "split_policy_output: output size must be even");
  const size_t d = out.size() / 2;
  GaussianHead h;
  h.mean.assign(out.begin(), out.begin() + d);
  h.log_std.assign(out.begin() + d, out.end());
  for (double& ls : h.log_std) ls = std::clamp(ls, kLogStdMin, kLogStdMax);
  return h;
}

struct SquashedSample {
  Vec action;    // strictly inside (-1, 1)^d
  Vec pre_tanh;  // u = mean + std * noise
  double log_prob = 0.0;
};

// action = tanh(mean + std * noise); log density includes the tanh
// change-of-variables correction with the kSquashEps guard.
inline SquashedSample squashed_gaussian_sample(const GaussianHead& head,
                                               const Vec& noise) {
  require(noise.size() == head.mean.size(),
          "squashed_gaussian_sample: noise dim mismatch");
  const size_t d = head.mean.size();
  SquashedSample r;
  r.action.resize(d);
  r.pre_tanh.resize(d);
  // tanh of a large argument rounds to exactly +-1 in doubles; cap one ulp
  // inside so actions genuinely stay in the open interval.
  const double cap = std::nextafter(1.0, 0.0);
  for (size_t i = 0; i < d; ++i) {
    const double std_i = std::exp(head.log_std[i]);
    const double u = head.mean[i] + std_i * noise[i];
    const double t = std::clamp(std::tanh(u), -cap, cap);
    r.pre_tanh[i] = u;
    r.action[i] = t;
    r.log_prob += -0.5 * kLogTwoPi - head.log_std[i] - 0.5 * noise[i] * noise[i] -
                  std::log(1.0 - t * t + kSquashEps);
  }
  return r;
}

inline Vec tanh_mean_action(const GaussianHead& head) {
  const double cap = std::nextafter(1.0, 0.0);
  Vec a(head.mean.size());
  for (size_t i = 0; i < a.size(); ++i)
    a[i] = std::clamp(std::tanh(head.mean[i]), -cap, cap);
  return a;
}

}  // namespace arl
