#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <utility>
#include <vector>

#include "arl/nn.hpp"
#include "arl/rng.hpp"

namespace arl {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  int batch_size = 256;
  int grad_steps_per_env_step = 1;
  bool auto_entropy = true;
  double alpha = 0.2;           // fixed coefficient when auto_entropy = false
  double alpha_init = 0.2;      // starting coefficient when auto-tuning
  double target_entropy = 0.0;  // 0 means "use -action_dim"
  int buffer_capacity = 200000;
  std::vector<int> hidden{64, 64};

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw ConfigError("sac config: gamma must lie in (0,1)");
    if (!(tau > 0.0 && tau <= 1.0))
      throw ConfigError("sac config: tau must lie in (0,1]");
    if (!(lr > 0.0)) throw ConfigError("sac config: lr must be positive");
    if (batch_size < 1) throw ConfigError("sac config: batch_size must be >= 1");
    if (grad_steps_per_env_step < 1)
      throw ConfigError("sac config: grad_steps_per_env_step must be >= 1");
    if (buffer_capacity < 1)
      throw ConfigError("sac config: buffer_capacity must be >= 1");
    if (!auto_entropy && alpha < 0.0)
      throw ConfigError("sac config: fixed alpha must be >= 0");
    if (auto_entropy && !(alpha_init > 0.0))
      throw ConfigError("sac config: alpha_init must be positive");
    for (int h : hidden)
      if (h < 1) throw ConfigError("sac config: hidden sizes must be positive");
  }
};

struct Transition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  bool done = false;  // genuine terminal only, never a timeout
};

// Fixed-capacity FIFO ring with uniform sampling over current contents.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    require(capacity > 0, "replay buffer: capacity must be positive");
  }

  void insert(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++inserted_;
  }

  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  const Transition& at(size_t i) const { return data_[i]; }
  Transition& at(size_t i) { return data_[i]; }

  const Transition& sample(RngStream& rng) const {
    require(!data_.empty(), "replay buffer: sampling from empty buffer");
    return data_[rng.uniform_index(data_.size())];
  }

  size_t sample_index(RngStream& rng) const {
    require(!data_.empty(), "replay buffer: sampling from empty buffer");
    return static_cast<size_t>(rng.uniform_index(data_.size()));
  }

  // Raw slot layout, exposed so checkpoints can restore the ring exactly.
  size_t evict_slot() const { return head_; }
  void restore(size_t head, std::uint64_t inserted, std::vector<Transition> data) {
    require(data.size() <= capacity_, "replay buffer: restore exceeds capacity");
    require(head < std::max<size_t>(1, data.size()) || head == 0,
            "replay buffer: restore head out of range");
    head_ = head;
    inserted_ = inserted;
    data_ = std::move(data);
  }

 private:
  size_t capacity_;
  size_t head_ = 0;  // next eviction slot once full
  std::uint64_t inserted_ = 0;
  std::vector<Transition> data_;
};

struct Batch {
  BatchMat S, A, S2;
  Vec r;
  std::vector<std::uint8_t> done;
  int count = 0;
};

inline Batch sample_batch(const ReplayBuffer& buf, int n, RngStream& rng) {
  require(n > 0, "sample_batch: n must be positive");
  const int sd = static_cast<int>(buf.at(0).s.size());
  const int ad = static_cast<int>(buf.at(0).a.size());
  Batch b;
  b.count = n;
  b.S = BatchMat(sd, n);
  b.A = BatchMat(ad, n);
  b.S2 = BatchMat(sd, n);
  b.r.resize(n);
  b.done.resize(n);
  for (int i = 0; i < n; ++i) {
    const Transition& t = buf.at(buf.sample_index(rng));
    b.S.set_column(i, t.s);
    b.A.set_column(i, t.a);
    b.S2.set_column(i, t.s_next);
    b.r[i] = t.r;
    b.done[i] = t.done ? 1 : 0;
  }
  return b;
}

// Batched squashed-Gaussian evaluation of a policy network.
struct PolicySample {
  BatchMat mean;          // (ad, n)
  BatchMat log_std_raw;   // pre-clamp, needed for the clamp derivative
  BatchMat actions;       // tanh(u)
  BatchMat pre_tanh;      // u = mean + exp(clamped log_std) * noise
  Vec log_prob;           // per sample
};

inline PolicySample policy_sample(const MlpParams& policy, const BatchMat& S,
                                  const BatchMat& noise,
                                  MlpBatchCache* cache = nullptr) {
  const int n = S.count;
  const int ad = noise.dim;
  BatchMat out = mlp_forward(policy, S, cache);
  require(out.dim == 2 * ad, "policy_sample: policy output/action dim mismatch");
  PolicySample ps;
  ps.mean = BatchMat(ad, n);
  ps.log_std_raw = BatchMat(ad, n);
  ps.actions = BatchMat(ad, n);
  ps.pre_tanh = BatchMat(ad, n);
  ps.log_prob.assign(n, 0.0);
  const double cap = std::nextafter(1.0, 0.0);
  for (int d = 0; d < ad; ++d) {
    const double* mrow = out.feature(d);
    const double* lrow = out.feature(ad + d);
    const double* nrow = noise.feature(d);
    for (int s = 0; s < n; ++s) {
      const double mean = mrow[s];
      const double raw = lrow[s];
      const double ls = std::clamp(raw, kLogStdMin, kLogStdMax);
      const double sd = std::exp(ls);
      const double u = mean + sd * nrow[s];
      const double t = std::clamp(std::tanh(u), -cap, cap);
      ps.mean.at(d, s) = mean;
      ps.log_std_raw.at(d, s) = raw;
      ps.pre_tanh.at(d, s) = u;
      ps.actions.at(d, s) = t;
      ps.log_prob[s] += -0.5 * kLogTwoPi - ls - 0.5 * nrow[s] * nrow[s] -
                        std::log(1.0 - t * t + kSquashEps);
    }
  }
  return ps;
}

// Soft actor-critic learner. Twin online critics with polyak-averaged target
// copies, a squashed-Gaussian policy, and optional entropy auto-tuning on
// log_alpha. Used for both the protagonist and the adversary.
struct SacAgent {
  SacConfig cfg;
  int state_dim = 0;
  int action_dim = 0;
  MlpParams policy, q1, q2, q1_target, q2_target;
  AdamState opt_policy, opt_q1, opt_q2;
  double log_alpha = 0.0;
  ScalarAdam opt_alpha;
  double target_entropy = 0.0;
  std::uint64_t grad_updates = 0;

  // Optional rewrite of each sampled batch before targets are formed
  // (reward relabeling). Any draws it makes land between index sampling and
  // the bootstrap noise; when unset the draw order is unchanged.
  std::function<void(Batch&, RngStream&)> batch_hook;

  SacAgent() = default;

  SacAgent(int sdim, int adim, const SacConfig& c, RngStream& init_rng)
      : cfg(c), state_dim(sdim), action_dim(adim) {
    cfg.validate();
    std::vector<int> pol_sizes{sdim};
    std::vector<int> q_sizes{sdim + adim};
    for (int h : cfg.hidden) {
      pol_sizes.push_back(h);
      q_sizes.push_back(h);
    }
    pol_sizes.push_back(2 * adim);
    q_sizes.push_back(1);
    policy = make_mlp(pol_sizes, init_rng);
    q1 = make_mlp(q_sizes, init_rng);
    q2 = make_mlp(q_sizes, init_rng);
    q1_target = q1;
    q2_target = q2;
    const AdamConfig ac{cfg.lr, 0.9, 0.999, 1e-8};
    opt_policy = AdamState::init(policy, ac);
    opt_q1 = AdamState::init(q1, ac);
    opt_q2 = AdamState::init(q2, ac);
    opt_alpha.cfg = ac;
    log_alpha = std::log(cfg.alpha_init);
    target_entropy =
        cfg.target_entropy != 0.0 ? cfg.target_entropy : -static_cast<double>(adim);
  }

  double alpha_ent() const {
    return cfg.auto_entropy ? std::exp(log_alpha) : cfg.alpha;
  }

  GaussianHead head_at(const Vec& s) const {
    return split_policy_output(mlp_forward(policy, s));
  }

  // Stochastic mode consumes action_dim normal draws; deterministic consumes
  // nothing and returns the squashed mean.
  Vec act(const Vec& s, bool deterministic, RngStream& rng) const {
    GaussianHead h = head_at(s);
    if (deterministic) return tanh_mean_action(h);
    Vec noise(h.mean.size());
    rng.fill_normal(noise);
    return squashed_gaussian_sample(h, noise).action;
  }

  // One-sample soft state value: min over online critics at a fresh policy
  // sample, entropy-corrected.
  double soft_value(const Vec& s, const Vec& noise) const {
    GaussianHead h = head_at(s);
    SquashedSample sample = squashed_gaussian_sample(h, noise);
    Vec x(s);
    x.insert(x.end(), sample.action.begin(), sample.action.end());
    const double v1 = mlp_forward(q1, x)[0];
    const double v2 = mlp_forward(q2, x)[0];
    return std::min(v1, v2) - alpha_ent() * sample.log_prob;
  }

  // Bootstrap targets y = r + gamma * (1-done) * (min target-critic - alpha *
  // log pi) at s'. Treated as constants by the critic update.
  Vec critic_targets(const Batch& b, const BatchMat& noise2) const {
    PolicySample ps = policy_sample(policy, b.S2, noise2);
    BatchMat X2 = concat_rows(b.S2, ps.actions);
    BatchMat t1 = mlp_forward(q1_target, X2);
    BatchMat t2 = mlp_forward(q2_target, X2);
    const double a = alpha_ent();
    Vec y(b.count);
    for (int i = 0; i < b.count; ++i) {
      const double soft =
          std::min(t1.at(0, i), t2.at(0, i)) - a * ps.log_prob[i];
      y[i] = b.r[i] + cfg.gamma * (b.done[i] ? 0.0 : 1.0) * soft;
    }
    return y;
  }

  // Mean squared error of both critics against fixed targets; accumulates
  // parameter gradients. Loss = mean((q1-y)^2) + mean((q2-y)^2).
  double critic_loss_and_grads(const Batch& b, const Vec& y, MlpGrads* g1,
                               MlpGrads* g2) const {
    BatchMat X = concat_rows(b.S, b.A);
    MlpBatchCache c1, c2;
    BatchMat v1 = mlp_forward(q1, X, g1 ? &c1 : nullptr);
    BatchMat v2 = mlp_forward(q2, X, g2 ? &c2 : nullptr);
    const double inv_n = 1.0 / b.count;
    double loss = 0.0;
    BatchMat u1(1, b.count), u2(1, b.count);
    for (int i = 0; i < b.count; ++i) {
      const double e1 = v1.at(0, i) - y[i];
      const double e2 = v2.at(0, i) - y[i];
      loss += (e1 * e1 + e2 * e2) * inv_n;
      u1.at(0, i) = 2.0 * e1 * inv_n;
      u2.at(0, i) = 2.0 * e2 * inv_n;
    }
    if (g1) mlp_backprop(q1, c1, u1, *g1);
    if (g2) mlp_backprop(q2, c2, u2, *g2);
    return loss;
  }

  double critic_loss(const Batch& b, const Vec& y) const {
    return critic_loss_and_grads(b, y, nullptr, nullptr);
  }

  // Actor objective mean(alpha * log pi - min(q1,q2)) under reparameterized
  // samples; gradients flow into the policy through both the density and the
  // critics' action inputs, never into critic parameters. Also emits the
  // entropy-coefficient gradient d/dlog_alpha of -log_alpha * mean(log pi +
  // target_entropy).
  double actor_loss_and_grads(const Batch& b, const BatchMat& noise,
                              MlpGrads* gpol, double* alpha_grad) const {
    const int n = b.count;
    const int ad = action_dim;
    MlpBatchCache pol_cache;
    PolicySample ps = policy_sample(policy, b.S, noise, gpol ? &pol_cache : nullptr);
    BatchMat X = concat_rows(b.S, ps.actions);
    MlpBatchCache c1, c2;
    BatchMat v1 = mlp_forward(q1, X, gpol ? &c1 : nullptr);
    BatchMat v2 = mlp_forward(q2, X, gpol ? &c2 : nullptr);

    const double a = alpha_ent();
    const double inv_n = 1.0 / n;
    double loss = 0.0;
    double mean_logp = 0.0;
    for (int i = 0; i < n; ++i) {
      loss += (a * ps.log_prob[i] - std::min(v1.at(0, i), v2.at(0, i))) * inv_n;
      mean_logp += ps.log_prob[i] * inv_n;
    }
    if (alpha_grad) *alpha_grad = -(mean_logp + target_entropy);
    if (!gpol) return loss;

    // dL/da for the min-active critic only, with upstream -1/n per sample.
    BatchMat u1(1, n), u2(1, n);
    for (int i = 0; i < n; ++i) {
      const bool first = v1.at(0, i) <= v2.at(0, i);
      u1.at(0, i) = first ? -inv_n : 0.0;
      u2.at(0, i) = first ? 0.0 : -inv_n;
    }
    MlpGrads scratch1 = MlpGrads::zeros_like(q1);
    MlpGrads scratch2 = MlpGrads::zeros_like(q2);
    BatchMat dX1 = mlp_backprop(q1, c1, u1, scratch1);
    BatchMat dX2 = mlp_backprop(q2, c2, u2, scratch2);

    // Upstream on the policy outputs: first ad rows are means, next ad rows
    // raw log stds (zero gradient where the clamp is active).
    BatchMat upstream(2 * ad, n);
    for (int d = 0; d < ad; ++d) {
      for (int i = 0; i < n; ++i) {
        const double t = ps.actions.at(d, i);
        const double one_m_t2 = 1.0 - t * t;
        const double guard = one_m_t2 + kSquashEps;
        const double raw = ps.log_std_raw.at(d, i);
        const bool clamped = raw <= kLogStdMin || raw >= kLogStdMax;
        const double sd = std::exp(std::clamp(raw, kLogStdMin, kLogStdMax));
        const double eps_i = noise.at(d, i);
        const double dQ_da = dX1.at(state_dim + d, i) + dX2.at(state_dim + d, i);
        // d log pi / d mean and the tanh path d action / d mean = 1 - t^2.
        const double dlogp_dmean = 2.0 * t * one_m_t2 / guard;
        const double dmean = a * inv_n * dlogp_dmean + dQ_da * one_m_t2;
        // d log pi / d log_std = -1 + dlogp_dmean * sd * eps; action path
        // d action / d log_std = (1 - t^2) * sd * eps.
        const double dlogp_dls = -1.0 + dlogp_dmean * sd * eps_i;
        const double dls =
            clamped ? 0.0
                    : a * inv_n * dlogp_dls + dQ_da * one_m_t2 * sd * eps_i;
        upstream.at(d, i) = dmean;
        upstream.at(ad + d, i) = dls;
      }
    }
    mlp_backprop(policy, pol_cache, upstream, *gpol);
    return loss;
  }

  double actor_loss(const Batch& b, const BatchMat& noise) const {
    return actor_loss_and_grads(b, noise, nullptr, nullptr);
  }

  // One gradient step on a sampled batch: critics, then actor (+ entropy
  // coefficient), then polyak target tracking. Draw order from `rng`: batch
  // indices, bootstrap noise, actor noise.
  void train_step(const ReplayBuffer& buf, RngStream& rng) {
    Batch b = sample_batch(buf, cfg.batch_size, rng);
    if (batch_hook) batch_hook(b, rng);
    BatchMat noise2(action_dim, b.count);
    for (double& v : noise2.v) v = rng.normal();
    Vec y = critic_targets(b, noise2);
    MlpGrads g1 = MlpGrads::zeros_like(q1);
    MlpGrads g2 = MlpGrads::zeros_like(q2);
    const double closs = critic_loss_and_grads(b, y, &g1, &g2);
    if (!std::isfinite(closs))
      throw DivergenceError("sac: critic loss is not finite", -1);
    adam_step(opt_q1, q1, g1);
    adam_step(opt_q2, q2, g2);

    BatchMat noise(action_dim, b.count);
    for (double& v : noise.v) v = rng.normal();
    MlpGrads gp = MlpGrads::zeros_like(policy);
    double alpha_grad = 0.0;
    const double aloss = actor_loss_and_grads(b, noise, &gp, &alpha_grad);
    if (!std::isfinite(aloss))
      throw DivergenceError("sac: actor loss is not finite", -1);
    adam_step(opt_policy, policy, gp);
    if (cfg.auto_entropy) adam_step(opt_alpha, log_alpha, alpha_grad);

    polyak_update();
    ++grad_updates;
  }

  // Per-environment-step hook: no-op until the buffer can fill a batch.
  void train_env_step(const ReplayBuffer& buf, RngStream& rng) {
    if (buf.size() < static_cast<size_t>(cfg.batch_size)) return;
    for (int i = 0; i < cfg.grad_steps_per_env_step; ++i) train_step(buf, rng);
  }

  void polyak_update() {
    polyak(q1_target, q1, cfg.tau);
    polyak(q2_target, q2, cfg.tau);
  }

  // tau = 0 is rejected at the config level but remains a valid no-op here.
  static void polyak(MlpParams& target, const MlpParams& online, double tau) {
    require(tau >= 0.0 && tau <= 1.0, "polyak: tau must lie in [0,1]");
    mix(target, online, tau);
  }

  // FNV over the raw bit patterns of every learnable parameter.
  std::uint64_t param_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mixin = [&h](const MlpParams& p) {
      for (const auto& w : p.weights)
        for (double x : w.a) hash_double(h, x);
      for (const auto& bvec : p.biases)
        for (double x : bvec) hash_double(h, x);
    };
    mixin(policy);
    mixin(q1);
    mixin(q2);
    mixin(q1_target);
    mixin(q2_target);
    hash_double(h, log_alpha);
    return h;
  }

 private:
  static BatchMat concat_rows(const BatchMat& top, const BatchMat& bottom) {
    require(top.count == bottom.count, "concat_rows: sample count mismatch");
    BatchMat out(top.dim + bottom.dim, top.count);
    std::copy(top.v.begin(), top.v.end(), out.v.begin());
    std::copy(bottom.v.begin(), bottom.v.end(),
              out.v.begin() + static_cast<long>(top.v.size()));
    return out;
  }

  static void mix(MlpParams& target, const MlpParams& online, double tau) {
    for (size_t l = 0; l < target.weights.size(); ++l) {
      for (size_t i = 0; i < target.weights[l].a.size(); ++i)
        target.weights[l].a[i] =
            tau * online.weights[l].a[i] + (1.0 - tau) * target.weights[l].a[i];
      for (size_t i = 0; i < target.biases[l].size(); ++i)
        target.biases[l][i] =
            tau * online.biases[l][i] + (1.0 - tau) * target.biases[l][i];
    }
  }

  static void hash_double(std::uint64_t& h, double x) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
};

}  // namespace arl
