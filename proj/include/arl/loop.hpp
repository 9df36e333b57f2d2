#pragma once

#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "arl/env.hpp"
#include "arl/sac.hpp"

namespace arl {

// Who controls the episode prefix: a trained steering policy, uniform noise
// (isolates the effect of learned steering), or nobody (plain protagonist
// training on the reset distribution).
enum class AdversaryKind { learned, random, none };

inline const char* adversary_kind_name(AdversaryKind k) {
  switch (k) {
    case AdversaryKind::learned: return "learned";
    case AdversaryKind::random: return "random";
    default: return "none";
  }
}

inline AdversaryKind adversary_kind_from_string(const std::string& s) {
  if (s == "learned") return AdversaryKind::learned;
  if (s == "random") return AdversaryKind::random;
  if (s == "none") return AdversaryKind::none;
  throw ConfigError("unknown adversary kind '" + s +
                    "' (expected learned|random|none)");
}

// Alternation schedule. Each of the `iterations` outer rounds runs
// `adversary_episodes` episodes in which only the adversary trains, then
// `protagonist_episodes` episodes in which only the protagonist trains.
// Every episode is an adversary prefix of `adversary_horizon` steps followed,
// without a reset, by up to `protagonist_horizon` protagonist steps.
struct ArlConfig {
  int iterations = 1;             // N
  int adversary_episodes = 1;     // K_A
  int protagonist_episodes = 1;   // K_P
  int adversary_horizon = 0;      // H_A
  int protagonist_horizon = 1;    // H_P
  AdversaryKind adversary_kind = AdversaryKind::learned;
  bool relabel_adversary_rewards = false;

  void validate() const {
    if (iterations < 1) throw ConfigError("arl config: iterations must be >= 1");
    if (adversary_episodes < 1)
      throw ConfigError("arl config: adversary_episodes must be >= 1");
    if (protagonist_episodes < 1)
      throw ConfigError("arl config: protagonist_episodes must be >= 1");
    if (adversary_horizon < 0)
      throw ConfigError("arl config: adversary_horizon must be >= 0");
    if (protagonist_horizon < 1)
      throw ConfigError("arl config: protagonist_horizon must be >= 1");
    if (adversary_kind == AdversaryKind::none && adversary_horizon != 0)
      throw ConfigError(
          "arl config: adversary_kind=none requires adversary_horizon=0");
  }

  long episodes_per_iteration() const {
    return static_cast<long>(adversary_episodes) + protagonist_episodes;
  }
  long total_episodes() const { return iterations * episodes_per_iteration(); }
};

// Monotone counters instrumenting the schedule: a "train call" is one
// invocation of the per-step training hook, counted whether or not the replay
// buffer was full enough for gradient steps to run.
struct PhaseLog {
  std::uint64_t adversary_train_calls = 0;
  std::uint64_t protagonist_train_calls = 0;
  std::uint64_t adversary_insertions = 0;
  std::uint64_t protagonist_insertions = 0;
  std::uint64_t episodes = 0;
  std::uint64_t successes = 0;
  std::uint64_t collisions = 0;            // while the protagonist controls
  std::uint64_t adversary_collisions = 0;  // while the adversary controls
};

// The steering reward: the worse the protagonist expects to do from s_next,
// the better for the adversary. Computed from the protagonist current at
// collection time; stored values go stale as the protagonist improves.
inline double adversary_reward(const SacAgent& protagonist, const Vec& s_next,
                               const Vec& noise) {
  return -protagonist.soft_value(s_next, noise);
}

inline Vec random_adversary_action(RngStream& rng, int action_dim) {
  Vec a(static_cast<size_t>(action_dim));
  for (double& x : a) x = rng.uniform(-1.0, 1.0);
  return a;
}

// One line of the per-episode metrics stream.
struct EpisodeRecord {
  long iteration = 0;
  char phase = 'P';
  long episode = 0;
  double prot_return = 0.0;
  double prot_return_disc = 0.0;
  double adv_return = 0.0;
  double adv_return_disc = 0.0;
  std::string termination;  // success | collision | adv_collision | timeout
  int adversary_steps = 0;
  int protagonist_steps = 0;
  size_t buffer_adversary = 0;
  size_t buffer_protagonist = 0;
};

inline std::string metrics_header() {
  return "iteration,phase,episode,return,return_discounted,adversary_return,"
         "adversary_return_discounted,termination,steps_adversary,"
         "steps_protagonist,buffer_adversary,buffer_protagonist";
}

inline std::string metrics_row(const EpisodeRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%ld,%c,%ld,%.17g,%.17g,%.17g,%.17g,%s,%d,%d,%zu,%zu",
                r.iteration, r.phase, r.episode, r.prot_return,
                r.prot_return_disc, r.adv_return, r.adv_return_disc,
                r.termination.c_str(), r.adversary_steps, r.protagonist_steps,
                r.buffer_adversary, r.buffer_protagonist);
  return std::string(buf);
}

// Orchestrates alternating adversary/protagonist training over a duck-typed
// environment (reset/step/state/spec/set_success_detection/
// begin_protagonist_segment). Deterministic given the seed: every consumer
// owns a named stream, so schedule changes in one component never shift draws
// in another.
template <class Env>
class ArlTrainer {
 public:
  Env env;
  ArlConfig cfg;
  SacAgent protagonist;
  SacAgent adversary;  // unused shell unless adversary_kind == learned
  ReplayBuffer buffer_prot;
  ReplayBuffer buffer_adv;
  RngStream env_rng, prot_act, prot_train, adv_act, adv_train, adv_reward_rng;
  PhaseLog log;
  std::vector<EpisodeRecord> history;
  std::ostream* metrics = nullptr;  // caller writes the header
  std::function<void(const Vec&)> state_observer;  // every visited state
  long episode_cursor = 0;

  ArlTrainer(Env environment, const ArlConfig& arl_cfg,
             const SacConfig& protagonist_cfg, const SacConfig& adversary_cfg,
             std::uint64_t seed)
      : env(std::move(environment)),
        cfg(arl_cfg),
        buffer_prot(protagonist_cfg.buffer_capacity),
        buffer_adv(adversary_cfg.buffer_capacity),
        env_rng(seed, "env"),
        prot_act(seed, "P.act"),
        prot_train(seed, "P.train"),
        adv_act(seed, "A.act"),
        adv_train(seed, "A.train"),
        adv_reward_rng(seed, "A.reward") {
    cfg.validate();
    spec_ = env.spec();
    RngStream prot_init(seed, "P.init");
    protagonist = SacAgent(spec_.state_dim, spec_.action_dim, protagonist_cfg,
                           prot_init);
    if (cfg.adversary_kind == AdversaryKind::learned) {
      RngStream adv_init(seed, "A.init");
      adversary =
          SacAgent(spec_.state_dim, spec_.action_dim, adversary_cfg, adv_init);
      if (cfg.relabel_adversary_rewards) {
        adversary.batch_hook = [this](Batch& b, RngStream& rng) {
          Vec noise(static_cast<size_t>(spec_.action_dim));
          for (int i = 0; i < b.count; ++i) {
            if (b.done[i]) continue;  // keep stored collision penalties
            rng.fill_normal(noise);
            b.r[i] = adversary_reward(protagonist, b.S2.column(i), noise);
          }
        };
      }
    }
  }

  // The installed batch hook captures `this`.
  ArlTrainer(const ArlTrainer&) = delete;
  ArlTrainer& operator=(const ArlTrainer&) = delete;

  const EnvSpec& spec() const { return spec_; }
  bool done() const { return episode_cursor >= cfg.total_episodes(); }

  long iteration_of(long ep) const { return ep / cfg.episodes_per_iteration(); }

  // With no adversary every episode belongs to the protagonist, so the run
  // degenerates to plain training on the reset distribution at an unchanged
  // episode budget.
  char phase_of(long ep) const {
    if (cfg.adversary_kind == AdversaryKind::none) return 'P';
    return ep % cfg.episodes_per_iteration() < cfg.adversary_episodes ? 'A'
                                                                      : 'P';
  }

  void run_one_episode() {
    require(!done(), "arl trainer: schedule already finished");
    const long ep = episode_cursor;
    const char phase = phase_of(ep);

    EpisodeRecord rec;
    rec.iteration = iteration_of(ep);
    rec.phase = phase;
    rec.episode = ep;

    env.reset(ResetDist{}, env_rng);
    if (state_observer) state_observer(env.state());

    Terminal cause = Terminal::none;
    bool adversary_caused = false;

    if (cfg.adversary_horizon > 0) {
      env.set_success_detection(false);
      const double gamma =
          cfg.adversary_kind == AdversaryKind::learned ? adversary.cfg.gamma
                                                       : protagonist.cfg.gamma;
      double gpow = 1.0;
      Vec noise(static_cast<size_t>(spec_.action_dim));
      for (int t = 0; t < cfg.adversary_horizon; ++t) {
        Vec s = env.state();
        Vec a = cfg.adversary_kind == AdversaryKind::learned
                    ? adversary.act(s, false, adv_act)
                    : random_adversary_action(adv_act, spec_.action_dim);
        StepResult res = env.step(a);
        require(res.terminal != Terminal::success,
                "adversary segment: success detection must be suppressed");
        ++rec.adversary_steps;
        if (state_observer) state_observer(res.s_next);

        double r;
        bool done_flag;
        if (res.terminal == Terminal::collision) {
          r = res.reward;  // the environment's penalty, not the value bounty
          done_flag = true;
        } else {
          adv_reward_rng.fill_normal(noise);
          r = adversary_reward(protagonist, res.s_next, noise);
          done_flag = false;
        }
        buffer_adv.insert({s, a, r, res.s_next, done_flag});
        ++log.adversary_insertions;
        rec.adv_return += r;
        rec.adv_return_disc += gpow * r;
        gpow *= gamma;

        if (phase == 'A' && cfg.adversary_kind == AdversaryKind::learned) {
          adversary.train_env_step(buffer_adv, adv_train);
          ++log.adversary_train_calls;
        }
        if (res.terminal == Terminal::collision) {
          cause = Terminal::collision;
          adversary_caused = true;
          break;
        }
      }
    }

    if (cause == Terminal::none) {
      env.set_success_detection(true);
      env.begin_protagonist_segment();
      double gpow = 1.0;
      for (int t = 0; t < cfg.protagonist_horizon; ++t) {
        Vec s = env.state();
        Vec a = protagonist.act(s, false, prot_act);
        StepResult res = env.step(a);
        ++rec.protagonist_steps;
        if (state_observer) state_observer(res.s_next);
        const bool done_flag = res.terminal != Terminal::none;
        buffer_prot.insert({s, a, res.reward, res.s_next, done_flag});
        ++log.protagonist_insertions;
        rec.prot_return += res.reward;
        rec.prot_return_disc += gpow * res.reward;
        gpow *= protagonist.cfg.gamma;
        if (phase == 'P') {
          protagonist.train_env_step(buffer_prot, prot_train);
          ++log.protagonist_train_calls;
        }
        if (done_flag) {
          cause = res.terminal;
          break;
        }
      }
    }

    ++log.episodes;
    if (cause == Terminal::success) {
      ++log.successes;
      rec.termination = "success";
    } else if (cause == Terminal::collision) {
      if (adversary_caused) {
        ++log.adversary_collisions;
        rec.termination = "adv_collision";
      } else {
        ++log.collisions;
        rec.termination = "collision";
      }
    } else {
      rec.termination = "timeout";
    }
    rec.buffer_adversary = buffer_adv.size();
    rec.buffer_protagonist = buffer_prot.size();

    if (metrics) *metrics << metrics_row(rec) << '\n';
    history.push_back(std::move(rec));
    ++episode_cursor;
  }

  void run_all() {
    while (!done()) run_one_episode();
  }

 private:
  EnvSpec spec_;
};

struct PlainSacResult {
  SacAgent agent;
  PhaseLog log;
  std::vector<EpisodeRecord> history;
};

// Standalone reference loop: reset, act, store, train, every episode. Uses
// the same stream names as the trainer so a degenerate adversary schedule can
// be checked against it draw for draw.
template <class Env>
PlainSacResult train_plain_sac(Env env, const SacConfig& sac_cfg, long episodes,
                               int horizon, std::uint64_t seed,
                               std::ostream* metrics = nullptr,
                               long episodes_per_iteration = 1,
                               const std::function<void(const Vec&)>& observer = {}) {
  require(episodes >= 1, "plain sac: episodes must be >= 1");
  require(horizon >= 1, "plain sac: horizon must be >= 1");
  require(episodes_per_iteration >= 1,
          "plain sac: episodes_per_iteration must be >= 1");
  const EnvSpec spec = env.spec();
  RngStream env_rng(seed, "env");
  RngStream act_rng(seed, "P.act");
  RngStream train_rng(seed, "P.train");
  RngStream init_rng(seed, "P.init");

  PlainSacResult out;
  out.agent = SacAgent(spec.state_dim, spec.action_dim, sac_cfg, init_rng);
  ReplayBuffer buf(sac_cfg.buffer_capacity);

  for (long ep = 0; ep < episodes; ++ep) {
    EpisodeRecord rec;
    rec.iteration = ep / episodes_per_iteration;
    rec.phase = 'P';
    rec.episode = ep;

    env.reset(ResetDist{}, env_rng);
    if (observer) observer(env.state());
    Terminal cause = Terminal::none;
    double gpow = 1.0;
    for (int t = 0; t < horizon; ++t) {
      Vec s = env.state();
      Vec a = out.agent.act(s, false, act_rng);
      StepResult res = env.step(a);
      ++rec.protagonist_steps;
      if (observer) observer(res.s_next);
      const bool done_flag = res.terminal != Terminal::none;
      buf.insert({s, a, res.reward, res.s_next, done_flag});
      ++out.log.protagonist_insertions;
      rec.prot_return += res.reward;
      rec.prot_return_disc += gpow * res.reward;
      gpow *= out.agent.cfg.gamma;
      out.agent.train_env_step(buf, train_rng);
      ++out.log.protagonist_train_calls;
      if (done_flag) {
        cause = res.terminal;
        break;
      }
    }

    ++out.log.episodes;
    if (cause == Terminal::success) {
      ++out.log.successes;
      rec.termination = "success";
    } else if (cause == Terminal::collision) {
      ++out.log.collisions;
      rec.termination = "collision";
    } else {
      rec.termination = "timeout";
    }
    rec.buffer_protagonist = buf.size();
    if (metrics) *metrics << metrics_row(rec) << '\n';
    out.history.push_back(std::move(rec));
  }
  return out;
}

}  // namespace arl
