#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "arl/config.hpp"

// Run state serialization. A checkpoint is taken at an episode boundary and
// restores training bit-for-bit: network and optimizer state, both replay
// buffers, every named random stream, and the schedule position. Layout:
//
//   "ARLCKPT1" | u32 version | u64 meta_len | meta JSON | blobs | "ARLEND!!"
//
// The meta JSON carries shapes, counters, stream states and the full run
// configuration; the blobs are raw little-endian doubles. The protagonist
// section precedes everything else so that evaluation-only consumers can stop
// reading after it.

namespace arl {

inline constexpr char kCkptMagic[8] = {'A', 'R', 'L', 'C', 'K', 'P', 'T', '1'};
inline constexpr char kCkptEnd[8] = {'A', 'R', 'L', 'E', 'N', 'D', '!', '!'};
inline constexpr std::uint32_t kCkptVersion = 1;

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void bytes(const char* p, size_t n) {
    out_.write(p, static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_);
  }

  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }

  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }

  void close() {
    out_.close();
    if (!out_) throw IoError("close failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
  }

  void bytes(char* p, size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw IoError("truncated checkpoint: " + path_);
  }

  std::uint32_t u32() {
    char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

namespace detail {

inline void write_params(BinWriter& w, const MlpParams& p) {
  for (int l = 0; l < p.n_layers(); ++l) {
    for (double v : p.weights[l].a) w.f64(v);
    for (double v : p.biases[l]) w.f64(v);
  }
}

inline void read_params(BinReader& r, MlpParams& p) {
  for (int l = 0; l < p.n_layers(); ++l) {
    for (double& v : p.weights[l].a) v = r.f64();
    for (double& v : p.biases[l]) v = r.f64();
  }
}

inline void write_grads(BinWriter& w, const MlpGrads& g) {
  for (size_t l = 0; l < g.weights.size(); ++l) {
    for (double v : g.weights[l].a) w.f64(v);
    for (double v : g.biases[l]) w.f64(v);
  }
}

inline void read_grads(BinReader& r, MlpGrads& g) {
  for (size_t l = 0; l < g.weights.size(); ++l) {
    for (double& v : g.weights[l].a) v = r.f64();
    for (double& v : g.biases[l]) v = r.f64();
  }
}

inline void write_agent(BinWriter& w, const SacAgent& a) {
  for (const MlpParams* p : {&a.policy, &a.q1, &a.q2, &a.q1_target, &a.q2_target})
    write_params(w, *p);
  for (const AdamState* o : {&a.opt_policy, &a.opt_q1, &a.opt_q2}) {
    write_grads(w, o->m);
    write_grads(w, o->v);
  }
  w.f64(a.log_alpha);
  w.f64(a.opt_alpha.m);
  w.f64(a.opt_alpha.v);
}

inline void read_agent(BinReader& r, SacAgent& a) {
  for (MlpParams* p : {&a.policy, &a.q1, &a.q2, &a.q1_target, &a.q2_target})
    read_params(r, *p);
  for (AdamState* o : {&a.opt_policy, &a.opt_q1, &a.opt_q2}) {
    read_grads(r, o->m);
    read_grads(r, o->v);
  }
  a.log_alpha = r.f64();
  a.opt_alpha.m = r.f64();
  a.opt_alpha.v = r.f64();
}

inline void write_buffer(BinWriter& w, const ReplayBuffer& buf) {
  for (size_t i = 0; i < buf.size(); ++i) {
    const Transition& t = buf.at(i);
    for (double v : t.s) w.f64(v);
    for (double v : t.a) w.f64(v);
    w.f64(t.r);
    for (double v : t.s_next) w.f64(v);
    w.f64(t.done ? 1.0 : 0.0);
  }
}

inline std::vector<Transition> read_buffer(BinReader& r, size_t n, int state_dim,
                                           int action_dim) {
  std::vector<Transition> data(n);
  for (Transition& t : data) {
    t.s.resize(static_cast<size_t>(state_dim));
    t.a.resize(static_cast<size_t>(action_dim));
    t.s_next.resize(static_cast<size_t>(state_dim));
    for (double& v : t.s) v = r.f64();
    for (double& v : t.a) v = r.f64();
    t.r = r.f64();
    for (double& v : t.s_next) v = r.f64();
    t.done = r.f64() != 0.0;
  }
  return data;
}

inline json agent_meta(const SacAgent& a) {
  json m;
  m["policy_layers"] = a.policy.layer_sizes;
  m["q_layers"] = a.q1.layer_sizes;
  m["grad_updates"] = a.grad_updates;
  m["adam_steps"] = {a.opt_policy.step_count, a.opt_q1.step_count,
                     a.opt_q2.step_count};
  m["alpha_step"] = a.opt_alpha.step_count;
  return m;
}

inline void apply_agent_meta(const json& m, SacAgent& a, const std::string& who,
                             const std::string& path) {
  if (m.at("policy_layers").get<std::vector<int>>() != a.policy.layer_sizes ||
      m.at("q_layers").get<std::vector<int>>() != a.q1.layer_sizes)
    throw IoError("checkpoint " + path + ": " + who +
                  " network shapes do not match the configured agent");
  a.grad_updates = m.at("grad_updates").get<std::uint64_t>();
  const auto steps = m.at("adam_steps").get<std::vector<long>>();
  if (steps.size() != 3)
    throw IoError("checkpoint " + path + ": malformed adam_steps");
  a.opt_policy.step_count = steps[0];
  a.opt_q1.step_count = steps[1];
  a.opt_q2.step_count = steps[2];
  a.opt_alpha.step_count = m.at("alpha_step").get<long>();
}

inline json stream_state(const RngStream& s) {
  const auto st = s.state();
  return json{st[0], st[1], st[2], st[3]};
}

inline void apply_stream_state(const json& j, RngStream& s) {
  const auto v = j.get<std::vector<std::uint64_t>>();
  if (v.size() != 4) throw IoError("checkpoint: malformed stream state");
  s.set_state({v[0], v[1], v[2], v[3]});
}

inline json buffer_meta(const ReplayBuffer& b) {
  return json{{"size", b.size()}, {"head", b.evict_slot()},
              {"inserted", b.inserted()}};
}

inline json phase_log_to_json(const PhaseLog& l) {
  json j;
  j["adversary_train_calls"] = l.adversary_train_calls;
  j["protagonist_train_calls"] = l.protagonist_train_calls;
  j["adversary_insertions"] = l.adversary_insertions;
  j["protagonist_insertions"] = l.protagonist_insertions;
  j["episodes"] = l.episodes;
  j["successes"] = l.successes;
  j["collisions"] = l.collisions;
  j["adversary_collisions"] = l.adversary_collisions;
  return j;
}

inline PhaseLog phase_log_from_json(const json& j) {
  PhaseLog l;
  l.adversary_train_calls = j.at("adversary_train_calls").get<std::uint64_t>();
  l.protagonist_train_calls = j.at("protagonist_train_calls").get<std::uint64_t>();
  l.adversary_insertions = j.at("adversary_insertions").get<std::uint64_t>();
  l.protagonist_insertions = j.at("protagonist_insertions").get<std::uint64_t>();
  l.episodes = j.at("episodes").get<std::uint64_t>();
  l.successes = j.at("successes").get<std::uint64_t>();
  l.collisions = j.at("collisions").get<std::uint64_t>();
  l.adversary_collisions = j.at("adversary_collisions").get<std::uint64_t>();
  return l;
}

inline json read_meta(BinReader& r) {
  char magic[8];
  r.bytes(magic, 8);
  for (int i = 0; i < 8; ++i)
    if (magic[i] != kCkptMagic[i])
      throw IoError("not a checkpoint file: " + r.path());
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  " in " + r.path());
  const std::uint64_t meta_len = r.u64();
  std::string meta_text(meta_len, '\0');
  r.bytes(meta_text.data(), meta_len);
  try {
    return json::parse(meta_text);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint metadata in " + r.path() + ": " +
                  e.what());
  }
}

}  // namespace detail

template <class Env>
void save_checkpoint(const std::string& path, const ArlTrainer<Env>& t,
                     const RunConfig& rc) {
  json meta;
  meta["version"] = kCkptVersion;
  meta["config"] = run_config_to_json(rc);
  meta["episode_cursor"] = t.episode_cursor;
  meta["state_dim"] = t.spec().state_dim;
  meta["action_dim"] = t.spec().action_dim;
  meta["log"] = detail::phase_log_to_json(t.log);
  const bool has_adversary = t.cfg.adversary_kind == AdversaryKind::learned;
  meta["has_adversary"] = has_adversary;
  meta["protagonist"] = detail::agent_meta(t.protagonist);
  if (has_adversary) meta["adversary"] = detail::agent_meta(t.adversary);
  meta["buffers"] = {{"protagonist", detail::buffer_meta(t.buffer_prot)},
                     {"adversary", detail::buffer_meta(t.buffer_adv)}};
  meta["streams"] = {{"env", detail::stream_state(t.env_rng)},
                     {"P.act", detail::stream_state(t.prot_act)},
                     {"P.train", detail::stream_state(t.prot_train)},
                     {"A.act", detail::stream_state(t.adv_act)},
                     {"A.train", detail::stream_state(t.adv_train)},
                     {"A.reward", detail::stream_state(t.adv_reward_rng)}};

  const std::string tmp = path + ".tmp";
  {
    BinWriter w(tmp);
    w.bytes(kCkptMagic, 8);
    w.u32(kCkptVersion);
    const std::string meta_text = meta.dump();
    w.u64(meta_text.size());
    w.bytes(meta_text.data(), meta_text.size());

    detail::write_agent(w, t.protagonist);
    detail::write_buffer(w, t.buffer_prot);
    if (has_adversary) detail::write_agent(w, t.adversary);
    detail::write_buffer(w, t.buffer_adv);
    w.bytes(kCkptEnd, 8);
    w.close();
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path + ": " +
                        ec.message());
}

template <class Env>
void load_checkpoint(const std::string& path, ArlTrainer<Env>& t) {
  BinReader r(path);
  const json meta = detail::read_meta(r);

  if (meta.at("state_dim").get<int>() != t.spec().state_dim ||
      meta.at("action_dim").get<int>() != t.spec().action_dim)
    throw IoError("checkpoint " + path +
                  ": environment dimensions do not match");
  const bool has_adversary = meta.at("has_adversary").get<bool>();
  if (has_adversary != (t.cfg.adversary_kind == AdversaryKind::learned))
    throw IoError("checkpoint " + path +
                  ": adversary kind does not match the configured run");

  detail::apply_agent_meta(meta.at("protagonist"), t.protagonist,
                           "protagonist", path);
  detail::read_agent(r, t.protagonist);

  const json& bufs = meta.at("buffers");
  const auto restore_buffer = [&](const json& bm, ReplayBuffer& buf) {
    const size_t n = bm.at("size").get<size_t>();
    if (n > buf.capacity())
      throw IoError("checkpoint " + path +
                    ": stored buffer exceeds the configured capacity");
    auto data = detail::read_buffer(r, n, t.spec().state_dim,
                                    t.spec().action_dim);
    buf.restore(bm.at("head").get<size_t>(),
                bm.at("inserted").get<std::uint64_t>(), std::move(data));
  };
  restore_buffer(bufs.at("protagonist"), t.buffer_prot);

  if (has_adversary) {
    detail::apply_agent_meta(meta.at("adversary"), t.adversary, "adversary",
                             path);
    detail::read_agent(r, t.adversary);
  }
  restore_buffer(bufs.at("adversary"), t.buffer_adv);

  char end[8];
  r.bytes(end, 8);
  for (int i = 0; i < 8; ++i)
    if (end[i] != kCkptEnd[i])
      throw IoError("checkpoint " + path + ": missing end marker");

  const json& streams = meta.at("streams");
  detail::apply_stream_state(streams.at("env"), t.env_rng);
  detail::apply_stream_state(streams.at("P.act"), t.prot_act);
  detail::apply_stream_state(streams.at("P.train"), t.prot_train);
  detail::apply_stream_state(streams.at("A.act"), t.adv_act);
  detail::apply_stream_state(streams.at("A.train"), t.adv_train);
  detail::apply_stream_state(streams.at("A.reward"), t.adv_reward_rng);

  t.log = detail::phase_log_from_json(meta.at("log"));
  t.episode_cursor = meta.at("episode_cursor").get<long>();
}

// What evaluation needs from a finished (or interrupted) run: the trained
// protagonist and the configuration that produced it.
struct LoadedRun {
  json config_json;
  RunConfig config;
  SacAgent protagonist;
  long episode_cursor = 0;
};

inline LoadedRun load_protagonist_checkpoint(const std::string& path) {
  BinReader r(path);
  const json meta = detail::read_meta(r);

  LoadedRun run;
  run.config_json = meta.at("config");
  run.config = run_config_from_json(run.config_json);
  finalize_run_config(run.config);
  run.episode_cursor = meta.at("episode_cursor").get<long>();

  const int sd = meta.at("state_dim").get<int>();
  const int ad = meta.at("action_dim").get<int>();
  RngStream scratch(0, "ckpt.load");  // immediately overwritten below
  run.protagonist = SacAgent(sd, ad, run.config.protagonist, scratch);
  detail::apply_agent_meta(meta.at("protagonist"), run.protagonist,
                           "protagonist", path);
  detail::read_agent(r, run.protagonist);
  return run;
}

}  // namespace arl
