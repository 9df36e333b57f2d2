#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "arl/env.hpp"

namespace arl {

using Pt = std::array<double, 2>;
struct Segment {
  Pt a;
  Pt b;
};

// Planar 3-link arm carrying a hook polyline on its last link, entangled with
// a static ring polyline (a loop with a gap the hook can escape through).
struct ArmConfig {
  std::vector<double> link_lengths{0.4, 0.4, 0.3};
  Pt base{0.0, 0.0};
  double joint_limit = std::numbers::pi;  // symmetric per joint
  double max_joint_delta = 0.1;           // radians per step (action scale)
  int horizon = 50;
  double gamma = 0.99;

  int n_joints() const { return static_cast<int>(link_lengths.size()); }
};

struct Shapes {
  std::vector<Pt> hook;  // polyline in the end-effector frame
  std::vector<Pt> ring;  // polyline in the world frame
  Pt ring_center{0.0, 0.0};
};

struct Pose {
  double x = 0.0, y = 0.0, theta = 0.0;
};

// Cumulative-angle chain: joint i rotates everything after it.
inline std::vector<Pt> joint_positions(const ArmConfig& arm, const Vec& q) {
  require(q.size() == static_cast<size_t>(arm.n_joints()),
          "fk: joint vector dimension mismatch");
  std::vector<Pt> pts{arm.base};
  double theta = 0.0;
  Pt cur = arm.base;
  for (int i = 0; i < arm.n_joints(); ++i) {
    theta += q[i];
    cur = {cur[0] + arm.link_lengths[i] * std::cos(theta),
           cur[1] + arm.link_lengths[i] * std::sin(theta)};
    pts.push_back(cur);
  }
  return pts;
}

inline Pose end_effector(const ArmConfig& arm, const Vec& q) {
  auto pts = joint_positions(arm, q);
  double theta = 0.0;
  for (double qi : q) theta += qi;
  return {pts.back()[0], pts.back()[1], theta};
}

inline Pt transform(const Pose& p, const Pt& local) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return {p.x + c * local[0] - s * local[1], p.y + s * local[0] + c * local[1]};
}

inline std::vector<Pt> hook_world(const ArmConfig& arm, const Shapes& shapes,
                                  const Vec& q) {
  const Pose ee = end_effector(arm, q);
  std::vector<Pt> out;
  out.reserve(shapes.hook.size());
  for (const Pt& v : shapes.hook) out.push_back(transform(ee, v));
  return out;
}

// All moving segments: the links plus the hook polyline in world frame.
inline std::vector<Segment> fk_segments(const ArmConfig& arm, const Shapes& shapes,
                                        const Vec& q) {
  std::vector<Segment> segs;
  auto pts = joint_positions(arm, q);
  for (size_t i = 0; i + 1 < pts.size(); ++i) segs.push_back({pts[i], pts[i + 1]});
  auto hook = hook_world(arm, shapes, q);
  for (size_t i = 0; i + 1 < hook.size(); ++i)
    segs.push_back({hook[i], hook[i + 1]});
  return segs;
}

namespace detail {
inline double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}
inline bool on_segment(const Pt& p, const Pt& q, const Pt& r) {
  return std::min(p[0], r[0]) <= q[0] && q[0] <= std::max(p[0], r[0]) &&
         std::min(p[1], r[1]) <= q[1] && q[1] <= std::max(p[1], r[1]);
}
}  // namespace detail

// Closed-segment intersection; touching endpoints count.
inline bool segment_intersect(const Pt& p1, const Pt& p2, const Pt& p3,
                              const Pt& p4) {
  using detail::cross;
  using detail::on_segment;
  const double d1 = cross(p3, p4, p1);
  const double d2 = cross(p3, p4, p2);
  const double d3 = cross(p1, p2, p3);
  const double d4 = cross(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(p3, p1, p4)) return true;
  if (d2 == 0 && on_segment(p3, p2, p4)) return true;
  if (d3 == 0 && on_segment(p1, p3, p2)) return true;
  if (d4 == 0 && on_segment(p1, p4, p2)) return true;
  return false;
}

inline bool collides(const ArmConfig& arm, const Shapes& shapes, const Vec& q) {
  const auto moving = fk_segments(arm, shapes, q);
  for (const Segment& m : moving)
    for (size_t i = 0; i + 1 < shapes.ring.size(); ++i)
      if (segment_intersect(m.a, m.b, shapes.ring[i], shapes.ring[i + 1]))
        return true;
  return false;
}

// Distance between the objects: hook vertex centroid vs ring center.
inline double object_distance(const ArmConfig& arm, const Shapes& shapes,
                              const Vec& q) {
  const auto hook = hook_world(arm, shapes, q);
  require(!hook.empty(), "object_distance: hook polyline empty");
  double cx = 0.0, cy = 0.0;
  for (const Pt& v : hook) {
    cx += v[0];
    cy += v[1];
  }
  cx /= static_cast<double>(hook.size());
  cy /= static_cast<double>(hook.size());
  return std::hypot(cx - shapes.ring_center[0], cy - shapes.ring_center[1]);
}

// Collision penalty: the full discounted stream of maximal per-step penalties
// remaining from step t, so colliding early costs strictly more than late.
inline double collision_penalty(double gamma, int H, int t) {
  require(gamma < 1.0, "collision_penalty: gamma must be < 1");
  return -(1.0 - std::pow(gamma, H - t + 1)) / (1.0 - gamma);
}

inline constexpr double kDisentangleSuccessDistance = 0.5;

// One transition at segment-local step index t: clamp joints, then collision
// beats success beats the action-magnitude penalty (on the raw policy action).
inline std::pair<Vec, StepResult> dis_step(const ArmConfig& arm,
                                           const Shapes& shapes, const Vec& q,
                                           const Vec& action, int t,
                                           bool detect_success) {
  require(action.size() == static_cast<size_t>(arm.n_joints()),
          "dis step: action dimension mismatch");
  require(t >= 0 && t <= arm.horizon, "dis step: step index out of range");
  Vec q2(q.size());
  for (size_t i = 0; i < q.size(); ++i)
    q2[i] = std::clamp(q[i] + arm.max_joint_delta * action[i], -arm.joint_limit,
                       arm.joint_limit);
  StepResult r;
  r.s_next = q2;
  if (collides(arm, shapes, q2)) {
    r.reward = collision_penalty(arm.gamma, arm.horizon, t);
    r.terminal = Terminal::collision;
  } else if (detect_success &&
             object_distance(arm, shapes, q2) >= kDisentangleSuccessDistance) {
    r.reward = 1.0;
    r.terminal = Terminal::success;
  } else {
    r.reward = -l2_norm(action);
  }
  return {std::move(q2), r};
}

// Named joint configurations the environment resets to; test entries are
// perturbed copies of train entries.
struct Scenario {
  std::string name;
  Vec q;
  bool is_test = false;
};

struct ScenarioSet {
  std::vector<Scenario> train;
  std::vector<Scenario> test;
};

class DisentangleEnv {
 public:
  DisentangleEnv(ArmConfig arm, Shapes shapes, ScenarioSet scenarios)
      : arm_(std::move(arm)),
        shapes_(std::move(shapes)),
        scenarios_(std::move(scenarios)) {
    if (!(arm_.gamma > 0.0 && arm_.gamma < 1.0))
      throw ConfigError("disentangle env: gamma must lie in (0,1); the collision"
                        " penalty's closed form is singular at 1");
    require(!scenarios_.train.empty(), "disentangle env: no training scenarios");
    for (size_t i = 0; i + 1 < shapes_.hook.size(); ++i)
      require(shapes_.hook[i] != shapes_.hook[i + 1],
              "disentangle env: degenerate hook segment");
    for (size_t i = 0; i + 1 < shapes_.ring.size(); ++i)
      require(shapes_.ring[i] != shapes_.ring[i + 1],
              "disentangle env: degenerate ring segment");
  }

  EnvSpec spec() const {
    return {arm_.n_joints(), arm_.n_joints(),
            Vec(arm_.n_joints(), arm_.max_joint_delta), arm_.horizon};
  }
  const ArmConfig& arm() const { return arm_; }
  const Shapes& shapes() const { return shapes_; }
  const ScenarioSet& scenarios() const { return scenarios_; }

  bool valid_state(const Vec& s) const {
    if (s.size() != static_cast<size_t>(arm_.n_joints())) return false;
    for (double v : s)
      if (!std::isfinite(v) || std::abs(v) > arm_.joint_limit) return false;
    return true;
  }

  Vec reset(const ResetMode& mode, RngStream& rng) {
    terminal_ = Terminal::none;
    started_ = true;
    seg_t_ = 0;
    if (const auto* ex = std::get_if<ExplicitReset>(&mode)) {
      if (!valid_state(ex->state))
        throw ContractError("disentangle reset: explicit state outside joint limits");
      q_ = ex->state;
    } else if (std::holds_alternative<UniformReset>(mode)) {
      q_.assign(arm_.n_joints(), 0.0);
      for (double& v : q_) v = rng.uniform(-arm_.joint_limit, arm_.joint_limit);
    } else {
      q_ = scenarios_.train[rng.uniform_index(scenarios_.train.size())].q;
    }
    return q_;
  }

  StepResult step(const Vec& action) {
    require(started_, "disentangle step: called before reset");
    if (terminal_ != Terminal::none)
      throw ContractError("disentangle step: episode already terminal");
    auto [q2, r] = dis_step(arm_, shapes_, q_, action, seg_t_, detect_success_);
    q_ = std::move(q2);
    terminal_ = r.terminal;
    seg_t_ += 1;
    return r;
  }

  void set_success_detection(bool on) { detect_success_ = on; }
  // The collision-penalty clock restarts when control hands over, so the
  // protagonist's first step is its step 0.
  void begin_protagonist_segment() { seg_t_ = 0; }
  Vec state() const { return q_; }

 private:
  ArmConfig arm_;
  Shapes shapes_;
  ScenarioSet scenarios_;
  Vec q_;
  int seg_t_ = 0;
  Terminal terminal_ = Terminal::none;
  bool detect_success_ = true;
  bool started_ = false;
};

// The bundled task geometry: a square ring with a gap in its top edge and an
// S-shaped hook on the arm's tip.
inline Shapes default_shapes() {
  Shapes s;
  s.ring_center = {0.6, 0.0};
  s.ring = {{0.45, 0.25}, {0.35, 0.25}, {0.35, -0.25},
            {0.85, -0.25}, {0.85, 0.25}, {0.75, 0.25}};
  s.hook = {{0.0, 0.0},   {0.1, 0.0},   {0.1, 0.06},
            {0.02, 0.06}, {0.02, 0.12}, {0.1, 0.12}};
  return s;
}

// Scenario file format: one entry per line — name, three joint angles in
// radians, then a "train" or "test" tag; '#' starts a comment.
inline ScenarioSet parse_scenarios(const std::string& text) {
  ScenarioSet out;
  std::string line;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    Scenario sc;
    std::string tag;
    if (!(ss >> sc.name)) continue;  // blank line
    if (!(ss >> sc.q.emplace_back() >> sc.q.emplace_back() >> sc.q.emplace_back() >>
          tag))
      throw ConfigError("scenario parse: line " + std::to_string(lineno) +
                        ": expected 'name q1 q2 q3 train|test'");
    if (tag == "train") {
      sc.is_test = false;
      out.train.push_back(std::move(sc));
    } else if (tag == "test") {
      sc.is_test = true;
      out.test.push_back(std::move(sc));
    } else {
      throw ConfigError("scenario parse: line " + std::to_string(lineno) +
                        ": unknown tag '" + tag + "'");
    }
  }
  if (out.train.empty())
    throw ConfigError("scenario parse: no training scenarios defined");
  return out;
}

// Bundled start set; data/scenarios.txt carries the same entries.
inline constexpr const char* kDefaultScenarioText =
    "left_lean_left        1.0729706043890639  -1.0020149172229704  "
    "-2.1653507895592887  train\n"
    "left_lean_right       1.5758097922264853  -1.5210003213787011  "
    "-1.2765399472438148  train\n"
    "right_lean_left       0.71089997977333141 -0.31451104693432486 "
    "-2.1417181848333362  train\n"
    "right_lean_right      1.2397769339462583  -1.2359693968023973  "
    "-1.0510050883404587  train\n"
    "left_lean_left_var    1.1229706043890639  -1.0020149172229704  "
    "-2.1653507895592887  test\n"
    "left_lean_right_var   1.5758097922264853  -1.4710003213787011  "
    "-1.2765399472438148  test\n"
    "right_lean_left_var   0.71089997977333141 -0.31451104693432486 "
    "-2.0917181848333364  test\n"
    "right_lean_right_var  1.2897769339462584  -1.2359693968023973  "
    "-1.0510050883404587  test\n";

inline ScenarioSet default_scenarios() { return parse_scenarios(kDefaultScenarioText); }

inline DisentangleEnv default_disentangle_env() {
  return DisentangleEnv(ArmConfig{}, default_shapes(), default_scenarios());
}

}  // namespace arl
