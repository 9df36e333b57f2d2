#pragma once

#include <string>
#include <variant>
#include <vector>

#include "arl/common.hpp"
#include "arl/rng.hpp"

namespace arl {

// Static description an environment hands to agents and the training loop.
// action_scale maps policy outputs in (-1,1) to environment units per dim.
struct EnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  Vec action_scale;
  int horizon_P = 0;
};

enum class Terminal { none, success, collision };

inline const char* terminal_name(Terminal t) {
  switch (t) {
    case Terminal::success: return "success";
    case Terminal::collision: return "collision";
    default: return "none";
  }
}

struct StepResult {
  Vec s_next;
  double reward = 0.0;
  Terminal terminal = Terminal::none;
  bool timed_out = false;
};

// Reset modes: the narrow distribution the system can physically return to,
// an evaluation-only teleport, and uniform sampling over valid states.
struct ResetDist {};
struct UniformReset {};
struct ExplicitReset {
  Vec state;
};
using ResetMode = std::variant<ResetDist, UniformReset, ExplicitReset>;

// Discounted sum; gamma = 1 gives the plain episode return used in tables.
inline double compute_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0.0, g = 1.0;
  for (double r : rewards) {
    acc += g * r;
    g *= gamma;
  }
  return acc;
}

}  // namespace arl
