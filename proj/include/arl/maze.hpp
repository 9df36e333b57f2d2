#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "arl/env.hpp"

namespace arl {

enum class MazeCell : std::uint8_t { wall, free_space, goal, reset };

// Unit-square grid; cell (cx, cy) covers x in [cx, cx+1), y in [cy, cy+1).
// Row 0 of the source text is y = 0.
struct MazeGrid {
  int width = 0;
  int height = 0;
  std::vector<MazeCell> cells;

  MazeCell at(int cx, int cy) const {
    if (cx < 0 || cy < 0 || cx >= width || cy >= height) return MazeCell::wall;
    return cells[static_cast<size_t>(cy) * width + cx];
  }
  bool wall_at(double x, double y) const {
    return at(static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y))) ==
           MazeCell::wall;
  }
  bool free_at(double x, double y) const { return !wall_at(x, y); }
  bool goal_at(double x, double y) const {
    return at(static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y))) ==
           MazeCell::goal;
  }

  std::vector<std::pair<int, int>> cells_of(MazeCell kind) const {
    std::vector<std::pair<int, int>> out;
    for (int cy = 0; cy < height; ++cy)
      for (int cx = 0; cx < width; ++cx)
        if (at(cx, cy) == kind) out.emplace_back(cx, cy);
    return out;
  }
  std::vector<std::pair<int, int>> non_wall_cells() const {
    std::vector<std::pair<int, int>> out;
    for (int cy = 0; cy < height; ++cy)
      for (int cx = 0; cx < width; ++cx)
        if (at(cx, cy) != MazeCell::wall) out.emplace_back(cx, cy);
    return out;
  }
};

// 4-connected reachability over non-wall cells.
inline std::vector<bool> flood_reachable(const MazeGrid& g, int sx, int sy) {
  std::vector<bool> seen(static_cast<size_t>(g.width) * g.height, false);
  if (g.at(sx, sy) == MazeCell::wall) return seen;
  std::vector<std::pair<int, int>> stack{{sx, sy}};
  seen[static_cast<size_t>(sy) * g.width + sx] = true;
  while (!stack.empty()) {
    auto [cx, cy] = stack.back();
    stack.pop_back();
    const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = cx + dx[k], ny = cy + dy[k];
      if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) continue;
      const size_t idx = static_cast<size_t>(ny) * g.width + nx;
      if (seen[idx] || g.at(nx, ny) == MazeCell::wall) continue;
      seen[idx] = true;
      stack.emplace_back(nx, ny);
    }
  }
  return seen;
}

// ASCII layout: '#' wall, '.' free, 'G' goal, 'R' reset. Rows must be equal
// length; the boundary must be fully walled; every reset cell must reach a
// goal cell.
inline MazeGrid parse_maze(const std::string& text) {
  MazeGrid g;
  std::vector<std::string> rows;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty()) rows.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) rows.push_back(cur);
  if (rows.empty()) throw ConfigError("maze parse: empty grid");
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows[0].size());
  for (const auto& r : rows)
    if (static_cast<int>(r.size()) != g.width)
      throw ConfigError("maze parse: ragged rows");
  g.cells.resize(static_cast<size_t>(g.width) * g.height);
  for (int cy = 0; cy < g.height; ++cy)
    for (int cx = 0; cx < g.width; ++cx) {
      MazeCell c;
      switch (rows[cy][cx]) {
        case '#': c = MazeCell::wall; break;
        case '.': c = MazeCell::free_space; break;
        case 'G': c = MazeCell::goal; break;
        case 'R': c = MazeCell::reset; break;
        default:
          throw ConfigError(std::string("maze parse: unknown cell character '") +
                            rows[cy][cx] + "'");
      }
      g.cells[static_cast<size_t>(cy) * g.width + cx] = c;
    }
  for (int cx = 0; cx < g.width; ++cx)
    if (g.at(cx, 0) != MazeCell::wall || g.at(cx, g.height - 1) != MazeCell::wall)
      throw ConfigError("maze parse: boundary not fully walled");
  for (int cy = 0; cy < g.height; ++cy)
    if (g.at(0, cy) != MazeCell::wall || g.at(g.width - 1, cy) != MazeCell::wall)
      throw ConfigError("maze parse: boundary not fully walled");
  auto goals = g.cells_of(MazeCell::goal);
  auto resets = g.cells_of(MazeCell::reset);
  if (goals.empty()) throw ConfigError("maze parse: missing goal cell");
  if (resets.empty()) throw ConfigError("maze parse: missing reset cell");
  for (auto [rx, ry] : resets) {
    auto seen = flood_reachable(g, rx, ry);
    bool ok = false;
    for (auto [gx, gy] : goals)
      ok = ok || seen[static_cast<size_t>(gy) * g.width + gx];
    if (!ok) throw ConfigError("maze parse: goal unreachable from reset cell");
  }
  return g;
}

struct MazeConfig {
  double max_speed = 1.0;
  double step_penalty_coeff = 0.05;
  double goal_reward = 1.0;
  int horizon = 100;
};

// Bundled layout: the goal is a dead end next to the reset square, and most
// of the maze is an open room at the far end of a corridor-and-shaft detour.
// Undirected wandering from the reset square gets absorbed by the goal long
// before it diffuses down the shaft, so the room is effectively reachable
// only by deliberate travel; the way home from the room reverses direction
// twice (right, then up, then left).
inline constexpr const char* kDefaultMazeText =
    "##########\n"
    "#GR......#\n"
    "########.#\n"
    "########.#\n"
    "########.#\n"
    "#......#.#\n"
    "#......#.#\n"
    "#........#\n"
    "#......###\n"
    "##########\n";

// Velocity cap: rescale onto the L2 ball of radius max_speed.
inline void cap_action(double& dx, double& dy, double max_speed) {
  const double n = std::sqrt(dx * dx + dy * dy);
  if (n > max_speed) {
    dx *= max_speed / n;
    dy *= max_speed / n;
  }
}

// Axis-separated move: apply the x component alone; if the swept path
// (sampled every <= 0.25 cell, endpoint included) touches a wall cell, the
// whole component is ignored. Then the same for y from the resulting point.
inline std::pair<double, double> move_with_slide(const MazeGrid& g, double x,
                                                 double y, double dx, double dy) {
  auto sweep_clear = [&](double fx, double fy, double tx, double ty) {
    const double len = std::max(std::abs(tx - fx), std::abs(ty - fy));
    const int n = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
    for (int i = 1; i <= n; ++i) {
      const double f = static_cast<double>(i) / n;
      if (g.wall_at(fx + (tx - fx) * f, fy + (ty - fy) * f)) return false;
    }
    return true;
  };
  if (dx != 0.0 && sweep_clear(x, y, x + dx, y)) x += dx;
  if (dy != 0.0 && sweep_clear(x, y, x, y + dy)) y += dy;
  return {x, y};
}

// One transition: scale, cap, slide; goal entry pays goal_reward and ends the
// episode, any other move costs step_penalty_coeff times the displacement
// actually applied (zero when walls cancel the motion).
inline StepResult maze_step(const MazeGrid& g, const MazeConfig& cfg, double x,
                            double y, double ax, double ay, bool detect_success) {
  cap_action(ax, ay, cfg.max_speed);
  auto [nx, ny] = move_with_slide(g, x, y, ax, ay);
  StepResult r;
  r.s_next = {nx, ny};
  if (detect_success && g.goal_at(nx, ny)) {
    r.reward = cfg.goal_reward;
    r.terminal = Terminal::success;
  } else {
    const double applied = std::hypot(nx - x, ny - y);
    r.reward = -cfg.step_penalty_coeff * applied;
  }
  return r;
}

// Stateful wrapper used by the training loop; positions are continuous maze
// coordinates and the policy's (-1,1) outputs are taken as cell deltas.
class MazeEnv {
 public:
  MazeEnv(MazeGrid grid, MazeConfig cfg = {})
      : grid_(std::move(grid)), cfg_(cfg) {}

  EnvSpec spec() const { return {2, 2, {1.0, 1.0}, cfg_.horizon}; }
  const MazeGrid& grid() const { return grid_; }
  const MazeConfig& config() const { return cfg_; }

  bool valid_state(const Vec& s) const {
    return s.size() == 2 && std::isfinite(s[0]) && std::isfinite(s[1]) &&
           grid_.free_at(s[0], s[1]);
  }

  Vec reset(const ResetMode& mode, RngStream& rng) {
    terminal_ = Terminal::none;
    started_ = true;
    if (const auto* ex = std::get_if<ExplicitReset>(&mode)) {
      if (!valid_state(ex->state))
        throw ContractError("maze reset: explicit state not inside free space");
      x_ = ex->state[0];
      y_ = ex->state[1];
      return {x_, y_};
    }
    const auto cells = std::holds_alternative<UniformReset>(mode)
                           ? grid_.non_wall_cells()
                           : grid_.cells_of(MazeCell::reset);
    const auto [cx, cy] = cells[rng.uniform_index(cells.size())];
    x_ = cx + rng.uniform();
    y_ = cy + rng.uniform();
    return {x_, y_};
  }

  StepResult step(const Vec& action) {
    require(started_, "maze step: called before reset");
    if (terminal_ != Terminal::none)
      throw ContractError("maze step: episode already terminal");
    require(action.size() == 2, "maze step: action must be 2-dimensional");
    StepResult r =
        maze_step(grid_, cfg_, x_, y_, action[0], action[1], detect_success_);
    x_ = r.s_next[0];
    y_ = r.s_next[1];
    terminal_ = r.terminal;
    return r;
  }

  void set_success_detection(bool on) { detect_success_ = on; }
  void begin_protagonist_segment() {}  // no reward clock here
  Vec state() const { return {x_, y_}; }

 private:
  MazeGrid grid_;
  MazeConfig cfg_;
  double x_ = 0.0, y_ = 0.0;
  Terminal terminal_ = Terminal::none;
  bool detect_success_ = true;
  bool started_ = false;
};

}  // namespace arl
