#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "arl/disentangle.hpp"
#include "arl/loop.hpp"
#include "arl/maze.hpp"
#include "arl/sac.hpp"

namespace arl {

// ---- uniform-start maze evaluation ----

struct EvalCell {
  bool wall = true;
  int episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;  // fraction in [0,1]
};

struct EvalGrid {
  int width = 0;
  int height = 0;
  std::vector<EvalCell> cells;

  EvalGrid() = default;
  EvalGrid(int w, int h) : width(w), height(h), cells(static_cast<size_t>(w) * h) {}

  EvalCell& at(int x, int y) { return cells[static_cast<size_t>(y) * width + x]; }
  const EvalCell& at(int x, int y) const {
    return cells[static_cast<size_t>(y) * width + x];
  }
};

// Runs n_per_cell deterministic episodes from uniform positions inside every
// non-wall cell. Each cell draws from its own named stream, so results do not
// depend on evaluation order and cells can be farmed out to workers.
inline EvalGrid evaluate_uniform(const SacAgent& agent, MazeEnv env,
                                 int n_per_cell, std::uint64_t seed) {
  require(n_per_cell >= 1, "evaluate_uniform: n_per_cell must be >= 1");
  const MazeGrid& grid = env.grid();
  require(!grid.non_wall_cells().empty(), "evaluate_uniform: maze has no free cells");
  const int horizon = env.spec().horizon_P;

  EvalGrid out(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      if (grid.at(x, y) == MazeCell::wall) continue;
      EvalCell& cell = out.at(x, y);
      cell.wall = false;
      RngStream rng(seed, "eval.cell." + std::to_string(x) + "." +
                              std::to_string(y));
      double return_sum = 0.0;
      int successes = 0;
      for (int e = 0; e < n_per_cell; ++e) {
        const double sx = x + rng.uniform();
        const double sy = y + rng.uniform();
        env.reset(ExplicitReset{{sx, sy}}, rng);
        double ep_return = 0.0;
        for (int t = 0; t < horizon; ++t) {
          Vec a = agent.act(env.state(), true, rng);
          StepResult res = env.step(a);
          ep_return += res.reward;
          if (res.terminal == Terminal::success) {
            ++successes;
            break;
          }
          if (res.terminal != Terminal::none) break;
        }
        return_sum += ep_return;
      }
      cell.episodes = n_per_cell;
      cell.mean_return = return_sum / n_per_cell;
      cell.success_rate = static_cast<double>(successes) / n_per_cell;
    }
  }
  return out;
}

inline double uniform_success_percent(const EvalGrid& g) {
  double sum = 0.0;
  int n = 0;
  for (const EvalCell& c : g.cells) {
    if (c.wall) continue;
    sum += c.success_rate;
    ++n;
  }
  require(n > 0, "uniform_success_percent: empty grid");
  return 100.0 * sum / n;
}

inline double uniform_mean_return(const EvalGrid& g) {
  double sum = 0.0;
  int n = 0;
  for (const EvalCell& c : g.cells) {
    if (c.wall) continue;
    sum += c.mean_return;
    ++n;
  }
  require(n > 0, "uniform_mean_return: empty grid");
  return sum / n;
}

// ---- scenario evaluation ----

// One training run's evaluation numbers; several of these (one per seed)
// aggregate into a MethodSummary.
struct RunStats {
  double mean_return = 0.0;
  double success_percent = 0.0;
};

inline RunStats evaluate_scenarios_once(const SacAgent& agent, DisentangleEnv env,
                                        const std::vector<Scenario>& scenarios,
                                        int trials_per_scenario) {
  require(!scenarios.empty(), "evaluate_scenarios: scenario set is empty");
  require(trials_per_scenario >= 1,
          "evaluate_scenarios: trials_per_scenario must be >= 1");
  const int horizon = env.spec().horizon_P;
  RngStream rng(0, "eval.scenarios");  // deterministic policy: never consumed
  double return_sum = 0.0;
  int successes = 0;
  int total = 0;
  for (const Scenario& sc : scenarios) {
    for (int trial = 0; trial < trials_per_scenario; ++trial) {
      env.reset(ExplicitReset{sc.q}, rng);
      double ep_return = 0.0;
      bool success = false;
      for (int t = 0; t < horizon; ++t) {
        Vec a = agent.act(env.state(), true, rng);
        StepResult res = env.step(a);
        ep_return += res.reward;
        if (res.terminal == Terminal::success) success = true;
        if (res.terminal != Terminal::none) break;
      }
      return_sum += ep_return;
      successes += success ? 1 : 0;
      ++total;
    }
  }
  RunStats out;
  out.mean_return = return_sum / total;
  out.success_percent = 100.0 * successes / total;
  return out;
}

struct MethodSummary {
  std::string method;
  double mean_return = 0.0;
  double return_stderr = 0.0;
  double success_percent = 0.0;
  double success_stderr = 0.0;
  int runs = 0;
  bool single_run = false;
};

// Standard error = sample standard deviation across runs / sqrt(runs); a
// single run reports 0 and flags itself.
inline MethodSummary summarize_method(std::string name,
                                      const std::vector<RunStats>& runs) {
  require(!runs.empty(), "summarize_method: no runs");
  MethodSummary s;
  s.method = std::move(name);
  s.runs = static_cast<int>(runs.size());
  s.single_run = runs.size() == 1;
  double rsum = 0.0, psum = 0.0;
  for (const RunStats& r : runs) {
    rsum += r.mean_return;
    psum += r.success_percent;
  }
  s.mean_return = rsum / s.runs;
  s.success_percent = psum / s.runs;
  if (s.runs > 1) {
    double rvar = 0.0, pvar = 0.0;
    for (const RunStats& r : runs) {
      rvar += (r.mean_return - s.mean_return) * (r.mean_return - s.mean_return);
      pvar += (r.success_percent - s.success_percent) *
              (r.success_percent - s.success_percent);
    }
    rvar /= s.runs - 1;
    pvar /= s.runs - 1;
    s.return_stderr = std::sqrt(rvar) / std::sqrt(static_cast<double>(s.runs));
    s.success_stderr = std::sqrt(pvar) / std::sqrt(static_cast<double>(s.runs));
  }
  return s;
}

inline MethodSummary evaluate_scenarios(const SacAgent& agent, DisentangleEnv env,
                                        const std::vector<Scenario>& scenarios,
                                        int trials_per_scenario,
                                        std::string name = "run") {
  return summarize_method(
      std::move(name),
      {evaluate_scenarios_once(agent, std::move(env), scenarios,
                               trials_per_scenario)});
}

// ---- heatmap emission ----

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

// CSV with one row per cell plus a grayscale image: returns affinely mapped
// min -> 0, max -> 255 over non-wall cells; a flat grid maps to 255 and wall
// pixels are always 0.
inline void write_heatmap(const EvalGrid& grid, const std::string& stem) {
  {
    std::ofstream csv(stem + ".csv");
    if (!csv) throw IoError("write_heatmap: cannot open " + stem + ".csv");
    csv << "x,y,wall,episodes,mean_return,success_rate\n";
    for (int y = 0; y < grid.height; ++y) {
      for (int x = 0; x < grid.width; ++x) {
        const EvalCell& c = grid.at(x, y);
        csv << x << ',' << y << ',' << (c.wall ? 1 : 0) << ',' << c.episodes
            << ',' << format_g17(c.mean_return) << ','
            << format_g17(c.success_rate) << '\n';
      }
    }
    if (!csv) throw IoError("write_heatmap: write failed for " + stem + ".csv");
  }

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const EvalCell& c : grid.cells) {
    if (c.wall) continue;
    if (first || c.mean_return < lo) lo = c.mean_return;
    if (first || c.mean_return > hi) hi = c.mean_return;
    first = false;
  }
  std::ofstream pgm(stem + ".pgm");
  if (!pgm) throw IoError("write_heatmap: cannot open " + stem + ".pgm");
  pgm << "P2\n" << grid.width << ' ' << grid.height << "\n255\n";
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const EvalCell& c = grid.at(x, y);
      int pix = 0;
      if (!c.wall) {
        pix = hi > lo ? static_cast<int>(std::lround(
                            255.0 * (c.mean_return - lo) / (hi - lo)))
                      : 255;
      }
      pgm << pix << (x + 1 < grid.width ? ' ' : '\n');
    }
  }
  if (!pgm) throw IoError("write_heatmap: write failed for " + stem + ".pgm");
}

inline EvalGrid read_eval_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_eval_grid_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw IoError("read_eval_grid_csv: empty file " + path);
  struct Row {
    int x, y, wall, episodes;
    double mean_return, success;
  };
  std::vector<Row> rows;
  int w = 0, h = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream fields(line);
    if (!(fields >> r.x >> r.y >> r.wall >> r.episodes >> r.mean_return >>
          r.success))
      throw IoError("read_eval_grid_csv: malformed row '" + line + "'");
    w = std::max(w, r.x + 1);
    h = std::max(h, r.y + 1);
    rows.push_back(r);
  }
  EvalGrid g(w, h);
  for (const Row& r : rows) {
    EvalCell& c = g.at(r.x, r.y);
    c.wall = r.wall != 0;
    c.episodes = r.episodes;
    c.mean_return = r.mean_return;
    c.success_rate = r.success;
  }
  return g;
}

// ---- exploration footprint ----

// Fraction of non-wall cells touched by at least one logged state.
inline double exploration_footprint(const std::vector<Vec>& states,
                                    const MazeGrid& grid) {
  std::vector<std::uint8_t> visited(
      static_cast<size_t>(grid.width) * grid.height, 0);
  for (const Vec& s : states) {
    require(s.size() == 2, "exploration_footprint: maze states are 2-d");
    const int cx = static_cast<int>(std::floor(s[0]));
    const int cy = static_cast<int>(std::floor(s[1]));
    if (cx < 0 || cy < 0 || cx >= grid.width || cy >= grid.height) continue;
    visited[static_cast<size_t>(cy) * grid.width + cx] = 1;
  }
  int free_cells = 0, hit = 0;
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      if (grid.at(x, y) == MazeCell::wall) continue;
      ++free_cells;
      hit += visited[static_cast<size_t>(y) * grid.width + x];
    }
  }
  require(free_cells > 0, "exploration_footprint: maze has no free cells");
  return static_cast<double>(hit) / free_cells;
}

// Streaming equivalent for use as a training state observer; avoids storing
// the full state log for long runs.
class VisitTracker {
 public:
  explicit VisitTracker(const MazeGrid& grid)
      : width_(grid.width),
        height_(grid.height),
        free_cells_(0),
        visited_(static_cast<size_t>(grid.width) * grid.height, 0) {
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (grid.at(x, y) != MazeCell::wall) {
          ++free_cells_;
          free_mask_.push_back(1);
        } else {
          free_mask_.push_back(0);
        }
  }

  void observe(const Vec& s) {
    const int cx = static_cast<int>(std::floor(s[0]));
    const int cy = static_cast<int>(std::floor(s[1]));
    if (cx < 0 || cy < 0 || cx >= width_ || cy >= height_) return;
    visited_[static_cast<size_t>(cy) * width_ + cx] = 1;
  }

  double fraction() const {
    int hit = 0;
    for (size_t i = 0; i < visited_.size(); ++i)
      hit += visited_[i] & free_mask_[i];
    return static_cast<double>(hit) / free_cells_;
  }

 private:
  int width_, height_, free_cells_;
  std::vector<std::uint8_t> visited_;
  std::vector<std::uint8_t> free_mask_;
};

// ---- training-tail statistics ----

// Mean return and success rate over the last n protagonist-phase episodes of
// a metrics history; the fresh-evaluation numbers are reported separately.
inline RunStats training_tail_stats(const std::vector<EpisodeRecord>& history,
                                    int n) {
  require(n >= 1, "training_tail_stats: n must be >= 1");
  double rsum = 0.0;
  int count = 0, successes = 0;
  for (auto it = history.rbegin(); it != history.rend() && count < n; ++it) {
    if (it->phase != 'P') continue;
    rsum += it->prot_return;
    successes += it->termination == "success" ? 1 : 0;
    ++count;
  }
  require(count > 0, "training_tail_stats: no protagonist-phase episodes");
  RunStats out;
  out.mean_return = rsum / count;
  out.success_percent = 100.0 * successes / count;
  return out;
}

}  // namespace arl
