#include "deminf/synth.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "deminf/curation.hpp"
#include "deminf/error.hpp"
#include "deminf/numerics.hpp"

namespace deminf::synth {

double gaussian_mi(std::size_t dim, double rho) {
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("correlation must satisfy |rho| < 1");
  return -0.5 * static_cast<double>(dim) * std::log(1.0 - rho * rho);
}

GaussianPairs gen_gaussian_pairs(const GaussianSpec& spec) {
  const double mi = gaussian_mi(spec.dim, spec.rho);
  if (spec.dim == 0) throw std::invalid_argument("gen_gaussian_pairs: dim must be positive");
  Rng rng(spec.seed, 0x6761757373ULL);
  const double resid = std::sqrt(1.0 - spec.rho * spec.rho);
  GaussianPairs out{{Matrix(spec.n, spec.dim), Matrix(spec.n, spec.dim)}, mi};
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double x = rng.normal();
      const double e = rng.normal();
      out.pairs.zs(i, j) = x;
      out.pairs.za(i, j) = spec.rho * x + resid * e;
    }
  }
  return out;
}

std::string gaussian_csv(const knn::LatentPairSet& pairs) {
  std::string out;
  const std::size_t ds = pairs.zs.cols();
  const std::size_t da = pairs.za.cols();
  for (std::size_t j = 0; j < ds; ++j) out += (j ? ",zs_" : "zs_") + std::to_string(j);
  for (std::size_t j = 0; j < da; ++j) out += ",za_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < ds; ++j) {
      if (j) out += ',';
      out += curation::format_double(pairs.zs(i, j));
    }
    for (std::size_t j = 0; j < da; ++j) out += ',' + curation::format_double(pairs.za(i, j));
    out += '\n';
  }
  return out;
}

knn::LatentPairSet parse_gaussian_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("paired-matrix CSV: missing header");
  std::size_t ds = 0, da = 0;
  {
    std::istringstream h(line);
    std::string col;
    while (std::getline(h, col, ',')) {
      if (col.rfind("zs_", 0) == 0 && da == 0) ++ds;
      else if (col.rfind("za_", 0) == 0) ++da;
      else throw ParseError("paired-matrix CSV: unexpected column '" + col + "'");
    }
  }
  if (ds == 0 || da == 0) throw ParseError("paired-matrix CSV: need zs_ and za_ columns");
  std::vector<double> zs, za;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      (c < ds ? zs : za).push_back(v);
      ++c;
    }
    if (c != ds + da) throw ParseError("paired-matrix CSV: wrong field count at row " + std::to_string(n + 1));
    ++n;
  }
  return {Matrix(n, ds, std::move(zs)), Matrix(n, da, std::move(za))};
}

nlohmann::json gaussian_sidecar(const GaussianSpec& spec, double true_mi) {
  return {{"n", spec.n}, {"dim", spec.dim}, {"rho", spec.rho}, {"seed", spec.seed}, {"true_mi", true_mi}};
}

PointMassSpec PointMassSpec::defaults(std::size_t per_level, std::uint64_t seed) {
  PointMassSpec s;
  s.seed = seed;
  s.levels = {
      LevelSpec{3.0, per_level, 0.005, 0.0, 0.0},
      LevelSpec{2.0, per_level, 0.02, 0.0, 0.0},
      LevelSpec{1.0, per_level, 0.1, 0.8, 0.6},
  };
  return s;
}

namespace {

struct Vec2 {
  double x, y;
};

double dist(Vec2 a, Vec2 b) { return std::hypot(b.x - a.x, b.y - a.y); }

struct Rollout {
  Trajectory traj;
  std::vector<Segment> segments;
};

struct Task {
  Vec2 start, goal;
};

// Task i is shared by every level, so levels differ only in how the
// operator executes it.
Task draw_task(const PointMassSpec& spec, std::size_t i) {
  Rng rng = Rng(spec.seed, 0x7461736bULL).substream(i);
  Task task{};
  do {
    task.start = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    task.goal = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  } while (dist(task.start, task.goal) < spec.min_start_goal_distance);
  return task;
}

// One attempt; false when the horizon runs out before the goal.
bool rollout(const PointMassSpec& spec, const LevelSpec& level, const Task& task, Rng& rng, Rollout& out) {
  Vec2 pos = task.start;
  const Vec2 goal = task.goal;

  const bool detour = rng.bernoulli(level.detour_prob);
  const auto straight_steps = static_cast<std::size_t>(std::ceil(dist(pos, goal) / spec.step_size));
  const std::size_t detour_start = detour ? static_cast<std::size_t>(rng.uniform_index(straight_steps / 2 + 1)) : 0;
  const Vec2 waypoint{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  bool detouring = false;
  bool detour_done = !detour;
  std::size_t pause_left = 0;

  std::vector<double> states, actions;
  std::vector<Segment> segs;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    if (!detour_done && !detouring && t >= detour_start) detouring = true;
    if (detouring && dist(pos, waypoint) < spec.goal_tolerance) {
      detouring = false;
      detour_done = true;
    }
    states.insert(states.end(), {pos.x, pos.y, goal.x, goal.y});

    if (pause_left == 0 && level.pause_prob > 0.0 && rng.bernoulli(level.pause_prob)) {
      pause_left = 1;
      while (rng.bernoulli(level.pause_continue)) ++pause_left;
    }
    Vec2 a{0.0, 0.0};
    Segment seg = Segment::Direct;
    if (pause_left > 0) {
      --pause_left;
      seg = Segment::Pause;
    } else {
      const Vec2 target = detouring ? waypoint : goal;
      const double d = dist(pos, target);
      if (d > 0.0) {
        a = {spec.step_size * (target.x - pos.x) / d, spec.step_size * (target.y - pos.y) / d};
      }
      a.x += level.noise_sigma * rng.normal();
      a.y += level.noise_sigma * rng.normal();
      const double norm = std::hypot(a.x, a.y);
      if (norm > spec.step_size) {
        a.x *= spec.step_size / norm;
        a.y *= spec.step_size / norm;
      }
      seg = detouring ? Segment::Detour : Segment::Direct;
    }
    actions.insert(actions.end(), {a.x, a.y});
    segs.push_back(seg);
    pos = {pos.x + a.x, pos.y + a.y};
    if (!detouring && dist(pos, goal) < spec.goal_tolerance) {
      const std::size_t T = segs.size();
      out.traj.states = Matrix(T, 4, std::move(states));
      out.traj.actions = Matrix(T, 2, std::move(actions));
      out.segments = std::move(segs);
      return true;
    }
  }
  return false;
}

}  // namespace

AnnotatedDemos gen_pointmass_annotated(const PointMassSpec& spec) {
  std::vector<Trajectory> trajs;
  std::vector<Segment> segments;
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    const LevelSpec& level = spec.levels[l];
    for (std::size_t i = 0; i < level.count; ++i) {
      const Task task = draw_task(spec, i);
      Rng rng = Rng(spec.seed, 0x706d0000ULL + l).substream(i);
      Rollout r;
      std::size_t attempts = 0;
      while (!rollout(spec, level, task, rng, r)) {
        if (++attempts >= 100) {
          throw std::runtime_error("point mass: level " + std::to_string(l) +
                                   " failed to reach its goal in 100 resamples; raise the horizon");
        }
      }
      r.traj.id = "q" + std::to_string(static_cast<int>(level.quality)) + "_" + std::to_string(l) + "_" +
                  std::to_string(i);
      r.traj.quality = level.quality;
      trajs.push_back(std::move(r.traj));
      segments.insert(segments.end(), r.segments.begin(), r.segments.end());
    }
  }
  return {DemoDataset(std::move(trajs)), std::move(segments)};
}

DemoDataset gen_pointmass(const PointMassSpec& spec) { return gen_pointmass_annotated(spec).dataset; }

PolicyEval evaluate_policy(const Policy& policy, const PointMassSpec& spec, std::size_t episodes,
                           std::uint64_t task_seed) {
  PointMassSpec eval_spec = spec;
  eval_spec.seed = task_seed;
  PolicyEval out;
  std::vector<double> state(4);
  std::vector<double> action(2);
  for (std::size_t e = 0; e < episodes; ++e) {
    const Task task = draw_task(eval_spec, e);
    Vec2 pos = task.start;
    bool reached = false;
    for (std::size_t t = 0; t < spec.horizon && !reached; ++t) {
      state = {pos.x, pos.y, task.goal.x, task.goal.y};
      policy(state, action);
      Vec2 a{action[0], action[1]};
      if (!std::isfinite(a.x) || !std::isfinite(a.y)) break;
      const double norm = std::hypot(a.x, a.y);
      if (norm > spec.step_size) {
        a.x *= spec.step_size / norm;
        a.y *= spec.step_size / norm;
      }
      pos = {pos.x + a.x, pos.y + a.y};
      reached = dist(pos, task.goal) < spec.goal_tolerance;
    }
    ++out.episodes;
    out.successes += reached;
  }
  return out;
}

}  // namespace deminf::synth
