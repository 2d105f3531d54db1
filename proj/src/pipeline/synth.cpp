#include "hiertraj/pipeline/synth.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

namespace hiertraj {

const char* to_string(ScenarioKind k) {
  return k == ScenarioKind::intersection ? "intersection" : "roundabout";
}

ScenarioKind scenario_from_string(const std::string& s) {
  if (s == "intersection") return ScenarioKind::intersection;
  if (s == "roundabout") return ScenarioKind::roundabout;
  throw ConfigError("unknown scenario '" + s + "' (expected intersection or roundabout)");
}

namespace {

Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
Vec2 rot90(const Vec2& v) { return {-v.y(), v.x()}; }

void append_line(std::vector<Vec2>& out, const Vec2& a, const Vec2& b, double step) {
  const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
  for (int i = out.empty() ? 0 : 1; i <= n; ++i) out.push_back(a + (b - a) * (double(i) / n));
}

// Quadratic Bezier from the last point of `out` to `b`.
void append_bezier(std::vector<Vec2>& out, const Vec2& c, const Vec2& b, double step) {
  const Vec2 a = out.back();
  const double approx = (c - a).norm() + (b - c).norm();
  const int n = std::max(2, static_cast<int>(std::ceil(approx / step)));
  for (int i = 1; i <= n; ++i) {
    const double t = double(i) / n;
    out.push_back((1 - t) * (1 - t) * a + 2 * (1 - t) * t * c + t * t * b);
  }
}

std::optional<Vec2> line_intersection(const Vec2& p, const Vec2& dp, const Vec2& q, const Vec2& dq) {
  const double den = dp.x() * dq.y() - dp.y() * dq.x();
  if (std::abs(den) < 1e-9) return std::nullopt;
  const Vec2 w = q - p;
  const double t = (w.x() * dq.y() - w.y() * dq.x()) / den;
  return p + t * dp;
}

}  // namespace

SceneMap make_intersection_map() {
  constexpr int kArms = 5;
  constexpr double kOuter = 60.0, kInner = 12.0, kLane = 2.0;
  std::vector<ReferencePath> paths;
  int id = 0;
  for (int i = 0; i < kArms; ++i) {
    const Vec2 ui = unit(std::numbers::pi / 2 + 2 * std::numbers::pi * i / kArms);
    const Vec2 entry_far = kOuter * ui + kLane * rot90(ui);
    const Vec2 entry_near = kInner * ui + kLane * rot90(ui);
    for (int k = 1; k < kArms; ++k) {
      const int j = (i + k) % kArms;
      const Vec2 uj = unit(std::numbers::pi / 2 + 2 * std::numbers::pi * j / kArms);
      const Vec2 exit_near = kInner * uj - kLane * rot90(uj);
      const Vec2 exit_far = kOuter * uj - kLane * rot90(uj);
      std::vector<Vec2> pts;
      append_line(pts, entry_far, entry_near, 2.0);
      const Vec2 c = line_intersection(entry_near, -ui, exit_near, uj)
                         .value_or(0.5 * (entry_near + exit_near));
      append_bezier(pts, c, exit_near, 1.0);
      append_line(pts, exit_near, exit_far, 2.0);
      paths.emplace_back(id++, std::move(pts));
    }
  }
  return SceneMap(std::move(paths));
}

SceneMap make_roundabout_map() {
  static constexpr int kArms = 8, kRing = 64;
  static constexpr double kRadius = 18.0, kOuter = 55.0, kApproach = 32.0, kLane = 2.0;
  const auto ring = [](int k) {
    const int m = ((k % kRing) + kRing) % kRing;
    return Vec2(kRadius * unit(2 * std::numbers::pi * m / kRing));
  };
  const auto ring_tangent = [](int k) { return rot90(unit(2 * std::numbers::pi * k / kRing)); };
  std::vector<ReferencePath> paths;
  int id = 0;
  for (int i = 0; i < kArms; ++i) {
    const Vec2 ui = unit(2 * std::numbers::pi * i / kArms);
    const int join = i * (kRing / kArms) + 2;
    for (int hop : {2, 4, 6}) {
      const int j = (i + hop) % kArms;
      const Vec2 uj = unit(2 * std::numbers::pi * j / kArms);
      int leave = j * (kRing / kArms) - 2;
      while (leave <= join) leave += kRing;
      std::vector<Vec2> pts;
      append_line(pts, kOuter * ui + kLane * rot90(ui), kApproach * ui + kLane * rot90(ui), 2.0);
      append_bezier(pts, ring(join) - 6.0 * ring_tangent(join), ring(join), 1.0);
      for (int k = join + 1; k <= leave; ++k) pts.push_back(ring(k));
      append_bezier(pts, ring(leave) + 6.0 * ring_tangent(leave), kApproach * uj - kLane * rot90(uj), 1.0);
      append_line(pts, pts.back(), kOuter * uj - kLane * rot90(uj), 2.0);
      paths.emplace_back(id++, std::move(pts));
    }
  }
  return SceneMap(std::move(paths));
}

SceneMap make_scenario_map(ScenarioKind kind) {
  return kind == ScenarioKind::intersection ? make_intersection_map() : make_roundabout_map();
}

void SynthConfig::validate() const {
  idm.validate();
  if (n_agents < 1) throw ConfigError("synth: n_agents must be >= 1");
  if (!(spawn_rate > 0)) throw ConfigError("synth: spawn_rate must be positive");
  if (!(v0_min > 0 && v0_max >= v0_min)) throw ConfigError("synth: invalid desired speed range");
  if (!(headway_min > 0 && headway_max >= headway_min)) throw ConfigError("synth: invalid headway range");
  if (!(gap_noise >= 0)) throw ConfigError("synth: gap_noise must be >= 0");
  if (!(interaction_range > 0 && max_decel > 0 && speed_factor > 0)) {
    throw ConfigError("synth: interaction_range, max_decel and speed_factor must be positive");
  }
}

nlohmann::json SynthConfig::to_json() const {
  return {{"kind", to_string(kind)},
          {"n_agents", n_agents},
          {"spawn_rate", spawn_rate},
          {"v0_min", v0_min},
          {"v0_max", v0_max},
          {"headway_min", headway_min},
          {"headway_max", headway_max},
          {"gap_mean", gap_mean},
          {"gap_noise", gap_noise},
          {"interaction_range", interaction_range},
          {"stop_offset", stop_offset},
          {"max_decel", max_decel},
          {"lateral_offset", lateral_offset},
          {"speed_factor", speed_factor},
          {"idm", idm.to_json()}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    if (j.contains("kind")) c.kind = scenario_from_string(j.at("kind").get<std::string>());
    c.n_agents = j.value("n_agents", c.n_agents);
    c.spawn_rate = j.value("spawn_rate", c.spawn_rate);
    c.v0_min = j.value("v0_min", c.v0_min);
    c.v0_max = j.value("v0_max", c.v0_max);
    c.headway_min = j.value("headway_min", c.headway_min);
    c.headway_max = j.value("headway_max", c.headway_max);
    c.gap_mean = j.value("gap_mean", c.gap_mean);
    c.gap_noise = j.value("gap_noise", c.gap_noise);
    c.interaction_range = j.value("interaction_range", c.interaction_range);
    c.stop_offset = j.value("stop_offset", c.stop_offset);
    c.max_decel = j.value("max_decel", c.max_decel);
    c.lateral_offset = j.value("lateral_offset", c.lateral_offset);
    c.speed_factor = j.value("speed_factor", c.speed_factor);
    if (j.contains("idm")) c.idm = IdmParams::from_json(j.at("idm"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct SimAgent {
  int id = 0;
  int path_id = 0;
  long spawn_frame = 0;
  double s = 0.0;
  double v = 0.0;
  IdmParams idm;
  double theta = 0.0;
  bool active = false;
  bool done = false;
  AgentTrack track;
};

AgentState state_of(const SceneMap& map, const SimAgent& a, double d) {
  const auto& p = map.path(a.path_id);
  AgentState st;
  st.id = a.id;
  st.path_id = a.path_id;
  st.pos = p.to_cartesian(a.s, d);
  st.v = a.v;
  st.yaw = p.heading(a.s);
  st.frenet = FrenetState{a.s, d, a.v, 0.0};
  return st;
}

double time_to_point(double dist, double v) { return dist / std::max(v, 1.0); }

}  // namespace

Episode synth_episode(const SceneMap& map, const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::exponential_distribution<double> gap(cfg.spawn_rate);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n_paths = static_cast<int>(map.paths().size());

  std::vector<SimAgent> agents(static_cast<std::size_t>(cfg.n_agents));
  double t = 0.0;
  for (int i = 0; i < cfg.n_agents; ++i) {
    auto& a = agents[static_cast<std::size_t>(i)];
    a.id = i + 1;
    a.path_id = map.paths()[static_cast<std::size_t>(std::min(n_paths - 1, int(U(rng) * n_paths)))].id();
    if (i > 0) t += gap(rng);
    a.spawn_frame = std::lround(t / kSampleDt);
    a.idm = cfg.idm;
    a.idm.v0 = cfg.speed_factor * (cfg.v0_min + (cfg.v0_max - cfg.v0_min) * U(rng));
    a.idm.T = cfg.headway_min + (cfg.headway_max - cfg.headway_min) * U(rng);
    a.theta = cfg.gap_mean + cfg.gap_noise * N(rng);
    a.v = a.idm.v0 * (0.7 + 0.3 * U(rng));
    a.track.id = a.id;
    a.track.path_id = a.path_id;
  }

  const SceneConfig scene_cfg;
  const long last_spawn = agents.back().spawn_frame;
  const long frame_limit = last_spawn + 1200;
  for (long f = 0; f <= frame_limit; ++f) {
    for (auto& a : agents) {
      if (a.active || a.done || a.spawn_frame > f) continue;
      const Vec2 start = map.path(a.path_id).position(0.0);
      bool blocked = false;
      for (const auto& b : agents) {
        if (b.active && (map.path(b.path_id).position(b.s) - start).norm() < 12.0) blocked = true;
      }
      if (!blocked) a.active = true;
    }
    std::vector<AgentState> states;
    std::vector<SimAgent*> live;
    for (auto& a : agents) {
      if (!a.active) continue;
      live.push_back(&a);
      states.push_back(state_of(map, a, cfg.lateral_offset));
    }
    if (live.empty() && std::all_of(agents.begin(), agents.end(), [&](const SimAgent& a) {
          return a.done || a.spawn_frame > f;
        }) && f > last_spawn) {
      break;
    }

    std::vector<double> accel(live.size(), 0.0);
    for (std::size_t i = 0; i < live.size(); ++i) {
      const SimAgent& a = *live[i];
      const AgentState& me = states[i];
      double s_gap = std::numeric_limits<double>::infinity(), dv = 0.0;
      bool hard = false;
      for (const auto& it : select_interacting(map, me, states, scene_cfg)) {
        std::size_t k = 0;
        while (states[k].id != it.agent_id) ++k;
        const SimAgent& b = *live[k];
        if (it.role == InteractionRole::leader) {
          const double g = it.s_ego - a.s;
          if (g <= 0.0) hard = true;
          if (g < s_gap) {
            s_gap = g;
            dv = a.v - b.v;
          }
          continue;
        }
        const double da = it.s_ego - a.s, db = it.s_agent - b.s;
        if (da < 0.0 || db < 0.0 || da > cfg.interaction_range || db > cfg.interaction_range) continue;
        const double margin = time_to_point(db, b.v) - time_to_point(da, a.v);
        const double bar = 0.5 * (a.theta - b.theta);
        const bool pass = margin > bar || (margin == bar && a.id < b.id);
        if (pass) continue;
        const double g = da - cfg.stop_offset;
        if (g <= 0.0) continue;  // already over the stop line: commit
        if (g < s_gap) {
          s_gap = g;
          dv = a.v;
        }
      }
      double acc = hard ? -cfg.max_decel : idm_accel(a.v, dv, s_gap, a.idm).accel;
      accel[i] = std::max(acc, -cfg.max_decel);
    }

    for (std::size_t i = 0; i < live.size(); ++i) {
      SimAgent& a = *live[i];
      TrackSample smp;
      smp.frame = f;
      smp.timestamp_ms = f * 100;
      smp.x = states[i].pos.x();
      smp.y = states[i].pos.y();
      smp.v = a.v;
      smp.yaw = states[i].yaw;
      a.track.samples.push_back(smp);
      a.s += a.v * kSampleDt;
      a.v = std::max(0.0, a.v + accel[i] * kSampleDt);
      if (a.s > map.path(a.path_id).length() - 1.0) {
        a.active = false;
        a.done = true;
      }
    }
  }

  Episode ep;
  for (auto& a : agents) {
    if (!a.track.samples.empty()) ep.tracks.push_back(std::move(a.track));
  }
  return ep;
}

}  // namespace hiertraj
