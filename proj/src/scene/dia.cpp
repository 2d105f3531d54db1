#include "hiertraj/scene/dia.hpp"

#include "hiertraj/error.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace hiertraj {

namespace {

const AgentState* find_state(std::span<const AgentState> all, int id) {
  for (const auto& a : all) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

DiaBound vehicle_bound(const AgentState& a, double s) {
  return DiaBound{BoundKind::vehicle, a.id, s, a.pos.x(), a.pos.y(), a.v, a.yaw};
}

DiaBound point_bound(const ReferencePath& path, BoundKind kind, double s) {
  const Vec2 p = path.position(s);
  return DiaBound{kind, -1, s, p.x(), p.y(), 0.0, path.heading(s)};
}

BoundKind bound_kind(PointKind k) {
  switch (k) {
    case PointKind::crossing:
      return BoundKind::conflict_point;
    case PointKind::merge:
      return BoundKind::merge_point;
    case PointKind::brk:
      return BoundKind::break_point;
  }
  return BoundKind::conflict_point;
}

}  // namespace

const char* to_string(BoundKind k) {
  switch (k) {
    case BoundKind::vehicle:
      return "vehicle";
    case BoundKind::conflict_point:
      return "conflict_point";
    case BoundKind::merge_point:
      return "merge_point";
    case BoundKind::break_point:
      return "break_point";
    case BoundKind::path_end:
      return "path_end";
  }
  return "vehicle";
}

std::vector<AgentState> snapshot(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                 long frame, const SceneConfig& cfg) {
  std::vector<AgentState> out;
  for (const auto& t : tracks) {
    if (!t.covers(frame) || t.path_id < 0) continue;
    const auto& s = t.at(frame);
    AgentState a;
    a.id = t.id;
    a.path_id = t.path_id;
    a.pos = s.position();
    a.v = s.v;
    a.yaw = s.yaw;
    auto f = map.path(t.path_id).try_project(a.pos, s.v, s.yaw, cfg.corridor);
    if (!f) {
      throw ProjectionError("agent " + std::to_string(t.id) + " at frame " +
                            std::to_string(frame) + " is off path " + std::to_string(t.path_id));
    }
    a.frenet = *f;
    out.push_back(a);
  }
  return out;
}

std::optional<Leader> find_leader(const SceneMap& map, const AgentState& agent,
                                  std::span<const AgentState> others) {
  std::optional<Leader> best;
  for (const auto& o : others) {
    if (o.id == agent.id) continue;
    auto s = map.map_arclength(o.path_id, o.frenet.s, agent.path_id);
    if (!s || *s <= agent.frenet.s) continue;
    if (!best || *s < best->s || (*s == best->s && o.id < best->agent_id)) best = Leader{o.id, *s};
  }
  return best;
}

std::vector<Interaction> select_interacting(const SceneMap& map, const AgentState& ego,
                                            std::span<const AgentState> others,
                                            const SceneConfig& cfg) {
  if (ego.path_id < 0 || !map.has_path(ego.path_id)) {
    throw ConfigError("ego " + std::to_string(ego.id) + " has no assigned path");
  }
  std::vector<Interaction> out;
  const auto leader = find_leader(map, ego, others);
  if (leader) {
    out.push_back(Interaction{leader->agent_id, InteractionRole::leader, leader->s, 0.0,
                              PointKind::merge});
    if (auto* st = find_state(others, leader->agent_id)) out.back().s_agent = st->frenet.s;
  }
  for (const auto& o : others) {
    if (o.id == ego.id || (leader && o.id == leader->agent_id)) continue;
    if (o.path_id == ego.path_id) continue;
    for (const auto& p : map.interactions(ego.path_id, o.path_id)) {
      if (ego.frenet.s < p.s + cfg.passed_margin && o.frenet.s < p.s_other + cfg.passed_margin) {
        out.push_back(Interaction{o.id, InteractionRole::conflict, p.s, p.s_other, p.kind});
        break;
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Interaction& a, const Interaction& b) {
    return a.s_ego < b.s_ego || (a.s_ego == b.s_ego && a.agent_id < b.agent_id);
  });
  return out;
}

void recompute_features(DynamicInsertionArea& dia) {
  dia.d_r_lon = dia.s_active - dia.rear.s;
  dia.d_f_lon = std::min(dia.s_active - dia.front.s, dia.d_r_lon);
  dia.l = dia.d_r_lon - dia.d_f_lon;
}

std::vector<DynamicInsertionArea> extract_dias(const SceneMap& map, const AgentState& ego,
                                               std::span<const Interaction> interacting,
                                               std::span<const AgentState> all,
                                               const SceneConfig& cfg) {
  std::vector<DynamicInsertionArea> out;
  const auto& ego_path = map.path(ego.path_id);

  {
    DynamicInsertionArea front;
    front.id = ego.id;
    front.path_id = ego.path_id;
    front.rear = vehicle_bound(ego, ego.frenet.s);
    front.s_active = ego_path.length();
    BoundKind active_kind = BoundKind::path_end;
    double next_break = std::numeric_limits<double>::infinity();
    for (const auto& p : ego_path.points) {
      if (p.s <= ego.frenet.s) continue;
      if (p.kind == PointKind::brk) {
        next_break = std::min(next_break, p.s);
      } else if (p.s < front.s_active && active_kind == BoundKind::path_end) {
        front.s_active = p.s;
        active_kind = bound_kind(p.kind);
      }
    }
    if (front.s_active < ego.frenet.s) front.s_active = ego.frenet.s;
    front.s_active_ego = front.s_active;
    front.front = point_bound(ego_path, active_kind, front.s_active);
    if (next_break < front.front.s) front.front = point_bound(ego_path, BoundKind::break_point, next_break);
    for (const auto& in : interacting) {
      if (in.role != InteractionRole::leader || in.s_ego >= front.front.s) continue;
      if (auto* st = find_state(all, in.agent_id)) front.front = vehicle_bound(*st, in.s_ego);
    }
    recompute_features(front);
    out.push_back(front);
  }

  for (const auto& in : interacting) {
    if (in.role != InteractionRole::conflict) continue;
    if (out.size() >= cfg.max_nodes) break;
    const AgentState* agent = find_state(all, in.agent_id);
    if (agent == nullptr) continue;
    const auto& path = map.path(agent->path_id);
    DynamicInsertionArea dia;
    dia.id = agent->id;
    dia.path_id = agent->path_id;
    dia.rear = vehicle_bound(*agent, agent->frenet.s);
    dia.s_active = in.s_agent;
    dia.s_active_ego = in.s_ego;
    dia.front = point_bound(path, bound_kind(in.kind), in.s_agent);
    if (auto lead = find_leader(map, *agent, all); lead && lead->s <= in.s_agent + cfg.passed_margin) {
      dia.front = vehicle_bound(*find_state(all, lead->agent_id), lead->s);
    }
    recompute_features(dia);
    out.push_back(dia);
  }
  return out;
}

std::vector<DynamicInsertionArea> dias_at(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                          int ego_id, long frame, const SceneConfig& cfg) {
  const auto states = snapshot(map, tracks, frame, cfg);
  const AgentState* ego = find_state(states, ego_id);
  if (ego == nullptr) {
    throw ConfigError("ego " + std::to_string(ego_id) + " is not present at frame " +
                      std::to_string(frame));
  }
  const auto inter = select_interacting(map, *ego, states, cfg);
  return extract_dias(map, *ego, inter, states, cfg);
}

}  // namespace hiertraj
