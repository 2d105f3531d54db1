#include "hiertraj/baselines/baselines.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hiertraj {

void IdmParams::validate() const {
  if (!(v0 > 0 && T > 0 && a > 0 && b > 0 && s0 > 0 && delta >= 1)) {
    throw ConfigError("idm: parameters must be positive and delta >= 1");
  }
}

nlohmann::json IdmParams::to_json() const {
  return {{"v0", v0}, {"T", T}, {"a", a}, {"b", b}, {"s0", s0}, {"delta", delta}};
}

IdmParams IdmParams::from_json(const nlohmann::json& j) {
  IdmParams p;
  try {
    p.v0 = j.value("v0", p.v0);
    p.T = j.value("T", p.T);
    p.a = j.value("a", p.a);
    p.b = j.value("b", p.b);
    p.s0 = j.value("s0", p.s0);
    p.delta = j.value("delta", p.delta);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("idm config: ") + e.what());
  }
  p.validate();
  return p;
}

IdmResult idm_accel(double v, double dv, double s, const IdmParams& p) {
  if (!(s > 0.0)) return {-p.b, true};
  const double free = 1.0 - std::pow(v / p.v0, p.delta);
  if (std::isinf(s)) return {p.a * free, false};
  const double s_star = p.s0 + std::max(0.0, v * p.T + v * dv / (2.0 * std::sqrt(p.a * p.b)));
  return {p.a * (free - (s_star / s) * (s_star / s)), false};
}

const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::cv: return "cv";
    case BaselineKind::idm: return "idm";
    case BaselineKind::fsm_d: return "fsm-d";
    case BaselineKind::fsm_t: return "fsm-t";
  }
  return "cv";
}

BaselineKind baseline_from_string(const std::string& s) {
  for (auto k : {BaselineKind::cv, BaselineKind::idm, BaselineKind::fsm_d, BaselineKind::fsm_t}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown baseline '" + s + "' (expected cv, idm, fsm-d or fsm-t)");
}

namespace {

const AgentState* find(std::span<const AgentState> all, int id) {
  for (const auto& a : all) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

double time_to(double dist, double v) {
  return v <= kFsmSpeedEps ? std::numeric_limits<double>::infinity() : dist / v;
}

}  // namespace

std::optional<FollowTarget> select_leader_fsm(const SceneMap& map, const AgentState& ego,
                                              std::span<const AgentState> others, BaselineKind mode,
                                              const SceneConfig& cfg) {
  if (mode != BaselineKind::fsm_d && mode != BaselineKind::fsm_t) {
    throw ConfigError("select_leader_fsm needs fsm-d or fsm-t");
  }
  std::optional<FollowTarget> leader, pick;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& it : select_interacting(map, ego, others, cfg)) {
    const AgentState* a = find(others, it.agent_id);
    if (a == nullptr) continue;
    if (it.role == InteractionRole::leader) {
      leader = FollowTarget{a->id, it.s_ego - ego.frenet.s, a->v, InteractionRole::leader};
      continue;
    }
    const double d_agent = it.s_agent - a->frenet.s;
    const double d_ego = it.s_ego - ego.frenet.s;
    if (d_agent < 0.0 || d_ego < 0.0) continue;  // already past the point
    const double m_agent = mode == BaselineKind::fsm_d ? d_agent : time_to(d_agent, a->v);
    const double m_ego = mode == BaselineKind::fsm_d ? d_ego : time_to(d_ego, ego.v);
    if (!(m_agent < m_ego)) continue;
    if (m_agent < best || (m_agent == best && pick && a->id < pick->agent_id)) {
      best = m_agent;
      pick = FollowTarget{a->id, d_ego - d_agent, a->v, InteractionRole::conflict};
    }
  }
  if (leader && (!pick || leader->gap <= pick->gap)) return leader;
  return pick;
}

Tensor constant_velocity(const TrackSample& prev, const TrackSample& cur, Index steps, double dt) {
  const Vec2 vel = (cur.position() - prev.position()) / dt;
  Tensor out(steps, 2);
  for (Index k = 0; k < steps; ++k) {
    const Vec2 p = cur.position() + vel * dt * static_cast<double>(k + 1);
    out(k, 0) = p.x();
    out(k, 1) = p.y();
  }
  return out;
}

Tensor rollout_baseline(const SceneMap& map, const AgentState& ego, std::span<const AgentState> others,
                        Index steps, double dt, BaselineKind kind, const IdmParams& idm,
                        const SceneConfig& cfg) {
  idm.validate();
  const ReferencePath& path = map.path(ego.path_id);
  Tensor out(steps, 2);
  if (kind == BaselineKind::cv) {
    const Vec2 vel(ego.v * std::cos(ego.yaw), ego.v * std::sin(ego.yaw));
    for (Index k = 0; k < steps; ++k) out.row(k) = (ego.pos + vel * dt * static_cast<double>(k + 1)).transpose();
    return out;
  }
  AgentState me = ego;
  std::vector<AgentState> world(others.begin(), others.end());
  for (Index k = 0; k < steps; ++k) {
    double gap = std::numeric_limits<double>::infinity(), dv = 0.0;
    if (kind == BaselineKind::idm) {
      if (auto l = find_leader(map, me, world)) {
        gap = l->s - me.frenet.s;
        dv = me.v - find(world, l->agent_id)->v;
      }
    } else if (auto t = select_leader_fsm(map, me, world, kind, cfg)) {
      gap = t->gap;
      dv = me.v - t->v;
    }
    const double acc = idm_accel(me.v, dv, gap, idm).accel;
    me.frenet.s += me.v * dt;
    me.v = std::max(0.0, me.v + acc * dt);
    me.frenet.v = me.v;
    me.pos = path.to_cartesian(me.frenet.s, me.frenet.d);
    out.row(k) = me.pos.transpose();
    for (auto& o : world) {
      o.frenet.s += o.v * dt;
      o.pos = map.path(o.path_id).to_cartesian(o.frenet.s, o.frenet.d);
    }
  }
  return out;
}

Tensor baseline_predict(const SceneMap& map, const std::vector<AgentTrack>& tracks, int ego_id,
                        long frame, Index steps, BaselineKind kind, const IdmParams& idm,
                        const SceneConfig& cfg) {
  if (kind == BaselineKind::cv) {
    for (const auto& t : tracks) {
      if (t.id != ego_id) continue;
      if (!t.covers(frame) || !t.covers(frame - 1)) break;
      return constant_velocity(t.at(frame - 1), t.at(frame), steps, kSampleDt);
    }
    throw ConfigError("baseline: agent " + std::to_string(ego_id) + " lacks two samples at frame " +
                      std::to_string(frame));
  }
  const auto states = snapshot(map, tracks, frame, cfg);
  const AgentState* ego = find(states, ego_id);
  if (ego == nullptr) throw ConfigError("baseline: agent " + std::to_string(ego_id) + " absent at frame " + std::to_string(frame));
  std::vector<AgentState> others;
  for (const auto& s : states) {
    if (s.id != ego_id) others.push_back(s);
  }
  return rollout_baseline(map, *ego, others, steps, kSampleDt, kind, idm, cfg);
}

}  // namespace hiertraj
