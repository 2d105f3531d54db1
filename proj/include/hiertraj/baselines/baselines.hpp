#pragma once

#include "hiertraj/scene/dia.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hiertraj {

struct IdmParams {
  double v0 = 10.0;   // desired speed, m/s
  double T = 1.5;     // time headway, s
  double a = 1.5;     // max acceleration, m/s^2
  double b = 2.0;     // comfortable deceleration, m/s^2
  double s0 = 2.0;    // minimum gap, m
  double delta = 4.0;

  void validate() const;
  nlohmann::json to_json() const;
  static IdmParams from_json(const nlohmann::json& j);
};

struct IdmResult {
  double accel = 0.0;
  bool emergency = false;  // gap was not positive; accel = -b
};

// dv = v - v_leader (closing speed); s = +inf for free road.
IdmResult idm_accel(double v, double dv, double s, const IdmParams& p);

enum class BaselineKind { cv, idm, fsm_d, fsm_t };
const char* to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

inline constexpr double kFsmSpeedEps = 0.1;

struct FollowTarget {
  int agent_id = -1;
  double gap = 0.0;  // along the ego path, metres
  double v = 0.0;
  InteractionRole role = InteractionRole::leader;
};

// Conflicting agents count as "in front" when their distance (fsm_d) or
// constant-speed time (fsm_t) to the shared point is below the ego's; the one
// with the smallest such metric is placed on the ego path at the same
// distance before the point. The same-path leader replaces it when its gap is
// smaller.
std::optional<FollowTarget> select_leader_fsm(const SceneMap& map, const AgentState& ego,
                                              std::span<const AgentState> others, BaselineKind mode,
                                              const SceneConfig& cfg = {});

// Forward-Euler rollout of the ego along its path at fixed lateral offset;
// other agents move at constant speed along their paths. Returns steps x 2
// world positions. `cv` ignores the scene and extrapolates the ego's velocity.
Tensor rollout_baseline(const SceneMap& map, const AgentState& ego, std::span<const AgentState> others,
                        Index steps, double dt, BaselineKind kind, const IdmParams& idm = {},
                        const SceneConfig& cfg = {});

// Constant-velocity extrapolation from the last two samples.
Tensor constant_velocity(const TrackSample& prev, const TrackSample& cur, Index steps, double dt);

// Baseline prediction for `ego_id` from the scene at `frame`.
Tensor baseline_predict(const SceneMap& map, const std::vector<AgentTrack>& tracks, int ego_id,
                        long frame, Index steps, BaselineKind kind, const IdmParams& idm = {},
                        const SceneConfig& cfg = {});

}  // namespace hiertraj
