#pragma once

#include "hiertraj/numerics/tensor.hpp"
#include "hiertraj/scene/tracks.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace hiertraj {

struct SceneConfig {
  double corridor = kDefaultCorridor;
  double passed_margin = 2.0;
  std::size_t max_nodes = 8;
};

// One agent at one frame, projected onto its own path.
struct AgentState {
  int id = -1;
  int path_id = -1;
  Vec2 pos = Vec2::Zero();
  double v = 0.0;
  double yaw = 0.0;
  FrenetState frenet;
};

// All agents present at `frame`. Throws ProjectionError if one of them cannot
// be projected onto its assigned path.
std::vector<AgentState> snapshot(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                 long frame, const SceneConfig& cfg = {});

struct Leader {
  int agent_id = -1;
  double s = 0.0;  // leader position in the follower's path frame
};

// Nearest agent strictly ahead on the same path or on a run shared with it.
std::optional<Leader> find_leader(const SceneMap& map, const AgentState& agent,
                                  std::span<const AgentState> others);

enum class InteractionRole { leader, conflict };

struct Interaction {
  int agent_id = -1;
  InteractionRole role = InteractionRole::conflict;
  double s_ego = 0.0;    // conflict point (or leader position) on the ego path
  double s_agent = 0.0;  // conflict point on the agent's path
  PointKind kind = PointKind::crossing;
};

// Agents whose path crosses or merges into the ego's path, where neither the
// agent nor the ego is more than passed_margin past the conflict point, plus
// the ego's leader. Sorted by (s_ego, agent id); never contains the ego.
std::vector<Interaction> select_interacting(const SceneMap& map, const AgentState& ego,
                                            std::span<const AgentState> others,
                                            const SceneConfig& cfg = {});

enum class BoundKind { vehicle, conflict_point, merge_point, break_point, path_end };

const char* to_string(BoundKind k);

struct DiaBound {
  BoundKind kind = BoundKind::vehicle;
  int agent_id = -1;
  double s = 0.0;  // along the DIA's path
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double yaw = 0.0;
};

inline constexpr Index kDiaFeatures = 5;
using DiaFeatures = std::array<double, kDiaFeatures>;

// A slot on `path_id` between two bounds. Longitudinal distances are measured
// to the active point s_active (positive while upstream of it):
//   d_f_lon = s_active - front.s (capped at d_r_lon), d_r_lon = s_active - rear.s,
//   l = d_r_lon - d_f_lon.
struct DynamicInsertionArea {
  int id = -1;  // rear-bound agent id
  int path_id = -1;
  DiaBound front;
  DiaBound rear;
  double s_active = 0.0;
  double s_active_ego = 0.0;  // the same point on the ego path
  double d_f_lon = 0.0;
  double d_r_lon = 0.0;
  double l = 0.0;

  // [d_f_lon, d_r_lon, l, v_f, v_r]
  DiaFeatures features() const { return {d_f_lon, d_r_lon, l, front.v, rear.v}; }
};

void recompute_features(DynamicInsertionArea& dia);

// Front DIA of the ego first, then one DIA per conflicting agent in
// select_interacting order, capped at max_nodes. The ego's leader only bounds
// the front DIA.
std::vector<DynamicInsertionArea> extract_dias(const SceneMap& map, const AgentState& ego,
                                               std::span<const Interaction> interacting,
                                               std::span<const AgentState> all,
                                               const SceneConfig& cfg = {});

// Convenience: snapshot + select + extract for `ego_id` at `frame`.
std::vector<DynamicInsertionArea> dias_at(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                          int ego_id, long frame, const SceneConfig& cfg = {});

}  // namespace hiertraj
