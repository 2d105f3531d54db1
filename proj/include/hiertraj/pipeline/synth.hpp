#pragma once

#include "hiertraj/baselines/baselines.hpp"
#include "hiertraj/scene/tracks.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hiertraj {

enum class ScenarioKind { intersection, roundabout };
const char* to_string(ScenarioKind k);
ScenarioKind scenario_from_string(const std::string& s);

// Five arms 72 degrees apart, every entry connected to every other exit.
SceneMap make_intersection_map();
// Ring of radius 18 m with eight arms; each entry connects to the exits two,
// four and six arms further counter-clockwise.
SceneMap make_roundabout_map();
SceneMap make_scenario_map(ScenarioKind kind);

struct SynthConfig {
  ScenarioKind kind = ScenarioKind::intersection;
  int n_agents = 12;
  double spawn_rate = 0.8;     // mean arrivals per second over all entries
  double v0_min = 8.0;         // desired speed range, m/s
  double v0_max = 12.0;
  double headway_min = 1.0;
  double headway_max = 2.0;
  // Pass/yield: agent a goes first when t_b - t_a exceeds (theta_a - theta_b) / 2,
  // where t are times to the conflict point and theta ~ N(gap_mean, gap_noise).
  double gap_mean = 0.5;
  double gap_noise = 0.2;
  double interaction_range = 40.0;  // metres to the conflict point
  double stop_offset = 1.0;         // yielding agents stop this far before the point
  double max_decel = 8.0;
  // Persistent behaviour offset applied to every agent: lateral offset from
  // the path centre (m) and a scale on the desired speed.
  double lateral_offset = 0.0;
  double speed_factor = 1.0;
  IdmParams idm;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct Episode {
  std::vector<AgentTrack> tracks;
};

// Agents enter at random times on random routes and leave at the path end.
// Deterministic for a given seed.
Episode synth_episode(const SceneMap& map, const SynthConfig& cfg, std::uint64_t seed);

}  // namespace hiertraj
