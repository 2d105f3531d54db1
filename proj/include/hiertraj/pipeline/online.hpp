#pragma once

#include "hiertraj/adaptation/mekf.hpp"
#include "hiertraj/pipeline/config.hpp"
#include "hiertraj/pipeline/dataset.hpp"
#include "hiertraj/sgn/sgn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace hiertraj {

// Goal for an agent at a frame. Generated goals come from the graph model at
// the agent's own node and fall back to current speed times the horizon when
// no graph can be built. Ground-truth goals read the future of `tracks`.
GoalProvider make_goal_provider(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                GoalSource source, const SgnModel* sgn, Index history, Index horizon,
                                const SceneConfig& scene = {});

struct OnlineSummary {
  long predictions = 0;        // predictions with a full future
  double short_fixed = 0.0;    // mean error over the first short_steps, no adaptation
  double short_adapted = 0.0;
  double long_fixed = 0.0;     // mean error over the horizon
  double long_adapted = 0.0;
  double ade2_fixed = 0.0;     // mean of the logged window error
  double ade2_adapted = 0.0;
  int adaptations = 0;

  double short_gain() const { return 1.0 - short_adapted / short_fixed; }
  double long_change() const { return long_adapted / long_fixed - 1.0; }
  double ade2_gain() const { return 1.0 - ade2_adapted / ade2_fixed; }
  nlohmann::json to_json() const;
};

// Runs every track of the stream with and without adaptation and compares the
// two. Tracks must carry path ids.
OnlineSummary compare_online(const EdnModel& model, const SceneMap& map, const std::vector<AgentTrack>& tracks,
                             const GoalProvider& goal, const MekfConfig& cfg, Index short_steps = 3,
                             std::vector<AdaptationLogRow>* log = nullptr);

}  // namespace hiertraj
