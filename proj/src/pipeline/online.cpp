#include "hiertraj/pipeline/online.hpp"

#include "hiertraj/error.hpp"
#include "hiertraj/scene/labels.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>

namespace hiertraj {

GoalProvider make_goal_provider(const SceneMap& map, const std::vector<AgentTrack>& tracks,
                                GoalSource source, const SgnModel* sgn, Index history, Index horizon,
                                const SceneConfig& scene) {
  if (source == GoalSource::ground_truth) {
    auto set = std::make_shared<TrackSet>(map, tracks, scene);
    return [set, horizon](const AgentTrack& t, long frame) { return goal_label(*set, t.id, frame, horizon); };
  }
  if (sgn == nullptr) throw ConfigError("generated goals need a trained graph model");
  auto index = std::make_shared<GraphIndex>(map, tracks, scene);
  auto cache = std::make_shared<std::map<std::pair<int, long>, double>>();
  return [index, cache, sgn, history, horizon](const AgentTrack& t, long frame) {
    const auto key = std::make_pair(t.id, frame);
    if (auto it = cache->find(key); it != cache->end()) return it->second;
    double goal = t.at(frame).v * static_cast<double>(horizon) * kSampleDt;
    if (auto graph = index->graph(t.id, frame, history)) {
      goal = sgn_predict(*sgn, *graph).goal_mean[graph->reference];
    }
    cache->emplace(key, goal);
    return goal;
  };
}

nlohmann::json OnlineSummary::to_json() const {
  return {{"predictions", predictions},
          {"adaptations", adaptations},
          {"short_fixed", short_fixed},
          {"short_adapted", short_adapted},
          {"short_gain", short_gain()},
          {"long_fixed", long_fixed},
          {"long_adapted", long_adapted},
          {"long_change", long_change()},
          {"ade2_fixed", ade2_fixed},
          {"ade2_adapted", ade2_adapted},
          {"ade2_gain", ade2_gain()}};
}

OnlineSummary compare_online(const EdnModel& model, const SceneMap& map, const std::vector<AgentTrack>& tracks,
                             const GoalProvider& goal, const MekfConfig& cfg, Index short_steps,
                             std::vector<AdaptationLogRow>* log) {
  const Index T = model.cfg.horizon;
  if (short_steps < 1 || short_steps > T) throw ConfigError("online: short steps must lie in [1, horizon]");
  OnlineSummary out;
  long n2 = 0;
  for (const auto& track : tracks) {
    if (track.path_id < 0) throw ConfigError("online: track " + std::to_string(track.id) + " has no path");
    const auto& path = map.path(track.path_id);
    const auto fixed = run_online(model, track, path, goal, cfg, false);
    const auto adapted = run_online(model, track, path, goal, cfg, true);
    out.adaptations += adapted.adaptations;
    std::map<long, long> frame_of;
    for (const auto& s : track.samples) frame_of.emplace(s.timestamp_ms, s.frame);
    if (log != nullptr) log->insert(log->end(), adapted.log.begin(), adapted.log.end());
    for (std::size_t k = 0; k < fixed.predictions.size(); ++k) {
      const long f0 = frame_of.at(fixed.predictions[k].t0_ms);
      if (f0 + T <= track.last_frame()) {
        Tensor truth(T, 2);
        for (Index j = 0; j < T; ++j) {
          const auto& s = track.at(f0 + 1 + j);
          truth(j, 0) = s.x;
          truth(j, 1) = s.y;
        }
        const Eigen::VectorXd e_fixed = (fixed.predictions[k].xy - truth).rowwise().norm();
        const Eigen::VectorXd e_adapted = (adapted.predictions[k].xy - truth).rowwise().norm();
        out.short_fixed += e_fixed.head(short_steps).mean();
        out.short_adapted += e_adapted.head(short_steps).mean();
        out.long_fixed += e_fixed.mean();
        out.long_adapted += e_adapted.mean();
        ++out.predictions;
      }
      const auto& a = fixed.log[k].ade.ade2;
      const auto& b = adapted.log[k].ade.ade2;
      if (a && b) {
        out.ade2_fixed += *a;
        out.ade2_adapted += *b;
        ++n2;
      }
    }
  }
  if (out.predictions > 0) {
    const double n = static_cast<double>(out.predictions);
    out.short_fixed /= n;
    out.short_adapted /= n;
    out.long_fixed /= n;
    out.long_adapted /= n;
  }
  if (n2 > 0) {
    out.ade2_fixed /= static_cast<double>(n2);
    out.ade2_adapted /= static_cast<double>(n2);
  }
  return out;
}

}  // namespace hiertraj
