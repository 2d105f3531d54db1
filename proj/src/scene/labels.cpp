#include "hiertraj/scene/labels.hpp"

#include "hiertraj/error.hpp"

#include <limits>
#include <string>

namespace hiertraj {

TrackSet::TrackSet(const SceneMap& map, std::vector<AgentTrack> tracks, const SceneConfig& cfg)
    : map_(&map), tracks_(std::move(tracks)) {
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    index_[tracks_[i].id] = i;
    arclength_.push_back(track_arclengths(tracks_[i], map, cfg.corridor));
  }
}

const AgentTrack& TrackSet::track(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown track " + std::to_string(id));
  return tracks_[it->second];
}

double TrackSet::s_at(int id, long frame) const {
  const std::size_t i = index_.at(id);
  const auto& t = tracks_[i];
  const auto& s = arclength_[i];
  if (frame <= t.first_frame()) return s.front();
  if (frame <= t.last_frame()) return s[static_cast<std::size_t>(frame - t.first_frame())];
  return s.back() + t.samples.back().v * kSampleDt * static_cast<double>(frame - t.last_frame());
}

std::optional<long> TrackSet::reach_frame(int id, double s_target, long from, long to) const {
  for (long f = from; f <= to; ++f) {
    if (s_at(id, f) >= s_target) return f;
  }
  return std::nullopt;
}

int insertion_label(const TrackSet& set, std::span<const DynamicInsertionArea> dias, int ego_id,
                    long frame, long horizon) {
  const DynamicInsertionArea* front = nullptr;
  for (const auto& d : dias) {
    if (d.id == ego_id) front = &d;
  }
  if (front == nullptr) throw ConfigError("no front DIA for ego " + std::to_string(ego_id));
  const long end = frame + horizon;
  if (!set.reach_frame(ego_id, front->s_active_ego, frame + 1, end)) return ego_id;

  int best = ego_id;
  long best_frame = std::numeric_limits<long>::max();
  for (const auto& d : dias) {
    if (d.id == ego_id) continue;
    auto ego_reach = set.reach_frame(ego_id, d.s_active_ego, frame + 1, end);
    if (!ego_reach) continue;
    const auto& agent = set.track(d.id);
    auto agent_reach = set.reach_frame(d.id, d.s_active, frame, agent.last_frame());
    if (agent_reach && *agent_reach <= *ego_reach) continue;
    if (*ego_reach < best_frame) {
      best = d.id;
      best_frame = *ego_reach;
    }
  }
  return best;
}

double goal_label(const TrackSet& set, int agent_id, long frame, long horizon) {
  return set.s_at(agent_id, frame + horizon) - set.s_at(agent_id, frame);
}

}  // namespace hiertraj
