#pragma once

#include "hiertraj/scene/dia.hpp"

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace hiertraj {

// Tracks plus their arclengths on the assigned paths, for label queries.
class TrackSet {
 public:
  TrackSet(const SceneMap& map, std::vector<AgentTrack> tracks, const SceneConfig& cfg = {});

  const SceneMap& map() const { return *map_; }
  const std::vector<AgentTrack>& tracks() const { return tracks_; }
  const AgentTrack& track(int id) const;
  bool has(int id) const { return index_.count(id) > 0; }

  // Arclength at `frame`; past the end of the track it is extrapolated at
  // the last observed speed.
  double s_at(int id, long frame) const;
  // First frame >= from (and <= to) where s reaches `s_target`.
  std::optional<long> reach_frame(int id, double s_target, long from, long to) const;

 private:
  const SceneMap* map_;
  std::vector<AgentTrack> tracks_;
  std::vector<std::vector<double>> arclength_;
  std::unordered_map<int, std::size_t> index_;
};

// Id of the node the ego inserts into over (frame, frame + horizon]:
// the front DIA when the ego does not reach its next interaction point;
// otherwise the DIA of the agent whose conflict point the ego reaches first
// and before that agent does; otherwise the front DIA.
int insertion_label(const TrackSet& set, std::span<const DynamicInsertionArea> dias, int ego_id,
                    long frame, long horizon);

// Distance the agent travels along its path over the next `horizon` frames.
double goal_label(const TrackSet& set, int agent_id, long frame, long horizon);

}  // namespace hiertraj
