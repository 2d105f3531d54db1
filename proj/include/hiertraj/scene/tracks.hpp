#pragma once

#include "hiertraj/scene/scene_map.hpp"

#include <filesystem>
#include <vector>

namespace hiertraj {

inline constexpr double kSampleDt = 0.1;

struct TrackSample {
  long frame = 0;
  long timestamp_ms = 0;
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
};

// Samples are consecutive frames at 10 Hz.
struct AgentTrack {
  int id = -1;
  std::vector<TrackSample> samples;
  int path_id = -1;

  long first_frame() const { return samples.front().frame; }
  long last_frame() const { return samples.back().frame; }
  bool covers(long frame) const {
    return !samples.empty() && frame >= first_frame() && frame <= last_frame();
  }
  const TrackSample& at(long frame) const { return samples[static_cast<std::size_t>(frame - first_frame())]; }
};

// Throws ParseError on gaps, non-monotone timestamps or spacing other than
// 100 ms.
void validate_track(const AgentTrack& track);

// Reads `track_id,frame_id,timestamp_ms,x,y,vx,vy,psi_rad` (any column order,
// extra columns ignored; an optional `v` column overrides hypot(vx, vy)).
// Tracks come back sorted by id; errors name the offending line.
std::vector<AgentTrack> read_tracks_csv(const std::filesystem::path& path);
void write_tracks_csv(const std::vector<AgentTrack>& tracks, const std::filesystem::path& path);

// Path with minimum mean |d| over samples [begin, end), ties broken by mean
// |heading_rel|. Paths that cannot project every sample are skipped. Returns
// -1 when no path fits.
int assign_path(const AgentTrack& track, const SceneMap& map, std::size_t begin, std::size_t end,
                double corridor = kDefaultCorridor);

// Assigns every track using all of its samples.
void assign_paths(std::vector<AgentTrack>& tracks, const SceneMap& map,
                  double corridor = kDefaultCorridor);

// Arclength of every sample on the track's assigned path.
std::vector<double> track_arclengths(const AgentTrack& track, const SceneMap& map,
                                     double corridor = kDefaultCorridor);

}  // namespace hiertraj
