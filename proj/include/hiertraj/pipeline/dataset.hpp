#pragma once

#include "hiertraj/scene/labels.hpp"
#include "hiertraj/scene/semantic_graph.hpp"
#include "hiertraj/sgn/sgn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

namespace hiertraj {

// One (agent, t0) window: graph over t0 - history .. t0, track samples over
// the same span, and labels over (t0, t0 + horizon].
struct WindowSample {
  int episode = 0;
  int agent_id = -1;
  long frame = 0;
  int path_id = -1;
  SemanticGraph graph;
  SgnLabels labels;
  int label_node = -1;  // node id of the inserted DIA
  std::vector<TrackSample> past;    // history + 1 samples, oldest first
  std::vector<TrackSample> future;  // horizon samples
  double goal = 0.0;                // distance travelled over the horizon

  bool yields() const { return label_node == agent_id; }
};

struct WindowStats {
  long windows = 0;
  long dropped_no_front = 0;   // reference DIA missing at some history step
  long dropped_projection = 0; // a frame in the window could not be projected

  WindowStats& operator+=(const WindowStats& o);
  nlohmann::json to_json() const;
};

// DIAs of every agent at every frame of a scene, for building graphs on demand.
class GraphIndex {
 public:
  // Tracks must already carry path ids.
  GraphIndex(const SceneMap& map, const std::vector<AgentTrack>& tracks, const SceneConfig& cfg = {});

  // Graph over frame - history .. frame for `agent_id`; nullopt when a frame
  // could not be projected or the reference DIA is missing. `why` receives
  // 1 for a projection failure and 2 for a missing reference.
  std::optional<SemanticGraph> graph(int agent_id, long frame, Index history, int* why = nullptr) const;
  const std::vector<DynamicInsertionArea>* dias(int agent_id, long frame) const;

 private:
  using FrameDias = std::unordered_map<int, std::vector<DynamicInsertionArea>>;
  std::map<long, std::optional<FrameDias>> frames_;
};

// Windows at stride 1 over every track that covers the whole span. Tracks
// without a path are assigned one from all of their samples.
std::vector<WindowSample> extract_windows(const SceneMap& map, std::vector<AgentTrack> tracks,
                                          int episode, Index history, Index horizon,
                                          WindowStats& stats, const SceneConfig& cfg = {});

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Whole (episode, agent) tracks go to one side, so train and test never share
// an (agent, t0) pair. Fractions are of the track count. Deterministic in seed.
DatasetSplit split_windows(const std::vector<WindowSample>& samples, double train_fraction,
                           double validation_fraction, std::uint64_t seed);

// At most `limit` indices, drawn without replacement and returned in order.
std::vector<std::size_t> subsample(const std::vector<std::size_t>& indices, std::size_t limit,
                                   std::uint64_t seed);

nlohmann::json window_to_json(const WindowSample& w);

// `episode,agent_id,frame,label_node,yields,goal`, one row per window.
void write_labels_csv(const std::vector<WindowSample>& windows, const std::filesystem::path& path);

}  // namespace hiertraj
