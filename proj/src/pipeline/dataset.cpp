#include "hiertraj/pipeline/dataset.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

namespace hiertraj {

WindowStats& WindowStats::operator+=(const WindowStats& o) {
  windows += o.windows;
  dropped_no_front += o.dropped_no_front;
  dropped_projection += o.dropped_projection;
  return *this;
}

nlohmann::json WindowStats::to_json() const {
  return {{"windows", windows},
          {"dropped_no_front", dropped_no_front},
          {"dropped_projection", dropped_projection}};
}

GraphIndex::GraphIndex(const SceneMap& map, const std::vector<AgentTrack>& tracks, const SceneConfig& cfg) {
  if (tracks.empty()) return;
  long first = tracks.front().first_frame(), last = tracks.front().last_frame();
  for (const auto& t : tracks) {
    first = std::min(first, t.first_frame());
    last = std::max(last, t.last_frame());
  }
  for (long f = first; f <= last; ++f) {
    try {
      const auto states = snapshot(map, tracks, f, cfg);
      FrameDias fd;
      for (const auto& ego : states) {
        const auto inter = select_interacting(map, ego, states, cfg);
        fd.emplace(ego.id, extract_dias(map, ego, inter, states, cfg));
      }
      frames_.emplace(f, std::move(fd));
    } catch (const ProjectionError&) {
      frames_.emplace(f, std::nullopt);
    }
  }
}

const std::vector<DynamicInsertionArea>* GraphIndex::dias(int agent_id, long frame) const {
  auto it = frames_.find(frame);
  if (it == frames_.end() || !it->second) return nullptr;
  auto jt = it->second->find(agent_id);
  return jt == it->second->end() ? nullptr : &jt->second;
}

std::optional<SemanticGraph> GraphIndex::graph(int agent_id, long frame, Index history, int* why) const {
  std::vector<std::vector<DynamicInsertionArea>> window;
  for (long f = frame - history; f <= frame; ++f) {
    auto it = frames_.find(f);
    if (it == frames_.end() || !it->second) {
      if (why != nullptr) *why = 1;
      return std::nullopt;
    }
    auto jt = it->second->find(agent_id);
    window.push_back(jt == it->second->end() ? std::vector<DynamicInsertionArea>{} : jt->second);
  }
  try {
    return build_semantic_graph(window, agent_id);
  } catch (const ConfigError&) {
    if (why != nullptr) *why = 2;
    return std::nullopt;
  }
}

std::vector<WindowSample> extract_windows(const SceneMap& map, std::vector<AgentTrack> tracks,
                                          int episode, Index history, Index horizon,
                                          WindowStats& stats, const SceneConfig& cfg) {
  if (history < 0 || horizon < 1) throw ConfigError("windows: history >= 0 and horizon >= 1 required");
  for (auto& t : tracks) {
    if (t.path_id < 0) t.path_id = assign_path(t, map, 0, t.samples.size(), cfg.corridor);
  }
  std::erase_if(tracks, [](const AgentTrack& t) { return t.path_id < 0 || t.samples.empty(); });
  if (tracks.empty()) return {};

  const GraphIndex index(map, tracks, cfg);
  const TrackSet set(map, tracks, cfg);
  std::vector<WindowSample> out;
  for (const auto& t : set.tracks()) {
    for (long t0 = t.first_frame() + history; t0 + horizon <= t.last_frame(); ++t0) {
      int why = 0;
      auto graph = index.graph(t.id, t0, history, &why);
      if (!graph) {
        ++(why == 1 ? stats.dropped_projection : stats.dropped_no_front);
        continue;
      }
      WindowSample w;
      w.graph = std::move(*graph);
      w.episode = episode;
      w.agent_id = t.id;
      w.frame = t0;
      w.path_id = t.path_id;
      w.label_node = insertion_label(set, *index.dias(t.id, t0), t.id, t0, horizon);
      w.labels.inserted = w.graph.index_of(w.label_node);
      for (int node : w.graph.node_ids) w.labels.goals.push_back(goal_label(set, node, t0, horizon));
      w.goal = goal_label(set, t.id, t0, horizon);
      for (long f = t0 - history; f <= t0; ++f) w.past.push_back(t.at(f));
      for (long f = t0 + 1; f <= t0 + horizon; ++f) w.future.push_back(t.at(f));
      out.push_back(std::move(w));
      ++stats.windows;
    }
  }
  return out;
}

DatasetSplit split_windows(const std::vector<WindowSample>& samples, double train_fraction,
                           double validation_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && validation_fraction >= 0 && train_fraction + validation_fraction <= 1.0)) {
    throw ConfigError("split: fractions must be non-negative with train > 0 and sum <= 1");
  }
  std::vector<std::pair<int, int>> groups;
  for (const auto& s : samples) groups.emplace_back(s.episode, s.agent_id);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  const auto n = static_cast<double>(groups.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * n));
  std::map<std::pair<int, int>, int> side;
  for (std::size_t i = 0; i < groups.size(); ++i) side[groups[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  DatasetSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    switch (side.at({samples[i].episode, samples[i].agent_id})) {
      case 0: split.train.push_back(i); break;
      case 1: split.validation.push_back(i); break;
      default: split.test.push_back(i); break;
    }
  }
  return split;
}

std::vector<std::size_t> subsample(const std::vector<std::size_t>& indices, std::size_t limit,
                                   std::uint64_t seed) {
  if (indices.size() <= limit) return indices;
  std::vector<std::size_t> pick(indices.size());
  std::iota(pick.begin(), pick.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(limit);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> out;
  for (auto p : pick) out.push_back(indices[p]);
  return out;
}

nlohmann::json window_to_json(const WindowSample& w) {
  nlohmann::json steps = nlohmann::json::array();
  for (Index k = 0; k < w.graph.steps(); ++k) {
    nlohmann::json nodes = nlohmann::json::array();
    for (Index i = 0; i < w.graph.node_count(); ++i) {
      if (w.graph.mask(i, k) == 0.0) {
        nodes.push_back(nullptr);
        continue;
      }
      std::vector<double> abs(w.graph.absolute[static_cast<std::size_t>(k)].row(i).begin(),
                              w.graph.absolute[static_cast<std::size_t>(k)].row(i).end());
      nodes.push_back(abs);
    }
    steps.push_back(nodes);
  }
  return {{"episode", w.episode},
          {"agent_id", w.agent_id},
          {"frame", w.frame},
          {"path_id", w.path_id},
          {"node_ids", w.graph.node_ids},
          {"features", steps},
          {"label_node", w.label_node},
          {"node_goals", w.labels.goals},
          {"goal", w.goal}};
}

void write_labels_csv(const std::vector<WindowSample>& windows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "episode,agent_id,frame,label_node,yields,goal\n" << std::setprecision(17);
  for (const auto& w : windows) {
    out << w.episode << ',' << w.agent_id << ',' << w.frame << ',' << w.label_node << ','
        << (w.yields() ? 1 : 0) << ',' << w.goal << '\n';
  }
}

}  // namespace hiertraj
