#pragma once

#include "hiertraj/scene/reference_path.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace hiertraj {

struct Crossing {
  double s_a = 0.0;
  double s_b = 0.0;
};

// Transversal intersections between the two polylines, each reported once
// (half-open segments), ordered by s_a. Touching points at the ends of shared
// runs are not crossings.
std::vector<Crossing> find_conflict_points(const ReferencePath& a, const ReferencePath& b);

// Maximal runs of coincident consecutive waypoints (tolerance 1e-6 m), as
// seen from `a`.
std::vector<SharedRun> find_shared_runs(const ReferencePath& a, const ReferencePath& b);

// Set of reference paths with their pairwise relations resolved.
class SceneMap {
 public:
  SceneMap() = default;
  explicit SceneMap(std::vector<ReferencePath> paths);

  const std::vector<ReferencePath>& paths() const { return paths_; }
  const ReferencePath& path(int id) const;
  bool has_path(int id) const;

  // Crossings and merges of path `a` with path `b`, sorted by s on `a`.
  std::vector<PathPoint> interactions(int a, int b) const;

  // Arclength on `to` of the point at arclength `s` on `from`, if the two
  // paths coincide there (same path or shared run).
  std::optional<double> map_arclength(int from, double s, int to) const;

  nlohmann::json to_json() const;
  static SceneMap from_json(const nlohmann::json& j);

 private:
  std::vector<ReferencePath> paths_;
};

SceneMap load_map(const std::filesystem::path& path);
void save_map(const SceneMap& map, const std::filesystem::path& path);

}  // namespace hiertraj
