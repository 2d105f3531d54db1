#include "hiertraj/scene/scene_map.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace hiertraj {

namespace {

constexpr double kCoincident = 1e-6;
constexpr std::size_t kChunk = 16;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Box {
  Vec2 lo, hi;
  std::size_t first, last;  // segment range [first, last)
};

std::vector<Box> chunk_boxes(const ReferencePath& p) {
  const auto& w = p.waypoints();
  std::vector<Box> boxes;
  for (std::size_t first = 0; first + 1 < w.size(); first += kChunk) {
    const std::size_t last = std::min(first + kChunk, w.size() - 1);
    Box b{w[first], w[first], first, last};
    for (std::size_t i = first; i <= last; ++i) {
      b.lo = b.lo.cwiseMin(w[i]);
      b.hi = b.hi.cwiseMax(w[i]);
    }
    boxes.push_back(b);
  }
  return boxes;
}

bool overlaps(const Box& a, const Box& b) {
  return a.lo.x() <= b.hi.x() + kCoincident && b.lo.x() <= a.hi.x() + kCoincident &&
         a.lo.y() <= b.hi.y() + kCoincident && b.lo.y() <= a.hi.y() + kCoincident;
}

bool near_run_end(const std::vector<SharedRun>& runs, double s) {
  for (const auto& r : runs) {
    if (std::abs(s - r.begin) < 1e-6 || std::abs(s - r.end) < 1e-6) return true;
  }
  return false;
}

}  // namespace

std::vector<SharedRun> find_shared_runs(const ReferencePath& a, const ReferencePath& b) {
  const auto& wa = a.waypoints();
  const auto& wb = b.waypoints();
  std::vector<SharedRun> runs;
  std::size_t i = 0;
  while (i + 1 < wa.size()) {
    std::size_t j = 0;
    bool matched = false;
    for (; j + 1 < wb.size(); ++j) {
      if ((wa[i] - wb[j]).norm() < kCoincident && (wa[i + 1] - wb[j + 1]).norm() < kCoincident) {
        matched = true;
        break;
      }
    }
    if (!matched) {
      ++i;
      continue;
    }
    std::size_t i1 = i + 1, j1 = j + 1;
    while (i1 + 1 < wa.size() && j1 + 1 < wb.size() &&
           (wa[i1 + 1] - wb[j1 + 1]).norm() < kCoincident) {
      ++i1;
      ++j1;
    }
    runs.push_back(SharedRun{b.id(), a.arclength()[i], a.arclength()[i1], b.arclength()[j]});
    i = i1;
  }
  return runs;
}

std::vector<Crossing> find_conflict_points(const ReferencePath& a, const ReferencePath& b) {
  const auto runs = find_shared_runs(a, b);
  const auto& wa = a.waypoints();
  const auto& wb = b.waypoints();
  const auto boxes_a = chunk_boxes(a);
  const auto boxes_b = chunk_boxes(b);
  std::vector<Crossing> out;
  for (const auto& ba : boxes_a) {
    for (const auto& bb : boxes_b) {
      if (!overlaps(ba, bb)) continue;
      for (std::size_t i = ba.first; i < ba.last; ++i) {
        const Vec2 ea = wa[i + 1] - wa[i];
        const bool last_a = i + 2 == wa.size();
        for (std::size_t j = bb.first; j < bb.last; ++j) {
          const Vec2 eb = wb[j + 1] - wb[j];
          const double denom = cross(ea, eb);
          if (std::abs(denom) < 1e-12 * ea.norm() * eb.norm()) continue;  // parallel
          const Vec2 w = wb[j] - wa[i];
          const double t = cross(w, eb) / denom;
          const double u = cross(w, ea) / denom;
          const bool last_b = j + 2 == wb.size();
          if (t < 0.0 || t > 1.0 || (t == 1.0 && !last_a)) continue;
          if (u < 0.0 || u > 1.0 || (u == 1.0 && !last_b)) continue;
          const double s_a = a.arclength()[i] + t * ea.norm();
          if (near_run_end(runs, s_a)) continue;
          out.push_back(Crossing{s_a, b.arclength()[j] + u * eb.norm()});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Crossing& x, const Crossing& y) { return x.s_a < y.s_a; });
  return out;
}

SceneMap::SceneMap(std::vector<ReferencePath> paths) : paths_(std::move(paths)) {
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (paths_[k].id() == paths_[i].id()) {
        throw ConfigError("duplicate path id " + std::to_string(paths_[i].id()));
      }
    }
  }
  for (auto& a : paths_) {
    a.points.clear();
    a.shared_runs.clear();
    for (const auto& b : paths_) {
      if (&a == &b) continue;
      for (const auto& c : find_conflict_points(a, b)) {
        a.points.push_back(PathPoint{c.s_a, b.id(), c.s_b, PointKind::crossing});
      }
      for (const auto& run : find_shared_runs(a, b)) {
        a.shared_runs.push_back(run);
        const std::size_t ia = static_cast<std::size_t>(
            std::lower_bound(a.arclength().begin(), a.arclength().end(), run.begin - 1e-9) -
            a.arclength().begin());
        const std::size_t ib = static_cast<std::size_t>(
            std::lower_bound(b.arclength().begin(), b.arclength().end(), run.other_begin - 1e-9) -
            b.arclength().begin());
        // Both paths arrive from elsewhere: merge. Both continue elsewhere: break.
        if (ia > 0 && ib > 0) {
          a.points.push_back(PathPoint{run.begin, b.id(), run.other_begin, PointKind::merge});
        }
        const double other_end = run.other_begin + (run.end - run.begin);
        if (run.end < a.length() - 1e-9 && other_end < b.length() - 1e-9) {
          a.points.push_back(PathPoint{run.end, b.id(), other_end, PointKind::brk});
        }
      }
    }
    std::stable_sort(a.points.begin(), a.points.end(),
                     [](const PathPoint& x, const PathPoint& y) {
                       return x.s < y.s || (x.s == y.s && x.other_path < y.other_path);
                     });
  }
}

const ReferencePath& SceneMap::path(int id) const {
  for (const auto& p : paths_) {
    if (p.id() == id) return p;
  }
  throw ConfigError("unknown path id " + std::to_string(id));
}

bool SceneMap::has_path(int id) const {
  return std::any_of(paths_.begin(), paths_.end(), [id](const auto& p) { return p.id() == id; });
}

std::vector<PathPoint> SceneMap::interactions(int a, int b) const {
  std::vector<PathPoint> out;
  for (const auto& p : path(a).points) {
    if (p.other_path == b && p.kind != PointKind::brk) out.push_back(p);
  }
  return out;
}

std::optional<double> SceneMap::map_arclength(int from, double s, int to) const {
  if (from == to) return s;
  for (const auto& run : path(from).shared_runs) {
    if (run.other_path == to && s >= run.begin && s <= run.end) {
      return run.other_begin + (s - run.begin);
    }
  }
  return std::nullopt;
}

nlohmann::json SceneMap::to_json() const {
  nlohmann::json j;
  j["paths"] = nlohmann::json::array();
  for (const auto& p : paths_) {
    nlohmann::json jp;
    jp["id"] = p.id();
    auto& wp = jp["waypoints"] = nlohmann::json::array();
    for (const auto& w : p.waypoints()) wp.push_back({w.x(), w.y()});
    auto& pts = jp["points"] = nlohmann::json::array();
    for (const auto& c : p.points) {
      pts.push_back({{"s", c.s}, {"other_path", c.other_path}, {"s_other", c.s_other},
                     {"kind", to_string(c.kind)}});
    }
    j["paths"].push_back(std::move(jp));
  }
  return j;
}

SceneMap SceneMap::from_json(const nlohmann::json& j) {
  if (!j.contains("paths") || !j["paths"].is_array()) throw ParseError("map: missing 'paths' array");
  std::vector<ReferencePath> paths;
  for (const auto& jp : j["paths"]) {
    try {
      std::vector<Vec2> wps;
      for (const auto& w : jp.at("waypoints")) wps.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
      paths.emplace_back(jp.at("id").get<int>(), std::move(wps));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("map: malformed path entry: ") + e.what());
    }
  }
  return SceneMap(std::move(paths));
}

SceneMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open map file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("map " + path.string() + ": " + e.what());
  }
  return SceneMap::from_json(j);
}

void save_map(const SceneMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << map.to_json().dump(1) << '\n';
}

}  // namespace hiertraj
