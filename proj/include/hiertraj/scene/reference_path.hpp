#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace hiertraj {

using Vec2 = Eigen::Vector2d;

double wrap_angle(double a);

struct FrenetState {
  double s = 0.0;
  double d = 0.0;  // positive to the left of the tangent
  double v = 0.0;
  double heading_rel = 0.0;
};

enum class PointKind { crossing, merge, brk };

const char* to_string(PointKind k);

// A point on this path where another path crosses, joins or leaves it.
struct PathPoint {
  double s = 0.0;
  int other_path = -1;
  double s_other = 0.0;
  PointKind kind = PointKind::crossing;
};

// Stretch where this path and `other_path` run over identical waypoints.
// Arclength on the other path is s_other = other_begin + (s - begin).
struct SharedRun {
  int other_path = -1;
  double begin = 0.0;
  double end = 0.0;
  double other_begin = 0.0;
};

// Polyline with arclength parameterization. Outside [0, length()] the path is
// extended along its first and last segment.
//
// The lateral frame uses a normal field interpolated linearly between vertex
// bisectors, which makes (s, d) -> (x, y) a continuous bijection near the path
// so that projection and to_cartesian are exact inverses.
class ReferencePath {
 public:
  ReferencePath() = default;
  ReferencePath(int id, std::vector<Vec2> waypoints);

  int id() const { return id_; }
  const std::vector<Vec2>& waypoints() const { return waypoints_; }
  const std::vector<double>& arclength() const { return arclength_; }
  double length() const { return arclength_.back(); }

  Vec2 position(double s) const;
  Vec2 tangent(double s) const;
  Vec2 normal(double s) const;
  double heading(double s) const;
  Vec2 to_cartesian(double s, double d) const;

  // Nearest (s, d) within `corridor` of the path, nullopt otherwise.
  std::optional<FrenetState> try_project(const Vec2& p, double speed, double yaw,
                                         double corridor) const;

  // Filled in by SceneMap; sorted by s.
  std::vector<PathPoint> points;
  std::vector<SharedRun> shared_runs;

 private:
  std::size_t segment_of(double s) const;

  int id_ = -1;
  std::vector<Vec2> waypoints_;
  std::vector<double> arclength_;
  std::vector<Vec2> vertex_normals_;
};

inline constexpr double kDefaultCorridor = 10.0;

// Throws ProjectionError when the point lies outside the corridor.
FrenetState project_to_frenet(const ReferencePath& path, const Vec2& p, double speed, double yaw,
                              double corridor = kDefaultCorridor);

}  // namespace hiertraj
