#include "hiertraj/scene/reference_path.hpp"

#include "hiertraj/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace hiertraj {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }
Vec2 left_normal(const Vec2& t) { return Vec2(-t.y(), t.x()); }

}  // namespace

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

const char* to_string(PointKind k) {
  switch (k) {
    case PointKind::crossing:
      return "crossing";
    case PointKind::merge:
      return "merge";
    case PointKind::brk:
      return "break";
  }
  return "crossing";
}

ReferencePath::ReferencePath(int id, std::vector<Vec2> waypoints)
    : id_(id), waypoints_(std::move(waypoints)) {
  if (waypoints_.size() < 2) {
    throw ConfigError("path " + std::to_string(id) + " needs at least two waypoints");
  }
  arclength_.assign(waypoints_.size(), 0.0);
  for (std::size_t i = 1; i < waypoints_.size(); ++i) {
    const double step = (waypoints_[i] - waypoints_[i - 1]).norm();
    if (!(step > 0.0)) {
      throw ConfigError("path " + std::to_string(id) + " has repeated waypoint " +
                        std::to_string(i));
    }
    arclength_[i] = arclength_[i - 1] + step;
  }
  const std::size_t n = waypoints_.size();
  vertex_normals_.resize(n);
  vertex_normals_[0] = left_normal((waypoints_[1] - waypoints_[0]).normalized());
  vertex_normals_[n - 1] = left_normal((waypoints_[n - 1] - waypoints_[n - 2]).normalized());
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Vec2 a = left_normal((waypoints_[i] - waypoints_[i - 1]).normalized());
    const Vec2 b = left_normal((waypoints_[i + 1] - waypoints_[i]).normalized());
    const Vec2 sum = a + b;
    vertex_normals_[i] = sum.norm() > 1e-9 ? Vec2(sum.normalized()) : b;
  }
}

std::size_t ReferencePath::segment_of(double s) const {
  if (s <= 0.0) return 0;
  if (s >= length()) return waypoints_.size() - 2;
  auto it = std::upper_bound(arclength_.begin(), arclength_.end(), s);
  return static_cast<std::size_t>(it - arclength_.begin()) - 1;
}

Vec2 ReferencePath::position(double s) const {
  const std::size_t i = segment_of(s);
  const Vec2 e = waypoints_[i + 1] - waypoints_[i];
  return waypoints_[i] + e * ((s - arclength_[i]) / (arclength_[i + 1] - arclength_[i]));
}

Vec2 ReferencePath::tangent(double s) const {
  const std::size_t i = segment_of(s);
  return (waypoints_[i + 1] - waypoints_[i]).normalized();
}

Vec2 ReferencePath::normal(double s) const {
  if (s <= 0.0) return vertex_normals_.front();
  if (s >= length()) return vertex_normals_.back();
  const std::size_t i = segment_of(s);
  const double u = (s - arclength_[i]) / (arclength_[i + 1] - arclength_[i]);
  return ((1.0 - u) * vertex_normals_[i] + u * vertex_normals_[i + 1]).normalized();
}

double ReferencePath::heading(double s) const {
  const Vec2 t = tangent(s);
  return std::atan2(t.y(), t.x());
}

Vec2 ReferencePath::to_cartesian(double s, double d) const { return position(s) + d * normal(s); }

std::optional<FrenetState> ReferencePath::try_project(const Vec2& p, double speed, double yaw,
                                                      double corridor) const {
  double best_s = 0.0, best_d = 0.0;
  bool found = false;
  auto consider = [&](double s, double d) {
    if (!found || std::abs(d) < std::abs(best_d)) {
      best_s = s;
      best_d = d;
      found = true;
    }
  };

  const std::size_t n = waypoints_.size();
  // Linear extensions before the start and past the end.
  {
    const Vec2 t0 = (waypoints_[1] - waypoints_[0]).normalized();
    const double along = (p - waypoints_[0]).dot(t0);
    if (along < 0.0) consider(along, (p - waypoints_[0]).dot(vertex_normals_[0]));
    const Vec2 t1 = (waypoints_[n - 1] - waypoints_[n - 2]).normalized();
    const double past = (p - waypoints_[n - 1]).dot(t1);
    if (past > 0.0) consider(length() + past, (p - waypoints_[n - 1]).dot(vertex_normals_[n - 1]));
  }

  // On segment i the point is c(u) + d n(u) with c, n linear in u; the
  // collinearity condition cross(p - c(u), n(u)) = 0 is quadratic in u.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2& a = waypoints_[i];
    const Vec2 e = waypoints_[i + 1] - a;
    const Vec2 w = p - a;
    const double reach = e.norm() + corridor + 1.0;
    if (w.squaredNorm() > reach * reach) continue;
    const Vec2& n0 = vertex_normals_[i];
    const Vec2 m = vertex_normals_[i + 1] - n0;
    const double qa = -cross(e, m);
    const double qb = cross(w, m) - cross(e, n0);
    const double qc = cross(w, n0);
    double roots[2];
    int count = 0;
    if (std::abs(qa) < 1e-14 * (std::abs(qb) + std::abs(qc) + 1.0)) {
      if (std::abs(qb) > 0.0) roots[count++] = -qc / qb;
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (qb + std::copysign(sq, qb));
        roots[count++] = q / qa;
        if (q != 0.0) roots[count++] = qc / q;
      }
    }
    for (int k = 0; k < count; ++k) {
      double u = roots[k];
      if (u < -1e-12 || u > 1.0 + 1e-12) continue;
      u = std::clamp(u, 0.0, 1.0);
      const Vec2 nv = n0 + u * m;
      const double nn = nv.norm();
      if (nn < 1e-9) continue;
      const Vec2 c = a + u * e;
      consider(arclength_[i] + u * (arclength_[i + 1] - arclength_[i]), (p - c).dot(nv) / nn);
    }
  }
  if (!found || std::abs(best_d) > corridor) return std::nullopt;
  FrenetState out;
  out.s = best_s;
  out.d = best_d;
  out.v = speed;
  out.heading_rel = wrap_angle(yaw - heading(best_s));
  return out;
}

FrenetState project_to_frenet(const ReferencePath& path, const Vec2& p, double speed, double yaw,
                              double corridor) {
  auto f = path.try_project(p, speed, yaw, corridor);
  if (!f) {
    throw ProjectionError("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                          ") is outside the corridor of path " + std::to_string(path.id()));
  }
  return *f;
}

}  // namespace hiertraj
