#include "hiertraj/scene/tracks.hpp"

#include "hiertraj/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

namespace hiertraj {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t k = 0;
    while (k < cell.size() && cell[k] == ' ') ++k;
    out.push_back(cell.substr(k));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& column, std::size_t line) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(line) + ": column '" + column +
                     "' is not numeric: '" + s + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ParseError("line " + std::to_string(line) + ": column '" + column + "' is not finite");
    }
  }
  return value;
}

}  // namespace

void validate_track(const AgentTrack& track) {
  for (std::size_t i = 1; i < track.samples.size(); ++i) {
    const auto& a = track.samples[i - 1];
    const auto& b = track.samples[i];
    if (b.frame != a.frame + 1) {
      throw ParseError("track " + std::to_string(track.id) + ": frame " + std::to_string(a.frame) +
                       " followed by " + std::to_string(b.frame));
    }
    if (b.timestamp_ms - a.timestamp_ms != 100) {
      throw ParseError("track " + std::to_string(track.id) + ": timestamps " +
                       std::to_string(a.timestamp_ms) + " -> " + std::to_string(b.timestamp_ms) +
                       " are not 100 ms apart");
    }
  }
}

std::vector<AgentTrack> read_tracks_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open tracks file " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split(line);
  const char* required[] = {"track_id", "frame_id", "timestamp_ms", "x", "y", "vx", "vy", "psi_rad"};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : required) {
    if (!col.count(name)) throw ParseError(path.string() + ": missing column '" + name + "'");
  }
  const bool has_v = col.count("v") > 0;

  std::map<int, AgentTrack> by_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() < header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " columns, got " +
                       std::to_string(cells.size()));
    }
    auto num = [&](const char* name) { return parse_number<double>(cells[col[name]], name, line_no); };
    const int id = parse_number<int>(cells[col["track_id"]], "track_id", line_no);
    TrackSample s;
    s.frame = parse_number<long>(cells[col["frame_id"]], "frame_id", line_no);
    s.timestamp_ms = parse_number<long>(cells[col["timestamp_ms"]], "timestamp_ms", line_no);
    s.x = num("x");
    s.y = num("y");
    s.v = has_v ? num("v") : std::hypot(num("vx"), num("vy"));
    s.yaw = num("psi_rad");
    auto& track = by_id[id];
    track.id = id;
    if (!track.samples.empty() && s.timestamp_ms <= track.samples.back().timestamp_ms) {
      throw ParseError("line " + std::to_string(line_no) + ": timestamps of track " +
                       std::to_string(id) + " are not increasing");
    }
    track.samples.push_back(s);
  }
  std::vector<AgentTrack> out;
  for (auto& [id, t] : by_id) {
    validate_track(t);
    out.push_back(std::move(t));
  }
  return out;
}

void write_tracks_csv(const std::vector<AgentTrack>& tracks, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "track_id,frame_id,timestamp_ms,x,y,vx,vy,psi_rad,v\n";
  char buf[512];
  for (const auto& t : tracks) {
    for (const auto& s : t.samples) {
      std::snprintf(buf, sizeof(buf), "%d,%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t.id,
                    s.frame, s.timestamp_ms, s.x, s.y, s.v * std::cos(s.yaw),
                    s.v * std::sin(s.yaw), s.yaw, s.v);
      out << buf;
    }
  }
}

int assign_path(const AgentTrack& track, const SceneMap& map, std::size_t begin, std::size_t end,
                double corridor) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  double best_h = std::numeric_limits<double>::infinity();
  end = std::min(end, track.samples.size());
  if (begin >= end) return -1;
  for (const auto& p : map.paths()) {
    double sum_d = 0.0, sum_h = 0.0;
    bool ok = true;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = track.samples[i];
      auto f = p.try_project(s.position(), s.v, s.yaw, corridor);
      if (!f) {
        ok = false;
        break;
      }
      sum_d += std::abs(f->d);
      sum_h += std::abs(f->heading_rel);
    }
    if (!ok) continue;
    const double n = static_cast<double>(end - begin);
    const double md = sum_d / n, mh = sum_h / n;
    if (md < best_d - 1e-12 || (std::abs(md - best_d) <= 1e-12 && mh < best_h)) {
      best = p.id();
      best_d = md;
      best_h = mh;
    }
  }
  return best;
}

void assign_paths(std::vector<AgentTrack>& tracks, const SceneMap& map, double corridor) {
  for (auto& t : tracks) t.path_id = assign_path(t, map, 0, t.samples.size(), corridor);
}

std::vector<double> track_arclengths(const AgentTrack& track, const SceneMap& map,
                                     double corridor) {
  if (track.path_id < 0) throw ConfigError("track " + std::to_string(track.id) + " has no path");
  const auto& p = map.path(track.path_id);
  std::vector<double> out;
  out.reserve(track.samples.size());
  for (const auto& s : track.samples) {
    out.push_back(project_to_frenet(p, s.position(), s.v, s.yaw, corridor).s);
  }
  return out;
}

}  // namespace hiertraj
