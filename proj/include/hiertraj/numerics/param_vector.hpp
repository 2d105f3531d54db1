#pragma once

#include "hiertraj/numerics/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hiertraj {

struct Segment {
  std::string name;
  Index offset = 0;
  Index length = 0;
};

// Flat storage for every trainable parameter of a network. Segments are
// appended in order, so they are contiguous and cover [0, size()).
class ParamVector {
 public:
  ParamVector() = default;

  // Appends a zero-initialised segment and returns its index.
  std::size_t add_segment(std::string name, Index length);

  std::size_t segment_count() const { return segments_.size(); }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  const std::vector<Segment>& segments() const { return segments_; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws ConfigError

  Index size() const { return values_.size(); }
  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

  Eigen::VectorBlock<Vector> segment_values(std::size_t i);
  Eigen::VectorBlock<const Vector> segment_values(std::size_t i) const;

  // Same layout, all values zero.
  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& other) const;

  // Concatenates the selected segments (in the given order).
  Vector pack(std::span<const std::size_t> segs) const;
  // Inverse of pack.
  void unpack(std::span<const std::size_t> segs, const Vector& packed);
  Index packed_length(std::span<const std::size_t> segs) const;

  nlohmann::json to_json() const;
  static ParamVector from_json(const nlohmann::json& j);

 private:
  std::vector<Segment> segments_;
  Vector values_;
};

// Binary checkpoint: magic, version, segment table, raw little-endian doubles.
void save_params_binary(const ParamVector& p, const std::filesystem::path& path);
ParamVector load_params_binary(const std::filesystem::path& path);

}  // namespace hiertraj
