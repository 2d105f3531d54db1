#include "hiertraj/numerics/param_vector.hpp"

#include "hiertraj/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>

namespace hiertraj {

namespace {
constexpr char kMagic[8] = {'H', 'T', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr int kJsonVersion = 1;
}  // namespace

std::size_t ParamVector::add_segment(std::string name, Index length) {
  if (length <= 0) throw ShapeError("segment '" + name + "' must have positive length");
  if (find(name)) throw ConfigError("duplicate parameter segment '" + name + "'");
  const Index offset = values_.size();
  segments_.push_back(Segment{std::move(name), offset, length});
  values_.conservativeResize(offset + length);
  values_.tail(length).setZero();
  return segments_.size() - 1;
}

std::optional<std::size_t> ParamVector::find(std::string_view name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamVector::index_of(std::string_view name) const {
  auto i = find(name);
  if (!i) throw ConfigError("unknown parameter segment '" + std::string(name) + "'");
  return *i;
}

Eigen::VectorBlock<Vector> ParamVector::segment_values(std::size_t i) {
  const Segment& s = segments_.at(i);
  return values_.segment(s.offset, s.length);
}

Eigen::VectorBlock<const Vector> ParamVector::segment_values(std::size_t i) const {
  const Segment& s = segments_.at(i);
  return values_.segment(s.offset, s.length);
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  out.segments_ = segments_;
  out.values_ = Vector::Zero(values_.size());
  return out;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = other.segments_[i];
    if (a.name != b.name || a.offset != b.offset || a.length != b.length) return false;
  }
  return values_.size() == other.values_.size();
}

Index ParamVector::packed_length(std::span<const std::size_t> segs) const {
  Index n = 0;
  for (auto s : segs) n += segments_.at(s).length;
  return n;
}

Vector ParamVector::pack(std::span<const std::size_t> segs) const {
  Vector out(packed_length(segs));
  Index at = 0;
  for (auto s : segs) {
    const Segment& seg = segments_.at(s);
    out.segment(at, seg.length) = values_.segment(seg.offset, seg.length);
    at += seg.length;
  }
  return out;
}

void ParamVector::unpack(std::span<const std::size_t> segs, const Vector& packed) {
  if (packed.size() != packed_length(segs)) {
    throw ShapeError("unpack: packed length " + std::to_string(packed.size()) +
                     " does not match selected segments");
  }
  Index at = 0;
  for (auto s : segs) {
    const Segment& seg = segments_.at(s);
    values_.segment(seg.offset, seg.length) = packed.segment(at, seg.length);
    at += seg.length;
  }
}

nlohmann::json ParamVector::to_json() const {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : segments_) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
  }
  std::vector<double> vals(values_.data(), values_.data() + values_.size());
  return {{"format", "hiertraj-params"}, {"version", kJsonVersion}, {"segments", segs},
          {"values", vals}};
}

ParamVector ParamVector::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "hiertraj-params") throw ParseError("not a parameter checkpoint");
  if (j.value("version", 0) != kJsonVersion) throw ParseError("unsupported checkpoint version");
  ParamVector p;
  for (const auto& s : j.at("segments")) {
    const auto offset = s.at("offset").get<Index>();
    p.add_segment(s.at("name").get<std::string>(), s.at("length").get<Index>());
    if (p.segments_.back().offset != offset) throw ParseError("segment table is not contiguous");
  }
  const auto vals = j.at("values").get<std::vector<double>>();
  if (static_cast<Index>(vals.size()) != p.size()) {
    throw ParseError("checkpoint value count does not match segment table");
  }
  for (Index i = 0; i < p.size(); ++i) p.values_[i] = vals[static_cast<std::size_t>(i)];
  return p;
}

void save_params_binary(const ParamVector& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kBinaryVersion), sizeof kBinaryVersion);
  put_u64(p.segment_count());
  for (const auto& s : p.segments()) {
    put_u64(s.name.size());
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_u64(static_cast<std::uint64_t>(s.length));
  }
  out.write(reinterpret_cast<const char*>(p.values().data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.size())));
  if (!out) throw Error("write failed for " + path.string());
}

ParamVector load_params_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("bad checkpoint magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kBinaryVersion) throw ParseError("unsupported checkpoint version");
  auto get_u64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ParseError("truncated checkpoint");
    return v;
  };
  ParamVector p;
  const auto count = get_u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(get_u64(), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    p.add_segment(std::move(name), static_cast<Index>(get_u64()));
  }
  in.read(reinterpret_cast<char*>(p.values().data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.size())));
  if (!in) throw ParseError("truncated checkpoint values");
  return p;
}

}  // namespace hiertraj
