#pragma once

// Field snapshots. Layout: one JSON header line terminated by '\n', then
// `count` IEEE-754 float64 values in little-endian byte order, node-major
// (nodes in lexicographic order, axis 0 fastest), d components per node.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "viscoflow/discrete_space.hpp"
#include "viscoflow/error.hpp"

namespace viscoflow {

inline constexpr const char* kSnapshotFormat = "viscoflow-field";
inline constexpr int kSnapshotVersion = 1;

struct Snapshot {
  Field field;
  double time = 0.0;
};

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
  return r;
}

}  // namespace detail

inline void write_snapshot(const std::string& path, const Field& f, double time) {
  nlohmann::ordered_json h;
  h["format"] = kSnapshotFormat;
  h["version"] = kSnapshotVersion;
  h["dim"] = f.dim();
  h["n"] = f.grid().n();
  h["kind"] = f.kind() == FieldKind::deformation ? "deformation" : "displacement";
  h["clamp"] = f.clamp();
  h["time"] = time;
  h["count"] = f.values().size();
  h["layout"] = "float64-le node-major axis0-fastest";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open snapshot for writing: " + path);
  out << h.dump() << '\n';
  for (double v : f.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits = detail::to_le(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw Error("failed writing snapshot: " + path);
}

inline Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open snapshot: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("snapshot has no header: " + path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed snapshot header: ") + e.what());
  }
  if (h.value("format", "") != kSnapshotFormat || h.value("version", 0) != kSnapshotVersion)
    throw Error("unsupported snapshot format in " + path);
  const Grid grid(h.at("dim").get<int>(), h.at("n").get<int>());
  const std::string kind = h.at("kind").get<std::string>();
  if (kind != "deformation" && kind != "displacement") throw Error("unknown field kind " + kind);
  Snapshot s;
  s.field = Field(grid, kind == "deformation" ? FieldKind::deformation : FieldKind::displacement,
                  h.at("clamp").get<int>());
  s.time = h.at("time").get<double>();
  auto vals = s.field.values();
  if (h.at("count").get<std::size_t>() != vals.size()) throw Error("snapshot count mismatch");
  for (double& v : vals) {
    std::uint64_t bits;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw Error("truncated snapshot");
    bits = detail::to_le(bits);
    std::memcpy(&v, &bits, sizeof bits);
  }
  if (!s.field.clamp_intact()) throw Error("snapshot violates its clamped layers");
  return s;
}

}  // namespace viscoflow
