#pragma once

// Binary dataset format (little-endian):
//
//   "DDLD" | version u32 = 1 | kind u8 | d u8 | reserved u16 | N_b u32 |
//   N_1..N_d u32 | N_c u32 | T u32 | dt f64 | dx f64 | c f64 x d | nu f64 |
//   alpha f64 | seed u64 | meta_len u32 | meta (UTF-8) | (T+1) frames f64
//
// Meta is stored as "key=value" lines separated by '\n'. The boundary
// condition travels in meta under the reserved key "boundary".

#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ddeld/binary_io.hpp"
#include "ddeld/errors.hpp"
#include "ddeld/generators.hpp"

namespace ddeld {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr char kBoundaryKey[] = "boundary";

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.frames.empty()) throw FormatError("dataset has no frames");
  if (ds.coeff_field) throw FormatError("coefficient fields are not representable in the dataset format");
  const Shape& s = ds.shape();
  for (const auto& f : ds.frames) {
    if (!(f.shape() == s)) throw FormatError("frames have differing shapes");
  }
  if (ds.pde.c.size() != s.rank()) throw FormatError("transport speed must have one entry per spatial dim");
  auto as_u32 = [](std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError(std::string(what) + " exceeds u32");
    return static_cast<std::uint32_t>(v);
  };

  std::string meta;
  for (const auto& [k, v] : ds.meta) {
    if (k == kBoundaryKey) throw FormatError("meta key 'boundary' is reserved");
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("meta keys may not contain '=' or newlines, values may not contain newlines");
    }
    meta += k + "=" + v + "\n";
  }
  meta += std::string(kBoundaryKey) + "=" + to_string(ds.pde.boundary);

  io::ByteWriter w;
  w.raw("DDLD");
  w.u32(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(ds.kind));
  w.u8(static_cast<std::uint8_t>(s.rank()));
  w.u16(0);
  w.u32(as_u32(s.batch(), "N_b"));
  for (std::size_t n : s.spatial()) w.u32(as_u32(n, "N_i"));
  w.u32(as_u32(s.channels(), "N_c"));
  w.u32(as_u32(ds.steps(), "T"));
  w.f64(ds.pde.dt);
  w.f64(ds.pde.dx);
  for (double c : ds.pde.c) w.f64(c);
  w.f64(ds.pde.nu);
  w.f64(ds.pde.alpha);
  w.u64(ds.seed);
  w.u32(as_u32(meta.size(), "meta length"));
  w.raw(meta);
  for (const auto& f : ds.frames) {
    for (double v : f.data()) w.f64(v);
  }
  return w.bytes();
}

inline Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (r.raw(4) != "DDLD") throw FormatError("bad magic, not a dataset file");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));

  Dataset ds;
  const std::uint8_t kind = r.u8();
  if (kind > 3) throw FormatError("unknown dataset kind " + std::to_string(kind));
  ds.kind = static_cast<DatasetKind>(kind);
  const std::uint8_t d = r.u8();
  if (d < 1 || d > kMaxSpatialRank) throw FormatError("spatial rank " + std::to_string(d) + " out of range");
  r.u16();
  const std::size_t nb = r.u32();
  Extents spatial(d);
  for (auto& n : spatial) n = r.u32();
  const std::size_t nc = r.u32();
  const std::size_t steps = r.u32();
  ds.pde.dt = r.f64();
  ds.pde.dx = r.f64();
  ds.pde.c.resize(d);
  for (auto& c : ds.pde.c) c = r.f64();
  ds.pde.nu = r.f64();
  ds.pde.alpha = r.f64();
  ds.seed = r.u64();
  const std::string meta = r.raw(r.u32());

  std::istringstream lines(meta);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed meta line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == kBoundaryKey) {
      try {
        ds.pde.boundary = boundary_from_string(value);
      } catch (const DomainError& e) {
        throw FormatError(e.what());
      }
    } else {
      ds.meta[key] = value;
    }
  }

  Shape shape = [&] {
    try {
      return Shape(nb, spatial, nc);
    } catch (const Error& e) {
      throw FormatError(std::string("bad header shape: ") + e.what());
    }
  }();
  const std::size_t frame_bytes = shape.total() * 8;
  if (frame_bytes / 8 != shape.total() || r.remaining() / frame_bytes < steps + 1 ||
      r.remaining() != frame_bytes * (steps + 1)) {
    throw FormatError("frame payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(frame_bytes) + " x " + std::to_string(steps + 1));
  }
  ds.frames.reserve(steps + 1);
  for (std::size_t t = 0; t <= steps; ++t) {
    std::vector<double> values(shape.total());
    for (auto& v : values) v = r.f64();
    ds.frames.emplace_back(shape, std::move(values));
  }
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) { io::write_file(path, encode_dataset(ds)); }

inline Dataset read_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace ddeld
