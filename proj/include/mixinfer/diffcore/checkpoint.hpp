#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mixinfer/diffcore/parameters.hpp"

namespace mixinfer {

/// Parameter container file.
///
/// Layout (all integers little-endian):
///   "MIXCKPT\0"                      8-byte magic
///   u32 version                      kCheckpointVersion
///   u32 meta_count, then per entry:  str key, str value   (sorted by key)
///   u32 set_count, then per set:     str set_name, u32 param_count, then per param:
///       str name, u8 owner, u32 rank (=2), u64 rows, u64 cols, f64 values (row-major)
/// where str is u32 length followed by raw bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, ParameterSet>> sets;

  const ParameterSet& set(const std::string& name) const {
    for (const auto& [n, ps] : sets)
      if (n == name) return ps;
    throw ConfigError("checkpoint has no parameter set '" + name + "'");
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <typename T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw ConfigError("checkpoint truncated");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 24)) throw ConfigError("checkpoint string length implausible");
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw ConfigError("checkpoint truncated");
    return s;
  }

 private:
  std::istream& is_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  detail::Writer w(os);
  os.write("MIXCKPT\0", 8);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ck.sets.size()));
  for (const auto& [set_name, ps] : ck.sets) {
    w.str(set_name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
    for (const auto& p : ps) {
      w.str(p.name);
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(p.owner));
      w.pod<std::uint32_t>(2);
      w.pod<std::uint64_t>(static_cast<std::uint64_t>(p.value.rows()));
      w.pod<std::uint64_t>(static_cast<std::uint64_t>(p.value.cols()));
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c) w.pod<double>(p.value(r, c));
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "MIXCKPT\0", 8) != 0) throw ConfigError("not a checkpoint file (bad magic)");
  detail::Reader r(is);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto metas = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < metas; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  const auto sets = r.pod<std::uint32_t>();
  for (std::uint32_t s = 0; s < sets; ++s) {
    std::string set_name = r.str();
    ParameterSet ps;
    const auto count = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const auto owner = r.pod<std::uint8_t>();
      if (owner > static_cast<std::uint8_t>(Owner::Temperature)) throw ConfigError("checkpoint: bad owner tag");
      if (r.pod<std::uint32_t>() != 2) throw ConfigError("checkpoint: only rank-2 tensors supported");
      const auto rows = r.pod<std::uint64_t>();
      const auto cols = r.pod<std::uint64_t>();
      if (rows * cols > (1ull << 28)) throw ConfigError("checkpoint: tensor too large");
      Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = 0; b < m.cols(); ++b) m(a, b) = r.pod<double>();
      ps.add(std::move(name), static_cast<Owner>(owner), std::move(m));
    }
    ck.sets.emplace_back(std::move(set_name), std::move(ps));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  write_checkpoint(os, ck);
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

/// Copies values from `src` into `dst`, matching by name and shape.
inline void assign_values(ParameterSet& dst, const ParameterSet& src) {
  if (dst.size() != src.size()) throw ConfigError("parameter count mismatch while loading");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::size_t j = src.find(dst[i].name);
    if (j == ParameterSet::npos) throw ConfigError("missing parameter " + dst[i].name);
    if (src[j].value.rows() != dst[i].value.rows() || src[j].value.cols() != dst[i].value.cols())
      throw ConfigError("shape mismatch for parameter " + dst[i].name);
    dst[i].value = src[j].value;
  }
}

}  // namespace mixinfer
