#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "avc/tensor.hpp"

// Binary tensor records and key=value manifests. A record is an 8-byte
// magic, a 1-byte rank, rank x u32 little-endian dims, then float32
// little-endian payload. Values pass through float, so tensors written
// here must hold float-representable doubles for bit-exact round trips.
namespace avc::io {

inline constexpr char kMagic[8] = {'A', 'V', 'C', 'T', 'N', 'S', 'R', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct CorruptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CorruptionError("unexpected end of tensor record");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}
inline void put_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}
inline float get_f32(std::istream& is) {
  std::uint32_t u = get_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}
}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) throw FormatError("tensor rank too large");
  os.write(kMagic, 8);
  unsigned char rank = static_cast<unsigned char>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (std::size_t d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data) detail::put_f32(os, static_cast<float>(v));
}

inline Tensor read_tensor(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw CorruptionError("bad tensor magic");
  unsigned char rank;
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (!is) throw CorruptionError("truncated tensor header");
  Shape s(rank);
  for (auto& d : s) d = detail::get_u32(is);
  Tensor t(s);
  for (double& v : t.data) v = detail::get_f32(is);
  return t;
}

// Round a tensor's values through float32 so a later save/load round trip
// is bitwise exact.
inline void quantize_f32(Tensor& t) {
  for (double& v : t.data) v = double(float(v));
}

inline std::uint64_t file_checksum(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[8192];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

// key=value lines; '#' starts a comment line.
struct KVFile {
  std::map<std::string, std::string> kv;

  bool has(const std::string& k) const { return kv.count(k) != 0; }
  const std::string& at(const std::string& k) const {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("missing manifest key: " + k);
    return it->second;
  }
  std::string get(const std::string& k, const std::string& dflt) const {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  }
  double get_num(const std::string& k) const { return std::stod(at(k)); }
  std::uint64_t get_u64(const std::string& k) const { return std::stoull(at(k)); }

  void set(const std::string& k, const std::string& v) { kv[k] = v; }
  void set_num(const std::string& k, double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    kv[k] = ss.str();
  }
  void set_u64(const std::string& k, std::uint64_t v) { kv[k] = std::to_string(v); }

  void save(const std::filesystem::path& p) const {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  }

  static KVFile load(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    KVFile f;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("bad manifest line: " + line);
      f.kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return f;
  }
};

}  // namespace avc::io
