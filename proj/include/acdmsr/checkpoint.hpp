#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "acdmsr/autodiff.hpp"

namespace acdmsr {

// Binary tensor checkpoint:
//   "ACDT" | u32 version | u32 count |
//   count x ( u32 name_len | name bytes | u32 rank | u64 dims[rank] | f32 payload )
// All integers and floats little-endian.
inline constexpr char kCheckpointMagic[4] = {'A', 'C', 'D', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  static_assert(std::is_integral_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(char((std::uint64_t(v) >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return U(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail(ErrorKind::io, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const ParameterSet<T>& params) {
  std::string out(kCheckpointMagic, 4);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, std::uint32_t(params.size()));
  for (const auto& [name, t] : params) {
    detail::put_le(out, std::uint32_t(name.size()));
    out += name;
    detail::put_le(out, std::uint32_t(t.rank()));
    for (auto d : t.shape()) detail::put_le(out, std::uint64_t(d));
    for (std::size_t i = 0; i < t.size(); ++i) detail::put_f32(out, float(t[i]));
  }
  return out;
}

template <typename T = float>
ParameterSet<T> decode_checkpoint(const std::string& buf) {
  detail::Reader r(buf);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) fail(ErrorKind::io, "not an ACDT checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) fail(ErrorKind::io, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParameterSet<T> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto nlen = r.get<std::uint32_t>();
    std::string name = r.bytes(nlen);
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = std::size_t(r.get<std::uint64_t>());
    if (shape_size(shape) > r.remaining() / 4) fail(ErrorKind::io, "checkpoint truncated in tensor '" + name + "'");
    std::vector<T> data(shape_size(shape));
    for (auto& v : data) v = T(std::bit_cast<float>(r.get<std::uint32_t>()));
    out.emplace(std::move(name), BasicTensor<T>::from_external(std::move(shape), std::move(data)));
  }
  if (!r.done()) fail(ErrorKind::io, "trailing bytes after checkpoint payload");
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

template <typename T = float>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file_bytes(path));
}

// Sidecar "<checkpoint>.arch": one key=value per line.
inline std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
  return std::filesystem::path(ckpt.string() + ".arch");
}

inline void save_sidecar(const std::filesystem::path& ckpt, const std::map<std::string, std::string>& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  write_file_bytes(sidecar_path(ckpt), text);
}

inline std::map<std::string, std::string> load_sidecar(const std::filesystem::path& ckpt) {
  std::istringstream in(read_file_bytes(sidecar_path(ckpt)));
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::io, "malformed sidecar line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace acdmsr
