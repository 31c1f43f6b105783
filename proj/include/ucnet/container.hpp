#pragma once
// Tensor container: magic "UCNT", version u16, a UTF-8 key=value config
// block, then named tensor records (u16 name length, name, u8 ndims, u32
// dims, f32 little-endian values), closed by a whole-file 64-bit FNV-1a
// digest. Used for checkpoints and preprocessed tensors.

#include <string>
#include <utility>
#include <vector>

#include "ucnet/common.hpp"

namespace ucnet {

struct TensorRecord {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t element_count() const {
    size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

struct Container {
  uint16_t version = 1;
  std::vector<std::pair<std::string, std::string>> config;  // ordered key=value lines
  std::vector<TensorRecord> tensors;

  const std::string* find_config(const std::string& key) const {
    for (const auto& [k, v] : config)
      if (k == key) return &v;
    return nullptr;
  }
  const std::string& config_or_fail(const std::string& key) const {
    const std::string* v = find_config(key);
    if (!v) fail(Errc::config_mismatch, "missing config key '" + key + "'");
    return *v;
  }
};

inline std::vector<uint8_t> encode_container(const Container& c) {
  std::vector<uint8_t> out;
  out.push_back('U');
  out.push_back('C');
  out.push_back('N');
  out.push_back('T');
  put_u16le(out, c.version);
  std::string cfg;
  for (const auto& [k, v] : c.config) cfg += k + "=" + v + "\n";
  put_u32le(out, uint32_t(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put_u32le(out, uint32_t(c.tensors.size()));
  for (const auto& t : c.tensors) {
    require(t.data.size() == t.element_count(), Errc::invalid_argument,
            "tensor '" + t.name + "' data/dims mismatch");
    put_u16le(out, uint16_t(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(uint8_t(t.dims.size()));
    for (auto d : t.dims) put_u32le(out, d);
    for (float v : t.data) put_f32le(out, v);
  }
  put_u64le(out, fnv1a(out.data(), out.size()));
  return out;
}

inline Container decode_container(const std::vector<uint8_t>& bytes) {
  require(bytes.size() >= 18, Errc::bad_format, "container too short");
  const uint64_t stored = [&] {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[bytes.size() - 8 + size_t(i)]) << (8 * i);
    return v;
  }();
  require(fnv1a(bytes.data(), bytes.size() - 8) == stored, Errc::digest_mismatch,
          "container digest mismatch (corrupted file)");

  ByteReader r(bytes.data(), bytes.size() - 8);
  char magic[4];
  r.bytes(magic, 4, "magic");
  require(std::string(magic, 4) == "UCNT", Errc::bad_format, "bad container magic");
  Container c;
  c.version = r.u16le("version");
  require(c.version == 1, Errc::bad_format,
          "unsupported container version " + std::to_string(c.version));
  const uint32_t cfg_len = r.u32le("config length");
  std::string cfg(cfg_len, '\0');
  r.bytes(cfg.data(), cfg_len, "config block");
  size_t start = 0;
  while (start < cfg.size()) {
    size_t nl = cfg.find('\n', start);
    if (nl == std::string::npos) nl = cfg.size();
    const std::string line = cfg.substr(start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, Errc::bad_format, "bad config line: " + line);
    c.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const uint32_t count = r.u32le("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    const uint16_t name_len = r.u16le("tensor name length");
    t.name.resize(name_len);
    r.bytes(t.name.data(), name_len, "tensor name");
    const uint8_t ndims = r.u8("tensor rank");
    require(ndims >= 1 && ndims <= 8, Errc::bad_format, "bad tensor rank");
    size_t total = 1;
    for (int d = 0; d < ndims; ++d) {
      t.dims.push_back(r.u32le("tensor dim"));
      total *= t.dims.back();
      require(total <= (1ull << 32), Errc::bad_format, "tensor too large");
    }
    t.data.resize(total);
    for (auto& v : t.data) v = r.f32le("tensor data");
    c.tensors.push_back(std::move(t));
  }
  require(r.pos == r.size, Errc::bad_format, "trailing bytes in container");
  return c;
}

inline void write_container(const std::string& path, const Container& c) {
  write_file_bytes(path, encode_container(c));
}

inline Container read_container(const std::string& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace ucnet
