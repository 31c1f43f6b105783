#pragma once
// Error type, FNV-1a hashing and little-endian byte helpers shared by all modules.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ucnet {

enum class Errc {
  invalid_argument,
  io,
  bad_format,
  jpeg_progressive,
  jpeg_arithmetic,
  jpeg_truncated,
  jpeg_bad_marker,
  jpeg_unsupported,
  config_mismatch,
  digest_mismatch,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "INVALID_ARGUMENT";
    case Errc::io: return "IO";
    case Errc::bad_format: return "BAD_FORMAT";
    case Errc::jpeg_progressive: return "PROGRESSIVE_UNSUPPORTED";
    case Errc::jpeg_arithmetic: return "ARITHMETIC_UNSUPPORTED";
    case Errc::jpeg_truncated: return "TRUNCATED_STREAM";
    case Errc::jpeg_bad_marker: return "BAD_MARKER";
    case Errc::jpeg_unsupported: return "UNSUPPORTED_FEATURE";
    case Errc::config_mismatch: return "CONFIG_MISMATCH";
    case Errc::digest_mismatch: return "DIGEST_MISMATCH";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

// 64-bit FNV-1a, used for container digests and table fingerprints.
struct Fnv1a {
  uint64_t state = 14695981039346656037ull;
  void update(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
      state ^= p[i];
      state *= 1099511628211ull;
    }
  }
  uint64_t digest() const { return state; }
};

inline uint64_t fnv1a(const void* data, size_t len) {
  Fnv1a h;
  h.update(data, len);
  return h.digest();
}

// Little-endian append helpers for byte buffers.
inline void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}
inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}
inline void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}
inline void put_f32le(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(out, bits);
}

// Bounds-checked little-endian reader.
struct ByteReader {
  const uint8_t* p;
  size_t size;
  size_t pos = 0;
  ByteReader(const uint8_t* data, size_t n) : p(data), size(n) {}
  void need(size_t n, const char* what) const {
    if (pos + n > size) fail(Errc::bad_format, std::string("truncated while reading ") + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return p[pos++];
  }
  uint16_t u16le(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32le(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64le(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32le(const char* what) {
    uint32_t bits = u32le(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  void bytes(void* dst, size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, p + pos, n);
    pos += n;
  }
};

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot open " + path);
  f.seekg(0, std::ios::end);
  std::streamoff n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(n), uint8_t(0));
  if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
  if (!f) fail(Errc::io, "read failed for " + path);
  return buf;
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io, "cannot create " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) fail(Errc::io, "write failed for " + path);
}

}  // namespace ucnet
