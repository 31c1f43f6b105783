#pragma once
// Binary PPM ("P6", maxval 255) reader/writer for spatial-domain covers.

#include <string>

#include "ucnet/common.hpp"
#include "ucnet/image.hpp"

namespace ucnet {

namespace detail {

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string ppm_token(const std::vector<uint8_t>& b, size_t& pos) {
  while (pos < b.size()) {
    const char ch = char(b[pos]);
    if (ch == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size()) {
    const char ch = char(b[pos]);
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') break;
    tok.push_back(ch);
    ++pos;
  }
  if (tok.empty()) fail(Errc::bad_format, "truncated PPM header");
  return tok;
}

inline int ppm_int(const std::vector<uint8_t>& b, size_t& pos, const char* what) {
  const std::string tok = ppm_token(b, pos);
  for (char ch : tok)
    if (ch < '0' || ch > '9') fail(Errc::bad_format, std::string("bad PPM ") + what);
  long v = 0;
  for (char ch : tok) {
    v = v * 10 + (ch - '0');
    if (v > 1 << 30) fail(Errc::bad_format, std::string("bad PPM ") + what);
  }
  return int(v);
}

}  // namespace detail

inline Image8 decode_ppm(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  const std::string magic = detail::ppm_token(bytes, pos);
  if (magic != "P6")
    fail(Errc::bad_format, "unsupported PPM format '" + magic + "' (only binary P6)");
  const int w = detail::ppm_int(bytes, pos, "width");
  const int h = detail::ppm_int(bytes, pos, "height");
  const int maxval = detail::ppm_int(bytes, pos, "maxval");
  require(w > 0 && h > 0, Errc::bad_format, "bad PPM dimensions");
  require(maxval == 255, Errc::bad_format,
          "unsupported PPM maxval " + std::to_string(maxval) + " (only 255)");
  // Exactly one whitespace byte separates the header from the payload.
  require(pos < bytes.size(), Errc::bad_format, "truncated PPM header");
  const char sep = char(bytes[pos]);
  require(sep == ' ' || sep == '\t' || sep == '\r' || sep == '\n', Errc::bad_format,
          "bad PPM header separator");
  ++pos;
  Image8 img(h, w, 3);
  require(bytes.size() - pos >= img.pix.size(), Errc::bad_format, "truncated PPM payload");
  std::copy(bytes.begin() + long(pos), bytes.begin() + long(pos) + long(img.pix.size()),
            img.pix.begin());
  return img;
}

inline Image8 read_ppm(const std::string& path) { return decode_ppm(read_file_bytes(path)); }

inline std::vector<uint8_t> encode_ppm(const Image8& img) {
  require(img.c == 3, Errc::invalid_argument, "PPM writer expects 3 channels");
  std::string header =
      "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pix.begin(), img.pix.end());
  return out;
}

inline void write_ppm(const Image8& img, const std::string& path) {
  write_file_bytes(path, encode_ppm(img));
}

}  // namespace ucnet
