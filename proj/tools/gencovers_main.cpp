// Fixture generator: writes synthetic textured covers as PPM (spatial) or
// quality-Q JPEG files, one per seed-derived stream.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "ucnet/channelrep.hpp"
#include "ucnet/jpeg.hpp"
#include "ucnet/ppm.hpp"
#include "ucnet/rng.hpp"
#include "ucnet/texture.hpp"

namespace fs = std::filesystem;
using namespace ucnet;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic textured cover generator"};
  std::string out_dir;
  int count = 10, width = 64, height = 64, quality = 0;
  uint64_t seed = 1;
  app.add_option("--out-dir", out_dir, "Output directory")->required();
  app.add_option("--count", count, "Number of covers");
  app.add_option("--width", width, "Cover width");
  app.add_option("--height", height, "Cover height");
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--jpeg-quality", quality, "Write JPEG at this quality (0 = write PPM)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
      const Image8 img = synth_textured_cover(height, width, derive_seed(seed, uint64_t(i)));
      char name[64];
      if (quality > 0) {
        std::snprintf(name, sizeof name, "cover_%04d.jpg", i);
        const EncodedJpeg enc = encode_jpeg(split_rgb(img), quality);
        write_file_bytes((fs::path(out_dir) / name).string(), enc.bytes);
      } else {
        std::snprintf(name, sizeof name, "cover_%04d.ppm", i);
        write_ppm(img, (fs::path(out_dir) / name).string());
      }
    }
    std::printf("wrote %d covers to %s\n", count, out_dir.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
