#include "attnes/image_io.hpp"

#include <fstream>

namespace attnes {

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write image " + path);
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.bytes.data()),
          static_cast<std::streamsize>(image.bytes.size()));
  if (!f) throw ConfigError("write failed for image " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open image " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw CodecError("unsupported PPM header in " + path);
  f.get();
  Image img(h, w);
  f.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (!f) throw CodecError("truncated PPM " + path);
  return img;
}

}  // namespace attnes
