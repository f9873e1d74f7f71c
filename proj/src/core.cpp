#include "attnes/core.hpp"

#include <algorithm>
#include <cmath>

namespace attnes {

Frame to_frame(const Image& image) {
  Frame f(image.height, image.width);
  for (std::size_t i = 0; i < image.bytes.size(); ++i)
    f.pixels[i] = static_cast<float>(image.bytes[i]) / 255.0f;
  return f;
}

Image to_image(const Frame& frame) {
  Image img(frame.height, frame.width);
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const float v = std::clamp(frame.pixels[i], 0.0f, 1.0f);
    img.bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

Frame resize_nearest(const Frame& frame, int side) {
  if (frame.height == side && frame.width == side) return frame;
  if (side <= 0 || frame.height <= 0 || frame.width <= 0)
    throw ConfigError("resize_nearest: empty frame or target size");
  Frame out(side, side);
  for (int y = 0; y < side; ++y) {
    const int sy = static_cast<int>((static_cast<long>(y) * frame.height) / side);
    for (int x = 0; x < side; ++x) {
      const int sx = static_cast<int>((static_cast<long>(x) * frame.width) / side);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = frame.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace attnes
