#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnes {

// Error taxonomy. Every failure surfaced by the library is one of these.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Recoverable transport failure (dead adapter, broken pipe, timeout).
struct SessionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// H x W x 3 image with channel values in [0, 1], stored row-major, channels interleaved.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Frame() = default;
  Frame(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const Frame&) const = default;
};

/// 8-bit RGB raster, the native output of the environment renderers.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bytes;

  Image() = default;
  Image(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bytes(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::uint8_t* px(int y, int x) { return &bytes[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int y, int x) const {
    return &bytes[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  bool operator==(const Image&) const = default;
};

/// Divides every byte by 255.
Frame to_frame(const Image& image);
/// Inverse of to_frame, rounding to the nearest byte.
Image to_image(const Frame& frame);
/// Nearest-neighbour resize to side x side.
Frame resize_nearest(const Frame& frame, int side);

}  // namespace attnes
