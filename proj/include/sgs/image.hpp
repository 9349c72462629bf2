#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace sgs {

// Row-major RGB image, values nominally in [0, 1] (not clamped in memory).
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // size 3*width*height, pixel-major RGB

  ImageBuffer() = default;
  ImageBuffer(int w, int h) : width(w), height(h), data(3u * w * h, 0.0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("ImageBuffer: non-positive size");
  }

  double* pixel(int x, int y) { return data.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const double* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
  Eigen::Vector3d rgb(int x, int y) const {
    const double* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  void set_rgb(int x, int y, const Eigen::Vector3d& c) {
    double* p = pixel(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool same_shape(const ImageBuffer& o) const { return width == o.width && height == o.height; }
};

// Per-pixel loss gradient with the same layout as ImageBuffer.
using ImageGrad = ImageBuffer;

// Single-channel depth map with a validity mask. Invalid pixels hold 0.
struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> data;   // size width*height
  std::vector<uint8_t> mask;  // 1 = valid

  DepthBuffer() = default;
  DepthBuffer(int w, int h)
      : width(w), height(h), data(static_cast<size_t>(w) * h, 0.0),
        mask(static_cast<size_t>(w) * h, 0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("DepthBuffer: non-positive size");
  }

  size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  double at(int x, int y) const { return data[index(x, y)]; }
  bool valid(int x, int y) const { return mask[index(x, y)] != 0; }
};

}  // namespace sgs
