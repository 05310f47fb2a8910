#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dssl/common.hpp"

namespace dssl {

// Planar CHW float image, values nominally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  const float* plane(int c) const {
    return data.data() + static_cast<size_t>(c) * height * width;
  }
  float* plane(int c) {
    return data.data() + static_cast<size_t>(c) * height * width;
  }

  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

// Per-pixel relative disparity in [0, 1]; 1 = nearest, 0 = farthest.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int h, int w) : height(h), width(w),
                           values(static_cast<size_t>(h) * w, 0.0f) {}

  float& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const {
    return values[static_cast<size_t>(y) * width + x];
  }

  void validate() const {
    if (height <= 0 || width <= 0 ||
        values.size() != static_cast<size_t>(height) * width)
      throw ShapeError("depth map dimensions inconsistent with storage");
    for (float v : values) {
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw ValidationError("depth value outside [0,1] or non-finite");
    }
  }

  bool all_zero() const {
    for (float v : values)
      if (v != 0.0f) return false;
    return true;
  }
};

inline void require_rgb(const Image& img, const char* what) {
  if (img.channels != 3)
    throw ShapeError(std::string(what) + ": expected 3 channels, got " +
                     std::to_string(img.channels));
}

inline void require_aligned(const Image& img, const DepthMap& d,
                            const char* what) {
  if (img.height != d.height || img.width != d.width)
    throw ShapeError(std::string(what) + ": image " +
                     std::to_string(img.height) + "x" +
                     std::to_string(img.width) + " vs depth " +
                     std::to_string(d.height) + "x" + std::to_string(d.width));
}

inline std::array<double, 3> mean_color(const Image& img) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  const double n = static_cast<double>(img.pixel_count());
  for (int c = 0; c < img.channels && c < 3; ++c) {
    double s = 0.0;
    const float* p = img.plane(c);
    for (size_t i = 0; i < img.pixel_count(); ++i) s += p[i];
    m[c] = s / n;
  }
  return m;
}

// Min-max normalization to [0,1]; constant maps go to zero, matching the
// dropout convention that zero means "no depth signal".
inline DepthMap normalize_depth(const DepthMap& d) {
  DepthMap out(d.height, d.width);
  float lo = d.values.empty() ? 0.0f : d.values[0];
  float hi = lo;
  for (float v : d.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi - lo;
  if (range <= 0.0f) return out;
  for (size_t i = 0; i < d.values.size(); ++i)
    out.values[i] = (d.values[i] - lo) / range;
  return out;
}

inline double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: mismatched images");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace dssl
