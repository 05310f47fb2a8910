#include <algorithm>
#include <cmath>

#include "dssl/eval.hpp"

namespace dssl::eval {

Corruption corruption_from_string(const std::string& s) {
  for (Corruption c : all_corruptions())
    if (to_string(c) == s) return c;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

std::string to_string(Corruption kind) {
  switch (kind) {
    case Corruption::gaussian_noise: return "gaussian_noise";
    case Corruption::shot_noise: return "shot_noise";
    case Corruption::impulse_noise: return "impulse_noise";
    case Corruption::defocus_blur: return "defocus_blur";
    case Corruption::motion_blur: return "motion_blur";
    case Corruption::brightness: return "brightness";
    case Corruption::contrast: return "contrast";
    case Corruption::pixelate: return "pixelate";
    case Corruption::jpeg: return "jpeg";
  }
  return "unknown";
}

const std::vector<Corruption>& all_corruptions() {
  static const std::vector<Corruption> kinds = {
      Corruption::gaussian_noise, Corruption::shot_noise,
      Corruption::impulse_noise, Corruption::defocus_blur,
      Corruption::motion_blur,   Corruption::brightness,
      Corruption::contrast,      Corruption::pixelate,
      Corruption::jpeg};
  return kinds;
}

std::string category_of(Corruption kind) {
  switch (kind) {
    case Corruption::gaussian_noise:
    case Corruption::shot_noise:
    case Corruption::impulse_noise: return "noise";
    case Corruption::defocus_blur:
    case Corruption::motion_blur: return "blur";
    // Brightness/contrast stand in for the asset-based weather corruptions.
    case Corruption::brightness:
    case Corruption::contrast: return "weather";
    case Corruption::pixelate:
    case Corruption::jpeg: return "digital";
  }
  return "unknown";
}

void CorruptionSpec::validate() const {
  if (severity < 1 || severity > 5)
    throw ValidationError("corruption severity must be in 1..5");
}

namespace detail {

namespace {

float clampf(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

Image convolve(const Image& img, const std::vector<double>& kernel, int kh,
               int kw) {
  Image out(img.channels, img.height, img.width);
  const int ry = kh / 2, rx = kw / 2;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const double kv = kernel[static_cast<size_t>(ky) * kw + kx];
            if (kv == 0.0) continue;
            const int yy = std::clamp(y + ky - ry, 0, img.height - 1);
            const int xx = std::clamp(x + kx - rx, 0, img.width - 1);
            acc += kv * img.at(c, yy, xx);
          }
        out.at(c, y, x) = clampf(acc);
      }
  return out;
}

}  // namespace

Image gaussian_noise(const Image& img, double sigma, Rng& rng) {
  Image out = img;
  for (float& v : out.data) v = clampf(v + sigma * rng.normal());
  return out;
}

Image shot_noise(const Image& img, double photons, Rng& rng) {
  Image out = img;
  for (float& v : out.data)
    v = clampf(rng.poisson(static_cast<double>(v) * photons) / photons);
  return out;
}

Image impulse_noise(const Image& img, double rate, Rng& rng) {
  Image out = img;
  for (size_t i = 0; i < out.pixel_count(); ++i) {
    if (!rng.bernoulli(rate)) continue;
    const float v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    for (int c = 0; c < out.channels; ++c) out.plane(c)[i] = v;
  }
  return out;
}

Image defocus_blur(const Image& img, int radius) {
  const int k = 2 * radius + 1;
  std::vector<double> kernel(static_cast<size_t>(k) * k, 0.0);
  double sum = 0.0;
  for (int y = -radius; y <= radius; ++y)
    for (int x = -radius; x <= radius; ++x)
      if (x * x + y * y <= radius * radius + 0.25) {
        kernel[static_cast<size_t>(y + radius) * k + (x + radius)] = 1.0;
        sum += 1.0;
      }
  for (double& v : kernel) v /= sum;
  return convolve(img, kernel, k, k);
}

Image motion_blur(const Image& img, int length, double angle_rad) {
  const int k = length | 1;  // odd kernel
  std::vector<double> kernel(static_cast<size_t>(k) * k, 0.0);
  const double cx = k / 2, cy = k / 2;
  const double dx = std::cos(angle_rad), dy = std::sin(angle_rad);
  double sum = 0.0;
  const int steps = 4 * k;
  for (int i = -steps; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps * (length / 2.0);
    const int x = static_cast<int>(std::lround(cx + t * dx));
    const int y = static_cast<int>(std::lround(cy + t * dy));
    if (x < 0 || x >= k || y < 0 || y >= k) continue;
    kernel[static_cast<size_t>(y) * k + x] = 1.0;
  }
  for (double v : kernel) sum += v;
  for (double& v : kernel) v /= sum;
  return convolve(img, kernel, k, k);
}

Image brightness(const Image& img, double delta) {
  if (delta == 0.0) return img;
  Image out = img;
  for (float& v : out.data) v = clampf(v + delta);
  return out;
}

Image contrast(const Image& img, double factor) {
  Image out = img;
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  for (float& v : out.data) v = clampf((v - mean) * factor + mean);
  return out;
}

Image pixelate(const Image& img, double scale) {
  const int sh = std::max(1, static_cast<int>(img.height * scale));
  const int sw = std::max(1, static_cast<int>(img.width * scale));
  Image small(img.channels, sh, sw);
  // Box average down.
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x) {
        const int y0 = y * img.height / sh, y1 = std::max(y0 + 1, (y + 1) * img.height / sh);
        const int x0 = x * img.width / sw, x1 = std::max(x0 + 1, (x + 1) * img.width / sw);
        double acc = 0.0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) acc += img.at(c, yy, xx);
        small.at(c, y, x) = static_cast<float>(acc / ((y1 - y0) * (x1 - x0)));
      }
  // Nearest-neighbor back up.
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(c, y, x) = small.at(c, std::min(sh - 1, y * sh / img.height),
                                   std::min(sw - 1, x * sw / img.width));
  return out;
}

namespace {

// Standard luminance/chrominance quantization tables.
constexpr int kLumaQ[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChromaQ[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

void dct8(const double in[8], double out[8]) {
  for (int k = 0; k < 8; ++k) {
    double s = 0.0;
    for (int n = 0; n < 8; ++n)
      s += in[n] * std::cos(M_PI / 8.0 * (n + 0.5) * k);
    out[k] = s * (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0));
  }
}

void idct8(const double in[8], double out[8]) {
  for (int n = 0; n < 8; ++n) {
    double s = 0.0;
    for (int k = 0; k < 8; ++k)
      s += in[k] * (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
           std::cos(M_PI / 8.0 * (n + 0.5) * k);
    out[n] = s;
  }
}

void quantize_block(double block[64], const int table[64], double scale) {
  double tmp[64];
  double row[8], coef[8];
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) row[x] = block[y * 8 + x];
    dct8(row, coef);
    for (int x = 0; x < 8; ++x) tmp[y * 8 + x] = coef[x];
  }
  for (int x = 0; x < 8; ++x) {
    for (int y = 0; y < 8; ++y) row[y] = tmp[y * 8 + x];
    dct8(row, coef);
    for (int y = 0; y < 8; ++y) tmp[y * 8 + x] = coef[y];
  }
  for (int i = 0; i < 64; ++i) {
    const double q = std::clamp(std::floor((table[i] * scale + 50.0) / 100.0),
                                1.0, 255.0);
    tmp[i] = std::round(tmp[i] / q) * q;
  }
  for (int x = 0; x < 8; ++x) {
    for (int y = 0; y < 8; ++y) row[y] = tmp[y * 8 + x];
    idct8(row, coef);
    for (int y = 0; y < 8; ++y) tmp[y * 8 + x] = coef[y];
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) row[x] = tmp[y * 8 + x];
    idct8(row, coef);
    for (int x = 0; x < 8; ++x) block[y * 8 + x] = coef[x];
  }
}

}  // namespace

// In-memory 8x8 DCT quantization roundtrip in YCbCr: the block-coding
// artifacts of JPEG without an entropy-coding dependency.
Image jpeg_roundtrip(const Image& img, int quality) {
  quality = std::clamp(quality, 1, 100);
  const double scale =
      quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;

  const int h = img.height, w = img.width;
  const int bh = (h + 7) / 8 * 8, bw = (w + 7) / 8 * 8;
  std::vector<double> ycc(static_cast<size_t>(3) * bh * bw);
  auto at = [&](int p, int y, int x) -> double& {
    return ycc[(static_cast<size_t>(p) * bh + y) * bw + x];
  };
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      const int yy = std::min(y, h - 1), xx = std::min(x, w - 1);
      const double r = img.at(0, yy, xx) * 255.0;
      const double g = img.at(1, yy, xx) * 255.0;
      const double b = img.at(2, yy, xx) * 255.0;
      at(0, y, x) = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
      at(1, y, x) = -0.168736 * r - 0.331264 * g + 0.5 * b;
      at(2, y, x) = 0.5 * r - 0.418688 * g - 0.081312 * b;
    }

  double block[64];
  for (int p = 0; p < 3; ++p)
    for (int by = 0; by < bh; by += 8)
      for (int bx = 0; bx < bw; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) block[y * 8 + x] = at(p, by + y, bx + x);
        quantize_block(block, p == 0 ? kLumaQ : kChromaQ, scale);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) at(p, by + y, bx + x) = block[y * 8 + x];
      }

  Image out(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double Y = at(0, y, x) + 128.0;
      const double cb = at(1, y, x);
      const double cr = at(2, y, x);
      out.at(0, y, x) = clampf((Y + 1.402 * cr) / 255.0);
      out.at(1, y, x) = clampf((Y - 0.344136 * cb - 0.714136 * cr) / 255.0);
      out.at(2, y, x) = clampf((Y + 1.772 * cb) / 255.0);
    }
  return out;
}

}  // namespace detail

Image corrupt(const Image& image, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  require_rgb(image, "corrupt");
  const int s = spec.severity - 1;
  switch (spec.kind) {
    case Corruption::gaussian_noise:
      return detail::gaussian_noise(image, schedules::gaussian_sigma[s], rng);
    case Corruption::shot_noise:
      return detail::shot_noise(image, schedules::shot_photons[s], rng);
    case Corruption::impulse_noise:
      return detail::impulse_noise(image, schedules::impulse_rate[s], rng);
    case Corruption::defocus_blur:
      return detail::defocus_blur(image, schedules::defocus_radius[s]);
    case Corruption::motion_blur:
      return detail::motion_blur(image, schedules::motion_length[s],
                                 rng.uniform(0.0, M_PI));
    case Corruption::brightness:
      return detail::brightness(image, schedules::brightness_delta[s]);
    case Corruption::contrast:
      return detail::contrast(image, schedules::contrast_factor[s]);
    case Corruption::pixelate:
      return detail::pixelate(image, schedules::pixelate_scale[s]);
    case Corruption::jpeg:
      return detail::jpeg_roundtrip(image, schedules::jpeg_quality[s]);
  }
  throw ConfigError("corrupt: unhandled kind");
}

}  // namespace dssl::eval
