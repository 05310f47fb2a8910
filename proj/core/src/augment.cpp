#include "dssl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace dssl::augment {

namespace {

// Bilinear crop-and-resize with the pixel-center convention
// src = (dst + 0.5) * scale - 0.5, which is an exact copy when the crop
// size equals the output size.
template <typename Plane>
void resize_plane(const Plane* src, int src_h, int src_w, int top, int left,
                  int crop_h, int crop_w, Plane* dst, int out, bool flip) {
  const double sy = static_cast<double>(crop_h) / out;
  const double sx = static_cast<double>(crop_w) / out;
  for (int y = 0; y < out; ++y) {
    const double fy = (y + 0.5) * sy - 0.5 + top;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int yc0 = std::clamp(y0, 0, src_h - 1);
    const int yc1 = std::clamp(y0 + 1, 0, src_h - 1);
    for (int x = 0; x < out; ++x) {
      const double fx = (x + 0.5) * sx - 0.5 + left;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int xc0 = std::clamp(x0, 0, src_w - 1);
      const int xc1 = std::clamp(x0 + 1, 0, src_w - 1);
      const double v00 = src[static_cast<size_t>(yc0) * src_w + xc0];
      const double v10 = src[static_cast<size_t>(yc0) * src_w + xc1];
      const double v01 = src[static_cast<size_t>(yc1) * src_w + xc0];
      const double v11 = src[static_cast<size_t>(yc1) * src_w + xc1];
      double v;
      if (wx == 0.0 && wy == 0.0) {
        v = v00;
      } else {
        v = v00 * (1 - wx) * (1 - wy) + v10 * wx * (1 - wy) +
            v01 * (1 - wx) * wy + v11 * wx * wy;
      }
      const int xo = flip ? out - 1 - x : x;
      dst[static_cast<size_t>(y) * out + xo] = static_cast<Plane>(v);
    }
  }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  v = mx;
  const double d = mx - mn;
  s = mx <= 0.0 ? 0.0 : d / mx;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

float clamp01(double v) {
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(img.channels, img.height, img.width);
  Image out(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xi = std::clamp(x + i, 0, img.width - 1);
          acc += kernel[i + radius] * img.at(c, y, xi);
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yi = std::clamp(y + i, 0, img.height - 1);
          acc += kernel[i + radius] * tmp.at(c, yi, x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

AugmentedView make_view(const TrainSample& sample,
                        const AugmentationPolicy& policy, Rng& rng);

}  // namespace

void BaseAugRecipe::validate() const {
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max &&
        crop_scale_max <= 1.0))
    throw ValidationError("crop scale range must lie in (0,1]");
  if (!(crop_aspect_min > 0.0 && crop_aspect_min <= crop_aspect_max))
    throw ValidationError("bad crop aspect range");
  if (out_size < 1) throw ValidationError("out_size must be >= 1");
  for (double p : {flip_prob, jitter_prob, grayscale_prob, blur_prob})
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("augmentation probabilities must be in [0,1]");
  if (jitter_strength < 0.0)
    throw ValidationError("jitter strength must be >= 0");
}

void AugmentationPolicy::validate() const {
  base_aug.validate();
  dropout.validate();
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("q must be in [0,1]");
}

GeometricParams sample_geometric(Rng& rng, int src_height, int src_width,
                                 const BaseAugRecipe& recipe) {
  recipe.validate();
  if (src_height < 1 || src_width < 1)
    throw ShapeError("sample_geometric: empty source");
  const double area = static_cast<double>(src_height) * src_width;
  GeometricParams p;
  p.out_size = recipe.out_size;

  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target =
        area * rng.uniform(recipe.crop_scale_min, recipe.crop_scale_max);
    const double log_ratio = rng.uniform(std::log(recipe.crop_aspect_min),
                                         std::log(recipe.crop_aspect_max));
    const double aspect = std::exp(log_ratio);
    const int cw = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int ch = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (cw >= 1 && ch >= 1 && cw <= src_width && ch <= src_height) {
      p.top = static_cast<int>(rng.uniform_int(src_height - ch + 1));
      p.left = static_cast<int>(rng.uniform_int(src_width - cw + 1));
      p.height = ch;
      p.width = cw;
      p.flip = rng.bernoulli(recipe.flip_prob);
      return p;
    }
  }
  // Degenerate draws fall back to the full frame.
  p.top = 0;
  p.left = 0;
  p.height = src_height;
  p.width = src_width;
  p.flip = rng.bernoulli(recipe.flip_prob);
  return p;
}

Image apply_geometric(const Image& rgb, const GeometricParams& params) {
  if (params.height < 1 || params.width < 1 || params.out_size < 1 ||
      params.top < 0 || params.left < 0 ||
      params.top + params.height > rgb.height ||
      params.left + params.width > rgb.width)
    throw ShapeError("apply_geometric: crop outside source frame");
  Image out(rgb.channels, params.out_size, params.out_size);
  for (int c = 0; c < rgb.channels; ++c)
    resize_plane(rgb.plane(c), rgb.height, rgb.width, params.top, params.left,
                 params.height, params.width, out.plane(c), params.out_size,
                 params.flip);
  return out;
}

std::pair<Image, DepthMap> apply_paired(const Image& rgb, const DepthMap& depth,
                                        const GeometricParams& params) {
  require_aligned(rgb, depth, "apply_paired");
  Image rgb_out = apply_geometric(rgb, params);
  DepthMap depth_out(params.out_size, params.out_size);
  resize_plane(depth.values.data(), depth.height, depth.width, params.top,
               params.left, params.height, params.width,
               depth_out.values.data(), params.out_size, params.flip);
  return {std::move(rgb_out), std::move(depth_out)};
}

PhotometricParams sample_photometric(Rng& rng, const BaseAugRecipe& recipe) {
  PhotometricParams p;
  const double s = recipe.jitter_strength;
  p.jitter = rng.bernoulli(recipe.jitter_prob);
  p.brightness = rng.uniform(std::max(0.0, 1.0 - 0.8 * s), 1.0 + 0.8 * s);
  p.contrast = rng.uniform(std::max(0.0, 1.0 - 0.8 * s), 1.0 + 0.8 * s);
  p.saturation = rng.uniform(std::max(0.0, 1.0 - 0.8 * s), 1.0 + 0.8 * s);
  p.hue = rng.uniform(-0.2 * s, 0.2 * s);
  p.grayscale = rng.bernoulli(recipe.grayscale_prob);
  p.blur = rng.bernoulli(recipe.blur_prob);
  p.blur_sigma = rng.uniform(0.1, 2.0);
  return p;
}

Image apply_photometric(const Image& rgb, const PhotometricParams& params) {
  require_rgb(rgb, "apply_photometric");
  Image out = rgb;

  if (params.jitter) {
    double mean_gray = 0.0;
    for (size_t i = 0; i < out.pixel_count(); ++i)
      mean_gray += luma(out.plane(0)[i], out.plane(1)[i], out.plane(2)[i]);
    mean_gray /= static_cast<double>(out.pixel_count());

    for (size_t i = 0; i < out.pixel_count(); ++i) {
      double r = out.plane(0)[i] * params.brightness;
      double g = out.plane(1)[i] * params.brightness;
      double b = out.plane(2)[i] * params.brightness;

      const double m = mean_gray * params.brightness;
      r = (r - m) * params.contrast + m;
      g = (g - m) * params.contrast + m;
      b = (b - m) * params.contrast + m;

      const double gray = luma(r, g, b);
      r = gray + (r - gray) * params.saturation;
      g = gray + (g - gray) * params.saturation;
      b = gray + (b - gray) * params.saturation;

      if (params.hue != 0.0) {
        double h, s, v;
        rgb_to_hsv(std::clamp(r, 0.0, 1.0), std::clamp(g, 0.0, 1.0),
                   std::clamp(b, 0.0, 1.0), h, s, v);
        hsv_to_rgb(h + params.hue, s, v, r, g, b);
      }
      out.plane(0)[i] = clamp01(r);
      out.plane(1)[i] = clamp01(g);
      out.plane(2)[i] = clamp01(b);
    }
  }

  if (params.grayscale) {
    for (size_t i = 0; i < out.pixel_count(); ++i) {
      const float gray = clamp01(
          luma(out.plane(0)[i], out.plane(1)[i], out.plane(2)[i]));
      out.plane(0)[i] = gray;
      out.plane(1)[i] = gray;
      out.plane(2)[i] = gray;
    }
  }

  if (params.blur) out = gaussian_blur(out, params.blur_sigma);
  return out;
}

std::pair<DepthMap, bool> depth_dropout(const DepthMap& depth,
                                        const DepthDropoutConfig& cfg,
                                        Rng& rng) {
  cfg.validate();
  if (rng.bernoulli(cfg.p)) {
    return {DepthMap(depth.height, depth.width), true};
  }
  return {depth, false};
}

namespace {

AugmentedView make_view(const TrainSample& sample,
                        const AugmentationPolicy& policy, Rng& rng) {
  AugmentedView view;
  const Image* src = &sample.rgb;
  Image bank_image;
  bool full_recipe = true;

  if (policy.use_3d_views) {
    if (!sample.bank || sample.bank->k < 1 || !sample.bank->get)
      throw ConfigError("policy requires a view bank but none is attached");
    const int idx = static_cast<int>(rng.uniform_int(sample.bank->k));
    bank_image = sample.bank->get(idx);
    if (bank_image.height != sample.rgb.height ||
        bank_image.width != sample.rgb.width)
      throw ShapeError("bank view size differs from source image");
    src = &bank_image;
    view.provenance = Provenance::mpi_view;
    full_recipe = rng.bernoulli(policy.q);
  }

  const GeometricParams gp =
      sample_geometric(rng, src->height, src->width, policy.base_aug);

  if (policy.use_depth) {
    if (!sample.depth)
      throw ConfigError("policy requires depth but the sample has none");
    // Depth is remapped from the cached source depth with the same
    // crop/flip; photometric ops never touch it.
    auto [rgb_out, depth_out] = apply_paired(*src, *sample.depth, gp);
    view.rgb = std::move(rgb_out);
    if (full_recipe)
      view.rgb = apply_photometric(view.rgb,
                                   sample_photometric(rng, policy.base_aug));
    auto [dropped_depth, dropped] =
        depth_dropout(depth_out, policy.dropout, rng);
    view.depth = std::move(dropped_depth);
    view.dropout_applied = dropped;
  } else {
    view.rgb = apply_geometric(*src, gp);
    if (full_recipe)
      view.rgb = apply_photometric(view.rgb,
                                   sample_photometric(rng, policy.base_aug));
  }
  return view;
}

}  // namespace

AugmentedPair make_pair(const TrainSample& sample,
                        const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  AugmentedPair pair;
  pair.view_a = make_view(sample, policy, rng);
  pair.view_b = make_view(sample, policy, rng);
  return pair;
}

std::vector<AugmentedView> make_multicrop(const TrainSample& sample,
                                          const AugmentationPolicy& policy,
                                          const MultiCropPlan& plan, Rng& rng) {
  policy.validate();
  if (plan.n_global < 2)
    throw ConfigError("multi-crop needs at least 2 global crops");
  std::vector<AugmentedView> crops;
  crops.reserve(plan.n_global + plan.n_local);
  for (int i = 0; i < plan.n_global; ++i)
    crops.push_back(make_view(sample, policy, rng));

  AugmentationPolicy local = policy;
  local.base_aug.out_size = plan.local_size;
  local.base_aug.crop_scale_min = plan.local_scale_min;
  local.base_aug.crop_scale_max = plan.local_scale_max;
  for (int i = 0; i < plan.n_local; ++i)
    crops.push_back(make_view(sample, local, rng));
  return crops;
}

}  // namespace dssl::augment
