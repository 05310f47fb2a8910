#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dssl/geometry.hpp"
#include "dssl/image.hpp"
#include "dssl/rng.hpp"

namespace dssl::augment {

// Crop + resize + optional horizontal flip. The only transforms that are
// ever applied to the depth channel.
struct GeometricParams {
  int top = 0, left = 0, height = 0, width = 0;
  bool flip = false;
  int out_size = 0;
};

struct DepthDropoutConfig {
  double p = 0.5;
  void validate() const {
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("depth dropout p must be in [0,1]");
  }
};

struct BaseAugRecipe {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double crop_aspect_min = 3.0 / 4.0;
  double crop_aspect_max = 4.0 / 3.0;
  int out_size = 32;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double jitter_strength = 0.5;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  void validate() const;
};

struct PhotometricParams {
  bool jitter = false;
  double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
  bool grayscale = false;
  bool blur = false;
  double blur_sigma = 0.0;
};

enum class Provenance { base2d, mpi_view };

struct AugmentedView {
  Image rgb;  // 3 x out x out
  std::optional<DepthMap> depth;
  bool dropout_applied = false;
  Provenance provenance = Provenance::base2d;
};

struct AugmentedPair {
  AugmentedView view_a, view_b;
};

// Pre-rendered novel views for one sample; `get` may decode from disk.
struct ViewBank {
  int k = 0;
  std::vector<geometry::ViewSpec> specs;
  std::function<Image(int)> get;
};

struct AugmentationPolicy {
  BaseAugRecipe base_aug;
  bool use_depth = false;
  DepthDropoutConfig dropout;
  bool use_3d_views = false;
  double q = 1.0;  // probability of full base augs on top of a sampled view
  void validate() const;
};

struct TrainSample {
  Image rgb;
  std::optional<DepthMap> depth;
  std::optional<ViewBank> bank;
};

// SwAV-style multi-crop: n_global full-recipe crops plus n_local smaller
// crops with their own scale range.
struct MultiCropPlan {
  int n_global = 2;
  int n_local = 6;
  int local_size = 16;
  double local_scale_min = 0.1;
  double local_scale_max = 0.5;
};

GeometricParams sample_geometric(Rng& rng, int src_height, int src_width,
                                 const BaseAugRecipe& recipe);

Image apply_geometric(const Image& rgb, const GeometricParams& params);
std::pair<Image, DepthMap> apply_paired(const Image& rgb, const DepthMap& depth,
                                        const GeometricParams& params);

PhotometricParams sample_photometric(Rng& rng, const BaseAugRecipe& recipe);
Image apply_photometric(const Image& rgb, const PhotometricParams& params);

std::pair<DepthMap, bool> depth_dropout(const DepthMap& depth,
                                        const DepthDropoutConfig& cfg, Rng& rng);

AugmentedPair make_pair(const TrainSample& sample,
                        const AugmentationPolicy& policy, Rng& rng);

std::vector<AugmentedView> make_multicrop(const TrainSample& sample,
                                          const AugmentationPolicy& policy,
                                          const MultiCropPlan& plan, Rng& rng);

}  // namespace dssl::augment
