#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

#include "dssl/image.hpp"

namespace dssl::geometry {

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
  int width = 0, height = 0;

  Eigen::Matrix3d matrix() const;
  void validate() const;

  // Pinhole default for uncalibrated images: fx = fy = max(H, W),
  // principal point at the image center.
  static CameraIntrinsics default_for(int height, int width);
};

struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;  // R orthonormal, det +1, within 1e-9
  static CameraPose identity() { return CameraPose{}; }
};

// Dimensionless target-camera offsets, each within the configured range.
struct ViewSpec {
  double x_shift = 0.0;
  double y_shift = 0.0;
  double z_shift = 0.0;
};

// One fronto-parallel RGBa plane. Color and alpha are stored as doubles;
// per-pixel alpha masses must survive summation checks at 1e-12.
struct MpiPlane {
  int height = 0, width = 0;
  std::vector<double> color;  // planar, 3 * height * width
  std::vector<double> alpha;  // height * width
  double depth = 0.0;

  MpiPlane() = default;
  MpiPlane(int h, int w, double d)
      : height(h), width(w),
        color(static_cast<size_t>(3) * h * w, 0.0),
        alpha(static_cast<size_t>(h) * w, 0.0), depth(d) {}

  double& col(int c, int y, int x) {
    return color[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double col(int c, int y, int x) const {
    return color[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double& a(int y, int x) { return alpha[static_cast<size_t>(y) * width + x]; }
  double a(int y, int x) const {
    return alpha[static_cast<size_t>(y) * width + x];
  }
};

// N planes at strictly increasing depths, front (nearest) first. The plane
// normal is implicitly [0, 0, 1].
struct MultiplaneImage {
  int height = 0, width = 0;
  std::vector<MpiPlane> planes;

  void validate() const;
};

// Premultiplied composite; color = sum_i c_i a_i prod_{j nearer}(1 - a_j),
// alpha = 1 - prod_i (1 - a_i).
struct CompositeResult {
  int height = 0, width = 0;
  std::vector<double> color;  // planar, 3 * height * width
  std::vector<double> alpha;  // height * width
};

enum class BackgroundMode { mean_color, black, custom };

struct RenderConfig {
  int num_planes = 32;
  double depth_near = 1.0;
  double depth_far = 100.0;
  std::optional<CameraIntrinsics> intrinsics;  // default_for(H, W) if unset
  double max_shift = 1.0;                      // |x|,|y|,|z| bound for ViewSpec
  BackgroundMode background = BackgroundMode::mean_color;
  std::array<double, 3> background_color{0.0, 0.0, 0.0};
};

struct RenderResult {
  Image color;               // 3 x H x W, holes filled with background
  std::vector<float> alpha;  // H x W coverage; < 1 marks disocclusions
};

// Slices the image into num_planes fronto-parallel planes spaced uniformly
// in disparity over [1/d_far, 1/d_near]. Each pixel's unit alpha mass is
// split between its two bracketing planes with linear hat weights; plane
// colors replicate the source pixel.
MultiplaneImage build_mpi(const Image& rgb, const DepthMap& depth,
                          int num_planes, double depth_near, double depth_far);

// H = K (R - t n^T / d) K^{-1} with n = [0,0,1]; maps homogeneous target
// pixels to source pixels for the plane at depth d.
Eigen::Matrix3d plane_homography(const CameraIntrinsics& K,
                                 const CameraPose& pose, double plane_depth);

// Inverse-warps one plane: each target pixel samples the source plane at
// H * [x, y, 1]. Bilinear, premultiplied-color interpolation; samples that
// fall outside the source frame contribute alpha 0.
MpiPlane warp_plane(const MpiPlane& plane, const Eigen::Matrix3d& H);

CompositeResult composite(const MultiplaneImage& mpi);

// Translation used for a view: t = d_near / 2 * shifts.
Eigen::Vector3d view_translation(const ViewSpec& view, const RenderConfig& cfg);

// build_mpi -> per-plane homography -> warp -> composite -> un-premultiply,
// filling fully transparent pixels with the configured background.
RenderResult render_novel_view(const Image& rgb, const DepthMap& depth,
                               const ViewSpec& view, const RenderConfig& cfg);

}  // namespace dssl::geometry
