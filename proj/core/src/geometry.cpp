#include "dssl/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dssl::geometry {

namespace {

constexpr double kOrthoTol = 1e-9;
constexpr double kHoleAlpha = 1e-6;

}  // namespace

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw ValidationError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw ValidationError("intrinsics: image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw ValidationError("intrinsics: principal point outside image");
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) ||
      !std::isfinite(cy))
    throw ValidationError("intrinsics: non-finite entries");
}

CameraIntrinsics CameraIntrinsics::default_for(int height, int width) {
  CameraIntrinsics k;
  k.fx = k.fy = static_cast<double>(std::max(height, width));
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

void CameraPose::validate() const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kOrthoTol)
    throw ValidationError("pose: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > kOrthoTol)
    throw ValidationError("pose: rotation determinant is not +1");
  if (!translation.allFinite())
    throw ValidationError("pose: non-finite translation");
}

void MultiplaneImage::validate() const {
  if (planes.size() < 2)
    throw ValidationError("mpi: needs at least 2 planes");
  for (size_t i = 0; i < planes.size(); ++i) {
    const MpiPlane& p = planes[i];
    if (p.height != height || p.width != width)
      throw ShapeError("mpi: plane size mismatch");
    if (!(p.depth > 0.0)) throw ValidationError("mpi: plane depth must be > 0");
    if (i > 0 && !(planes[i - 1].depth < p.depth))
      throw ValidationError("mpi: plane depths must be strictly increasing");
    for (double a : p.alpha)
      if (!(a >= 0.0 && a <= 1.0))
        throw ValidationError("mpi: alpha outside [0,1]");
  }
}

MultiplaneImage build_mpi(const Image& rgb, const DepthMap& depth,
                          int num_planes, double depth_near, double depth_far) {
  require_rgb(rgb, "build_mpi");
  require_aligned(rgb, depth, "build_mpi");
  if (num_planes < 2) throw ValidationError("build_mpi: num_planes must be >= 2");
  if (!(depth_near > 0.0) || !(depth_far > depth_near))
    throw ValidationError("build_mpi: need 0 < depth_near < depth_far");
  depth.validate();

  const int h = rgb.height, w = rgb.width;
  const double disp_near = 1.0 / depth_near;
  const double disp_far = 1.0 / depth_far;

  // Plane i (front to back) sits at disparity disp_near - i * step.
  const double step = (disp_near - disp_far) / (num_planes - 1);

  MultiplaneImage mpi;
  mpi.height = h;
  mpi.width = w;
  mpi.planes.reserve(num_planes);
  for (int i = 0; i < num_planes; ++i) {
    const double disp = disp_near - i * step;
    mpi.planes.emplace_back(h, w, 1.0 / disp);
    MpiPlane& p = mpi.planes.back();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) p.col(c, y, x) = rgb.at(c, y, x);
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Relative disparity in [0,1] -> scene disparity.
      const double disp = disp_far + static_cast<double>(depth.at(y, x)) *
                                         (disp_near - disp_far);
      // Continuous front-to-back plane coordinate.
      double u = (disp_near - disp) / step;
      u = std::clamp(u, 0.0, static_cast<double>(num_planes - 1));
      const int lo = static_cast<int>(std::floor(u));
      if (lo >= num_planes - 1) {
        mpi.planes[num_planes - 1].a(y, x) = 1.0;
      } else {
        const double frac = u - lo;
        mpi.planes[lo].a(y, x) = 1.0 - frac;
        mpi.planes[lo + 1].a(y, x) = frac;
      }
    }
  }
  return mpi;
}

Eigen::Matrix3d plane_homography(const CameraIntrinsics& K,
                                 const CameraPose& pose, double plane_depth) {
  if (!(plane_depth > 0.0))
    throw DomainError("plane_homography: plane depth must be > 0");
  K.validate();
  pose.validate();
  const Eigen::Matrix3d k = K.matrix();
  if (std::abs(k.determinant()) < 1e-12)
    throw ValidationError("plane_homography: singular intrinsic matrix");

  const Eigen::Vector3d n(0.0, 0.0, 1.0);
  const Eigen::Matrix3d m =
      pose.rotation - (pose.translation * n.transpose()) / plane_depth;
  const Eigen::Matrix3d h = k * m * k.inverse();
  if (!h.allFinite())
    throw ValidationError("plane_homography: non-finite result");
  return h;
}

MpiPlane warp_plane(const MpiPlane& plane, const Eigen::Matrix3d& H) {
  if (std::abs(H.determinant()) < 1e-12)
    throw DomainError("warp_plane: homography is not invertible");
  const int h = plane.height, w = plane.width;
  MpiPlane out(h, w, plane.depth);

  const size_t npix = static_cast<size_t>(h) * w;
  // Interpolate premultiplied color so partially covered samples do not
  // bleed toward black at the transparent border.
  std::vector<double> premul(3 * npix);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < npix; ++i)
      premul[c * npix + i] = plane.color[c * npix + i] * plane.alpha[i];

  auto sample = [&](const std::vector<double>& buf, size_t plane_off, int xi,
                    int yi) -> double {
    if (xi < 0 || xi >= w || yi < 0 || yi >= h) return 0.0;
    return buf[plane_off + static_cast<size_t>(yi) * w + xi];
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d src = H * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(src.z()) < 1e-12) continue;  // behind-camera: transparent
      const double sx = src.x() / src.z();
      const double sy = src.y() / src.z();
      if (sx <= -1.0 || sx >= w || sy <= -1.0 || sy >= h) continue;

      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;

      if (fx == 0.0 && fy == 0.0) {
        // Exact grid hit: copy, keeping integer translations bit-identical.
        if (x0 >= 0 && x0 < w && y0 >= 0 && y0 < h) {
          out.a(y, x) = plane.a(y0, x0);
          for (int c = 0; c < 3; ++c) out.col(c, y, x) = plane.col(c, y0, x0);
        }
        continue;
      }

      const double w00 = (1.0 - fx) * (1.0 - fy);
      const double w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy;
      const double w11 = fx * fy;

      const double a = w00 * sample(plane.alpha, 0, x0, y0) +
                       w10 * sample(plane.alpha, 0, x0 + 1, y0) +
                       w01 * sample(plane.alpha, 0, x0, y0 + 1) +
                       w11 * sample(plane.alpha, 0, x0 + 1, y0 + 1);
      out.a(y, x) = a;
      if (a <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        const size_t off = static_cast<size_t>(c) * npix;
        const double pm = w00 * sample(premul, off, x0, y0) +
                          w10 * sample(premul, off, x0 + 1, y0) +
                          w01 * sample(premul, off, x0, y0 + 1) +
                          w11 * sample(premul, off, x0 + 1, y0 + 1);
        out.col(c, y, x) = pm / a;
      }
    }
  }
  return out;
}

CompositeResult composite(const MultiplaneImage& mpi) {
  if (mpi.planes.empty())
    throw ValidationError("composite: empty plane list");
  const int h = mpi.height, w = mpi.width;
  const size_t npix = static_cast<size_t>(h) * w;
  CompositeResult out;
  out.height = h;
  out.width = w;
  out.color.assign(3 * npix, 0.0);
  out.alpha.assign(npix, 0.0);

  // Back to front: out <- c_i * a_i + out * (1 - a_i).
  for (auto it = mpi.planes.rbegin(); it != mpi.planes.rend(); ++it) {
    const MpiPlane& p = *it;
    if (p.height != h || p.width != w)
      throw ShapeError("composite: plane size mismatch");
    for (size_t i = 0; i < npix; ++i) {
      const double a = p.alpha[i];
      const double keep = 1.0 - a;
      for (int c = 0; c < 3; ++c) {
        const size_t j = static_cast<size_t>(c) * npix + i;
        out.color[j] = p.color[j] * a + out.color[j] * keep;
      }
      out.alpha[i] = a + out.alpha[i] * keep;
    }
  }
  return out;
}

Eigen::Vector3d view_translation(const ViewSpec& view, const RenderConfig& cfg) {
  auto clamp_shift = [&](double v) {
    return std::clamp(v, -cfg.max_shift, cfg.max_shift);
  };
  // Scaling by d_near/2 puts a unit shift at half the nearest plane depth:
  // with default intrinsics (fx = max(H,W)) the nearest content moves by
  // fx * shift / 2 pixels, i.e. shift = 0.5 displaces the foreground by a
  // quarter of the image width and the far plane barely at all.
  const double scale = cfg.depth_near / 2.0;
  return scale * Eigen::Vector3d(clamp_shift(view.x_shift),
                                 clamp_shift(view.y_shift),
                                 clamp_shift(view.z_shift));
}

RenderResult render_novel_view(const Image& rgb, const DepthMap& depth,
                               const ViewSpec& view, const RenderConfig& cfg) {
  MultiplaneImage mpi =
      build_mpi(rgb, depth, cfg.num_planes, cfg.depth_near, cfg.depth_far);

  CameraIntrinsics intr = cfg.intrinsics
                              ? *cfg.intrinsics
                              : CameraIntrinsics::default_for(rgb.height,
                                                              rgb.width);
  CameraPose pose;
  pose.translation = view_translation(view, cfg);

  MultiplaneImage warped;
  warped.height = mpi.height;
  warped.width = mpi.width;
  warped.planes.reserve(mpi.planes.size());
  for (const MpiPlane& p : mpi.planes) {
    const Eigen::Matrix3d h = plane_homography(intr, pose, p.depth);
    warped.planes.push_back(warp_plane(p, h));
  }

  const CompositeResult comp = composite(warped);

  std::array<double, 3> bg;
  switch (cfg.background) {
    case BackgroundMode::mean_color: bg = mean_color(rgb); break;
    case BackgroundMode::black: bg = {0.0, 0.0, 0.0}; break;
    case BackgroundMode::custom: bg = cfg.background_color; break;
  }

  const size_t npix = static_cast<size_t>(comp.height) * comp.width;
  RenderResult out;
  out.color = Image(3, comp.height, comp.width);
  out.alpha.resize(npix);
  for (size_t i = 0; i < npix; ++i) {
    const double a = comp.alpha[i];
    out.alpha[i] = static_cast<float>(a);
    for (int c = 0; c < 3; ++c) {
      // The premultiplied color is a convex combination of source colors
      // scaled by coverage; dividing by coverage recovers it exactly.
      const double v = a > kHoleAlpha
                           ? comp.color[static_cast<size_t>(c) * npix + i] / a
                           : bg[c];
      out.color.data[static_cast<size_t>(c) * npix + i] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace dssl::geometry
