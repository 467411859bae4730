#pragma once

// Spherical viewpoint augmentation: approximate a small camera rotation
// around the scene by warping the image on a constant-depth proxy surface.
//
// Geometry follows the usual pinhole convention (x right, y down, z forward).
// For an output pixel we unproject its ray at the assumed center depth,
// rotate by the transpose of the camera rotation, reproject, and bilinearly
// sample the source; rays leaving the image or the front hemisphere get the
// fill value. The applied offset and its negation are returned together so
// training can condition both the warped and original views.

#include <array>
#include <cstdint>

#include "qdd/common.hpp"

namespace qdd::view {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

inline void validate_intrinsics(const CameraIntrinsics& K) {
  require(K.fx > 0.0 && K.fy > 0.0, "invalid-argument", "focal lengths must be positive");
  require(K.width > 0 && K.height > 0, "invalid-argument", "image size must be positive");
  require(K.cx >= 0.0 && K.cx < static_cast<double>(K.width) && K.cy >= 0.0 &&
              K.cy < static_cast<double>(K.height),
          "invalid-argument", "principal point must lie inside the image");
}

// Viewpoint change relative to the original camera: radial distance delta,
// yaw (azimuth) and pitch (elevation), angles in radians.
struct SphericalOffset {
  double d = 0.0;
  double theta = 0.0;
  double phi = 0.0;

  std::array<double, 3> as_array() const { return {d, theta, phi}; }
  SphericalOffset negated() const { return {-d, -theta, -phi}; }
};

struct WarpSpec {
  double yaw = 0.0;    // radians, magnitude below pi/2
  double pitch = 0.0;  // radians, magnitude below pi/2
  double depth = 1.0;  // assumed scene depth along the optical axis
  double fill = 0.0;   // value for pixels with no source
};

inline void validate_warp_spec(const WarpSpec& spec) {
  require(spec.depth > 0.0, "invalid-argument", "warp depth must be positive");
  constexpr double kHalfPi = 1.5707963267948966;
  require(std::abs(spec.yaw) < kHalfPi && std::abs(spec.pitch) < kHalfPi, "invalid-argument",
          "warp angles must stay within (-pi/2, pi/2)");
  require(std::isfinite(spec.fill), "invalid-argument", "fill value must be finite");
}

template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> pixels;  // row-major, interleaved channels

  T& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  T at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

using ImageU8 = Image<std::uint8_t>;
using ImageF64 = Image<double>;

template <class T>
inline void validate_image(const Image<T>& img) {
  require(img.width > 0 && img.height > 0, "invalid-argument", "image size must be positive");
  require(img.channels > 0, "invalid-argument", "image needs at least one channel");
  require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
          "shape-mismatch", "pixel buffer does not match image dimensions");
}

using Mat3 = std::array<double, 9>;

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[3 * i + k] * b[3 * k + j];
      r[3 * i + j] = acc;
    }
  return r;
}

inline Mat3 mat3_transpose(const Mat3& a) {
  return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

inline std::array<double, 3> mat3_apply(const Mat3& a, const std::array<double, 3>& p) {
  return {a[0] * p[0] + a[1] * p[1] + a[2] * p[2], a[3] * p[0] + a[4] * p[1] + a[5] * p[2],
          a[6] * p[0] + a[7] * p[1] + a[8] * p[2]};
}

// Camera rotation for a pitch (about x) composed with a yaw (about y):
// R = Rx(pitch) * Ry(yaw).
inline Mat3 rotation_matrix(double pitch, double yaw) {
  double cp = std::cos(pitch), sp = std::sin(pitch);
  double cy = std::cos(yaw), sy = std::sin(yaw);
  Mat3 rx = {1, 0, 0, 0, cp, -sp, 0, sp, cp};
  Mat3 ry = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  return mat3_mul(rx, ry);
}

inline std::array<double, 3> unproject(double u, double v, double depth,
                                       const CameraIntrinsics& K) {
  require(depth > 0.0, "invalid-argument", "unprojection depth must be positive");
  return {(u - K.cx) * depth / K.fx, (v - K.cy) * depth / K.fy, depth};
}

inline std::array<double, 2> project(const std::array<double, 3>& p, const CameraIntrinsics& K) {
  if (!(p[2] > 0.0)) fail_numerical("behind-camera", "ray does not intersect the image plane");
  return {p[0] * K.fx / p[2] + K.cx, p[1] * K.fy / p[2] + K.cy};
}

namespace detail {

template <class T>
inline double bilinear(const Image<T>& img, double x, double y, int c) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  int x1 = std::min(x0 + 1, img.width - 1);
  int y1 = std::min(y0 + 1, img.height - 1);
  double wx = x - x0;
  double wy = y - y0;
  double v00 = static_cast<double>(img.at(y0, x0, c));
  double v01 = static_cast<double>(img.at(y0, x1, c));
  double v10 = static_cast<double>(img.at(y1, x0, c));
  double v11 = static_cast<double>(img.at(y1, x1, c));
  double top = v00 + wx * (v01 - v00);
  double bot = v10 + wx * (v11 - v10);
  return top + wy * (bot - top);
}

inline std::uint8_t pack_pixel(double v, std::uint8_t) {
  return static_cast<std::uint8_t>(qdd::clamp(std::llround(v), 0, 255));
}
inline double pack_pixel(double v, double) { return v; }

}  // namespace detail

template <class T>
inline Image<T> warp_image(const Image<T>& img, const CameraIntrinsics& K, const WarpSpec& spec) {
  validate_image(img);
  validate_intrinsics(K);
  validate_warp_spec(spec);
  require(K.width == img.width && K.height == img.height, "shape-mismatch",
          "intrinsics and image disagree on size");

  // Exact identity: no resampling, no boundary fill.
  if (spec.yaw == 0.0 && spec.pitch == 0.0) return img;

  Mat3 rt = mat3_transpose(rotation_matrix(spec.pitch, spec.yaw));
  Image<T> out;
  out.width = img.width;
  out.height = img.height;
  out.channels = img.channels;
  out.pixels.assign(img.pixels.size(), detail::pack_pixel(spec.fill, T{}));

  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto ray = unproject(static_cast<double>(x), static_cast<double>(y), spec.depth, K);
      auto src = mat3_apply(rt, ray);
      if (!(src[2] > 0.0)) continue;  // behind the source camera: keep fill
      double us = src[0] * K.fx / src[2] + K.cx;
      double vs = src[1] * K.fy / src[2] + K.cy;
      if (us < 0.0 || us > static_cast<double>(img.width - 1) || vs < 0.0 ||
          vs > static_cast<double>(img.height - 1))
        continue;
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = detail::pack_pixel(detail::bilinear(img, us, vs, c), T{});
    }
  }
  return out;
}

// Per-component [min, max] bounds for random viewpoint offsets. A collapsed
// component (min == max) is held constant at that value.
struct OffsetRanges {
  std::array<double, 2> d{0.0, 0.0};      // conditioning only; the warp is a pure rotation
  std::array<double, 2> yaw{0.0, 0.0};    // radians
  std::array<double, 2> pitch{0.0, 0.0};  // radians
};

inline void validate_ranges(const OffsetRanges& ranges) {
  for (const auto& r : {ranges.d, ranges.yaw, ranges.pitch})
    require(std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1], "invalid-argument",
            "offset range needs min <= max");
}

// Draw a random viewpoint offset and its conjugate. The warped view is
// conditioned on the negated offset (it must act as if the original camera
// was displaced), the original view on the applied offset.
inline std::pair<SphericalOffset, SphericalOffset> sample_offset(Rng& rng,
                                                                 const OffsetRanges& ranges) {
  validate_ranges(ranges);
  auto draw = [&](const std::array<double, 2>& r) {
    return r[0] == r[1] ? r[0] : rng.uniform(r[0], r[1]);
  };
  SphericalOffset applied;
  applied.d = draw(ranges.d);
  applied.theta = draw(ranges.yaw);
  applied.phi = draw(ranges.pitch);
  return {applied, applied.negated()};
}

// Box-average the image down to a side x side grayscale patch (channel
// mean). Feeds the observation encoder, which wants a fixed-width vector
// regardless of camera resolution.
template <class T>
inline Vec to_gray_patch(const Image<T>& img, int side) {
  validate_image(img);
  require(side > 0, "invalid-argument", "patch side must be positive");
  Vec patch(static_cast<std::size_t>(side) * side, 0.0);
  for (int py = 0; py < side; ++py) {
    int y0 = py * img.height / side;
    int y1 = std::max(y0 + 1, (py + 1) * img.height / side);
    y1 = std::min(y1, img.height);
    for (int px = 0; px < side; ++px) {
      int x0 = px * img.width / side;
      int x1 = std::max(x0 + 1, (px + 1) * img.width / side);
      x1 = std::min(x1, img.width);
      double acc = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < img.channels; ++c) acc += static_cast<double>(img.at(y, x, c));
      patch[static_cast<std::size_t>(py) * side + px] =
          acc / (static_cast<double>(y1 - y0) * (x1 - x0) * img.channels);
    }
  }
  return patch;
}

}  // namespace qdd::view
