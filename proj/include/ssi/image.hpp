#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ssi {

/// Row-major dense raster. Row index is y, column index is x.
template <typename Scalar>
using Raster = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 2D real-valued image with pixel pitch metadata (micrometres).
template <typename Scalar>
struct BasicImage {
  Raster<Scalar> pixels;
  double pixel_pitch = 1.0;

  BasicImage() = default;
  BasicImage(Eigen::Index width, Eigen::Index height, double pitch = 1.0)
      : pixels(Raster<Scalar>::Zero(height, width)), pixel_pitch(pitch) {
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("image dimensions must be positive");
  }
  explicit BasicImage(Raster<Scalar> px, double pitch = 1.0)
      : pixels(std::move(px)), pixel_pitch(pitch) {
    if (pixels.size() == 0)
      throw std::invalid_argument("image dimensions must be positive");
  }

  Eigen::Index width() const { return pixels.cols(); }
  Eigen::Index height() const { return pixels.rows(); }
  Scalar operator()(Eigen::Index x, Eigen::Index y) const { return pixels(y, x); }
  Scalar &operator()(Eigen::Index x, Eigen::Index y) { return pixels(y, x); }

  bool same_shape(const BasicImage &other) const {
    return width() == other.width() && height() == other.height();
  }
};

using Image = BasicImage<double>;

/// 2D translation in low-res pixel units. Positive dx moves content towards +x.
struct ShiftVector {
  double dx = 0.0;
  double dy = 0.0;

  friend bool operator==(const ShiftVector &, const ShiftVector &) = default;
  ShiftVector operator-(const ShiftVector &o) const { return {dx - o.dx, dy - o.dy}; }
  ShiftVector operator*(double s) const { return {dx * s, dy * s}; }
};

inline void require_same_shape(const Image &a, const Image &b, const char *what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": image dimensions differ");
}

/// Bilinear sample at continuous pixel-index coordinates (pixel centres at integers),
/// replicating the border outside the raster.
template <typename Derived>
typename Derived::Scalar sample_bilinear(const Eigen::MatrixBase<Derived> &r, double x, double y) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index w = r.cols();
  const Eigen::Index h = r.rows();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const Eigen::Index x1 = std::min(x0 + 1, w - 1);
  const Eigen::Index y1 = std::min(y0 + 1, h - 1);
  const Scalar fx = static_cast<Scalar>(x - static_cast<double>(x0));
  const Scalar fy = static_cast<Scalar>(y - static_cast<double>(y0));
  const Scalar top = (Scalar(1) - fx) * r(y0, x0) + fx * r(y0, x1);
  const Scalar bottom = (Scalar(1) - fx) * r(y1, x0) + fx * r(y1, x1);
  return (Scalar(1) - fy) * top + fy * bottom;
}

} // namespace ssi
