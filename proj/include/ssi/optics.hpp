#pragma once

#include "ssi/image.hpp"
#include "ssi/spi.hpp"

#include <optional>
#include <vector>

namespace ssi::optics {

/// Lengths: z1, z2 in mm; wavelength, encoding_pixel, lr_pixel_pitch in micrometres.
struct OpticalGeometry {
  double z1 = 50.0;
  double z2 = 0.04;
  double magnification = 10.0;
  double na = 0.25;
  double wavelength = 0.633;
  double encoding_pixel = 86.4;
  double lr_pixel_pitch = 100.8;

  void validate() const;
};

struct DetectorArray {
  int rows = 6;
  int cols = 6;
  double pitch = 2.1; // mm between adjacent detector centres
  int binning = 120;  // camera pixels per detector side (recorded, not simulated)

  void validate() const;
  int count() const { return rows * cols; }
};

/// Image-plane shift in micrometres for a detector (or LED) `lateral_offset` mm off axis:
/// S_image = M * offset * z2 / z1. Sign follows z2.
double image_shift_um(const OpticalGeometry &geom, double lateral_offset);

/// image_shift_um converted to low-res pixels via lr_pixel_pitch.
double shift_from_geometry(const OpticalGeometry &geom, double lateral_offset);

/// One shift per detector, row-major over the array, offsets measured from the array centre.
std::vector<ShiftVector> array_shifts(const OpticalGeometry &geom, const DetectorArray &array);

/// lambda / NA^2 + e / (M * NA), micrometres.
double depth_of_field(const OpticalGeometry &geom);

/// Block mean over factor x factor tiles; pitch scales by factor.
template <typename Scalar>
BasicImage<Scalar> downsample_box(const BasicImage<Scalar> &img, int factor) {
  if (factor < 1)
    throw std::invalid_argument("downsample factor must be >= 1");
  if (img.width() % factor != 0 || img.height() % factor != 0)
    throw std::invalid_argument("image dimensions are not divisible by the downsample factor");
  const Eigen::Index w = img.width() / factor;
  const Eigen::Index h = img.height() / factor;
  BasicImage<Scalar> out(w, h, img.pixel_pitch * factor);
  const Scalar inv_area = Scalar(1) / static_cast<Scalar>(factor * factor);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out.pixels(y, x) = img.pixels.block(y * factor, x * factor, factor, factor).sum() * inv_area;
  return out;
}

/// Translate content by (dx, dy) pixels: out(x) = in(x - d), bilinear, replicate border.
template <typename Scalar>
BasicImage<Scalar> warp_subpixel(const BasicImage<Scalar> &img, const ShiftVector &s) {
  if (!std::isfinite(s.dx) || !std::isfinite(s.dy))
    throw std::invalid_argument("warp shift must be finite");
  BasicImage<Scalar> out(img.width(), img.height(), img.pixel_pitch);
  for (Eigen::Index y = 0; y < img.height(); ++y)
    for (Eigen::Index x = 0; x < img.width(); ++x)
      out.pixels(y, x) = sample_bilinear(img.pixels, static_cast<double>(x) - s.dx,
                                         static_cast<double>(y) - s.dy);
  return out;
}

struct SpiOptions {
  int basis_side = 64;
  spi::Scheme scheme = spi::Scheme::differential_pairs;
  bool through_spi = true;
};

struct LowResStack {
  std::vector<Image> frames;
  std::optional<std::vector<ShiftVector>> true_shifts;
  int template_index = 0;

  void validate() const;
};

/// Per detector: shift the high-res scene, box-downsample to basis_side x basis_side and,
/// when through_spi is set, pass the frame through Hadamard measurement and reconstruction.
/// Detector k's noise uses substream k of `stream`.
LowResStack simulate_lowres_stack(const Image &scene_hr, const OpticalGeometry &geom,
                                  const DetectorArray &array, const SpiOptions &spi_opts,
                                  const spi::NoiseModel &noise = spi::NoNoise{},
                                  const RandomStream &stream = RandomStream{0},
                                  int template_index = 0);

} // namespace ssi::optics
