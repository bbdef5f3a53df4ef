#include "ssi/optics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ssi::optics {

void OpticalGeometry::validate() const {
  if (!(z1 > 0.0))
    throw std::invalid_argument("geometry: z1 must be > 0");
  if (!std::isfinite(z2))
    throw std::invalid_argument("geometry: z2 must be finite");
  if (!(magnification > 0.0))
    throw std::invalid_argument("geometry: magnification must be > 0");
  if (!(na > 0.0 && na < 1.5))
    throw std::invalid_argument("geometry: na must lie in (0, 1.5)");
  if (!(wavelength > 0.0))
    throw std::invalid_argument("geometry: wavelength must be > 0");
  if (!(encoding_pixel >= 0.0))
    throw std::invalid_argument("geometry: encoding_pixel must be >= 0");
  if (!(lr_pixel_pitch > 0.0))
    throw std::invalid_argument("geometry: lr_pixel_pitch must be > 0");
}

void DetectorArray::validate() const {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("detector array: rows and cols must be >= 1");
  if (!(pitch > 0.0))
    throw std::invalid_argument("detector array: pitch must be > 0");
  if (binning < 1)
    throw std::invalid_argument("detector array: binning must be >= 1");
}

double image_shift_um(const OpticalGeometry &geom, double lateral_offset) {
  if (!(geom.z1 > 0.0))
    throw std::invalid_argument("geometry: z1 must be > 0");
  // mm -> um
  return geom.magnification * lateral_offset * (geom.z2 / geom.z1) * 1000.0;
}

double shift_from_geometry(const OpticalGeometry &geom, double lateral_offset) {
  geom.validate();
  return image_shift_um(geom, lateral_offset) / geom.lr_pixel_pitch;
}

std::vector<ShiftVector> array_shifts(const OpticalGeometry &geom, const DetectorArray &array) {
  geom.validate();
  array.validate();
  std::vector<ShiftVector> shifts;
  shifts.reserve(static_cast<std::size_t>(array.count()));
  const double cx = 0.5 * (array.cols - 1);
  const double cy = 0.5 * (array.rows - 1);
  for (int r = 0; r < array.rows; ++r) {
    for (int c = 0; c < array.cols; ++c) {
      shifts.push_back({shift_from_geometry(geom, (c - cx) * array.pitch),
                        shift_from_geometry(geom, (r - cy) * array.pitch)});
    }
  }
  return shifts;
}

double depth_of_field(const OpticalGeometry &geom) {
  geom.validate();
  return geom.wavelength / (geom.na * geom.na) +
         geom.encoding_pixel / (geom.magnification * geom.na);
}

void LowResStack::validate() const {
  if (frames.empty())
    throw std::invalid_argument("stack: no frames");
  for (const auto &f : frames)
    if (!f.same_shape(frames.front()))
      throw std::invalid_argument("stack: frames differ in dimensions");
  if (true_shifts && true_shifts->size() != frames.size())
    throw std::invalid_argument("stack: true_shifts length differs from frame count");
  if (template_index < 0 || template_index >= static_cast<int>(frames.size()))
    throw std::invalid_argument("stack: template_index out of range");
}

LowResStack simulate_lowres_stack(const Image &scene_hr, const OpticalGeometry &geom,
                                  const DetectorArray &array, const SpiOptions &spi_opts,
                                  const spi::NoiseModel &noise, const RandomStream &stream,
                                  int template_index) {
  const int n = spi_opts.basis_side;
  if (n < 1)
    throw std::invalid_argument("basis side must be >= 1");
  if (scene_hr.width() != scene_hr.height())
    throw std::invalid_argument("scene must be square");
  if (scene_hr.width() % n != 0)
    throw std::invalid_argument("scene side " + std::to_string(scene_hr.width()) +
                                " is not divisible by basis side " + std::to_string(n));
  if (template_index < 0 || template_index >= array.count())
    throw std::invalid_argument("template_index out of range for the detector array");
  const int factor = static_cast<int>(scene_hr.width() / n);

  const auto shifts = array_shifts(geom, array);
  std::optional<spi::PatternSet> patterns;
  if (spi_opts.through_spi)
    patterns.emplace(n, spi_opts.scheme);

  LowResStack stack;
  stack.template_index = template_index;
  stack.frames.reserve(shifts.size());
  for (std::size_t k = 0; k < shifts.size(); ++k) {
    Image frame = downsample_box(warp_subpixel(scene_hr, shifts[k] * factor), factor);
    if (patterns) {
      const double pitch = frame.pixel_pitch;
      const auto m = spi::simulate_measurements(frame, *patterns, noise, stream.substream(k));
      frame = spi::reconstruct_image(m);
      frame.pixel_pitch = pitch;
    }
    stack.frames.push_back(std::move(frame));
  }
  stack.true_shifts = shifts;
  return stack;
}

} // namespace ssi::optics
