#pragma once

#include "ssi/image.hpp"

#include <string>

namespace ssi::metrics {

/// 10 log10(peak^2 / MSE). Identical images give +infinity.
double psnr(const Image &a, const Image &b, double peak = 1.0);

/// "inf" for infinite values, otherwise the shortest round-trip decimal.
std::string format_db(double db);

/// Centred 2D DFT magnitude (DC at (w/2, h/2)).
Raster<double> centered_dft_magnitude(const Image &img);

/// ln(1 + |F|) of the centred spectrum, min-max normalized to [0, 1].
Image log_spectrum(const Image &img);

} // namespace ssi::metrics
