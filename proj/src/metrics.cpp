#include "ssi/metrics.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

namespace ssi::metrics {

double psnr(const Image &a, const Image &b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0))
    throw std::invalid_argument("psnr: peak must be > 0");
  const double mse = (a.pixels - b.pixels).squaredNorm() / static_cast<double>(a.pixels.size());
  if (mse == 0.0)
    return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::string format_db(double db) {
  if (std::isinf(db))
    return db > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << db;
  return os.str();
}

Raster<double> centered_dft_magnitude(const Image &img) {
  const Eigen::Index w = img.width();
  const Eigen::Index h = img.height();
  Eigen::FFT<double> fft;
  Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> spec(h, w);

  std::vector<double> row_in(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> row_out;
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x)
      row_in[static_cast<std::size_t>(x)] = img.pixels(y, x);
    fft.fwd(row_out, row_in);
    for (Eigen::Index x = 0; x < w; ++x)
      spec(y, x) = row_out[static_cast<std::size_t>(x)];
  }
  std::vector<std::complex<double>> col_in(static_cast<std::size_t>(h)), col_out;
  for (Eigen::Index x = 0; x < w; ++x) {
    for (Eigen::Index y = 0; y < h; ++y)
      col_in[static_cast<std::size_t>(y)] = spec(y, x);
    fft.fwd(col_out, col_in);
    for (Eigen::Index y = 0; y < h; ++y)
      spec(y, x) = col_out[static_cast<std::size_t>(y)];
  }

  Raster<double> mag(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      mag((y + h / 2) % h, (x + w / 2) % w) = std::abs(spec(y, x));
  return mag;
}

Image log_spectrum(const Image &img) {
  Raster<double> v = centered_dft_magnitude(img).array().log1p();
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (hi > lo)
    v = (v.array() - lo) / (hi - lo);
  else
    v.setZero();
  return Image(std::move(v), img.pixel_pitch);
}

} // namespace ssi::metrics
