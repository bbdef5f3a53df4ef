#pragma once

#include "ssi/image.hpp"
#include "ssi/random.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace ssi::spi {

/// Sylvester-ordered Hadamard matrix, entries in {+1, -1}.
using HadamardMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Scheme { differential_pairs, raw_bipolar };

const char *to_string(Scheme s);
Scheme scheme_from_string(const std::string &s);

bool is_power_of_two(std::int64_t n);

/// Throws std::invalid_argument unless order is a positive power of two.
HadamardMatrix hadamard_matrix(std::int64_t order);

/// Entry (row, col) of the Sylvester Hadamard matrix: (-1)^popcount(row & col).
inline int hadamard_entry(std::uint64_t row, std::uint64_t col) {
  return (__builtin_popcountll(row & col) & 1) ? -1 : 1;
}

/// In-place unnormalized fast Walsh-Hadamard transform, natural (Sylvester) order.
/// Computes H * v for the Hadamard matrix of order v.size().
void fwht(Eigen::Ref<Eigen::VectorXd> v);

/// Hadamard illumination patterns for an N x N basis. Patterns are produced on demand:
/// materializing 2 N^2 patterns of N^2 pixels each is wasteful for N = 64.
class PatternSet {
public:
  PatternSet(int basis_side, Scheme scheme);

  int basis_side() const { return basis_side_; }
  Scheme scheme() const { return scheme_; }
  std::size_t size() const;

  /// Pattern k. Differential: entries in {0,1}, 2j is (1+h_j)/2 and 2j+1 is (1-h_j)/2.
  /// Raw bipolar: entries in {+1,-1}, row k of the Hadamard matrix reshaped row-major.
  Raster<double> pattern(std::size_t k) const;

private:
  int basis_side_;
  Scheme scheme_;
};

PatternSet generate_patterns(int basis_side, Scheme scheme);

struct NoNoise {};
struct AdditiveGaussian {
  double sigma_read = 0.0;
};
/// Photon-counting noise: reading m becomes Poisson(m * scale) / scale.
struct PoissonNoise {
  double scale = 1.0;
};
using NoiseModel = std::variant<NoNoise, AdditiveGaussian, PoissonNoise>;

struct MeasurementVector {
  Eigen::VectorXd values;
  Scheme scheme = Scheme::differential_pairs;
  int basis_side = 0;
};

/// m_k = sum(pattern_k * scene) plus noise. Noise for measurement k is drawn from
/// substream k of `stream`, so results do not depend on evaluation order.
MeasurementVector simulate_measurements(const Image &scene, const PatternSet &patterns,
                                        const NoiseModel &noise = NoNoise{},
                                        const RandomStream &stream = RandomStream{0});

/// Inverse Hadamard reconstruction: image = H^T d / N^2 where d are bipolar coefficients.
Image reconstruct_image(const MeasurementVector &m);

/// Read-noise sigma that yields the requested reconstruction-domain SNR (dB) for a scene,
/// i.e. reconstructed pixel noise std = rms(scene) / 10^(snr/20).
double read_noise_for_snr(const Image &scene, double snr_db, Scheme scheme);

} // namespace ssi::spi
