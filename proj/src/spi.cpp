#include "ssi/spi.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ssi::spi {

const char *to_string(Scheme s) {
  return s == Scheme::differential_pairs ? "differential_pairs" : "raw_bipolar";
}

Scheme scheme_from_string(const std::string &s) {
  if (s == "differential_pairs")
    return Scheme::differential_pairs;
  if (s == "raw_bipolar")
    return Scheme::raw_bipolar;
  throw std::invalid_argument("unknown measurement scheme '" + s + "'");
}

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

HadamardMatrix hadamard_matrix(std::int64_t order) {
  if (!is_power_of_two(order))
    throw std::invalid_argument("Hadamard order must be a positive power of two, got " +
                                std::to_string(order));
  HadamardMatrix h(order, order);
  h(0, 0) = 1;
  // Sylvester doubling: [[H, H], [H, -H]]
  for (std::int64_t n = 1; n < order; n *= 2) {
    h.block(0, n, n, n) = h.block(0, 0, n, n);
    h.block(n, 0, n, n) = h.block(0, 0, n, n);
    h.block(n, n, n, n) = -h.block(0, 0, n, n);
  }
  return h;
}

void fwht(Eigen::Ref<Eigen::VectorXd> v) {
  const Eigen::Index n = v.size();
  if (!is_power_of_two(n))
    throw std::invalid_argument("fwht length must be a power of two");
  for (Eigen::Index half = 1; half < n; half *= 2) {
    for (Eigen::Index block = 0; block < n; block += 2 * half) {
      for (Eigen::Index i = block; i < block + half; ++i) {
        const double a = v[i];
        const double b = v[i + half];
        v[i] = a + b;
        v[i + half] = a - b;
      }
    }
  }
}

PatternSet::PatternSet(int basis_side, Scheme scheme) : basis_side_(basis_side), scheme_(scheme) {
  if (!is_power_of_two(basis_side))
    throw std::invalid_argument("basis side must be a positive power of two, got " +
                                std::to_string(basis_side));
}

std::size_t PatternSet::size() const {
  const auto n2 = static_cast<std::size_t>(basis_side_) * basis_side_;
  return scheme_ == Scheme::differential_pairs ? 2 * n2 : n2;
}

Raster<double> PatternSet::pattern(std::size_t k) const {
  if (k >= size())
    throw std::out_of_range("pattern index out of range");
  const std::uint64_t row = scheme_ == Scheme::differential_pairs ? k / 2 : k;
  const bool complement = scheme_ == Scheme::differential_pairs && (k % 2 == 1);
  Raster<double> p(basis_side_, basis_side_);
  for (int y = 0; y < basis_side_; ++y) {
    for (int x = 0; x < basis_side_; ++x) {
      const int h = hadamard_entry(row, static_cast<std::uint64_t>(y) * basis_side_ + x);
      if (scheme_ == Scheme::raw_bipolar)
        p(y, x) = h;
      else
        p(y, x) = complement ? (1 - h) / 2 : (1 + h) / 2;
    }
  }
  return p;
}

PatternSet generate_patterns(int basis_side, Scheme scheme) { return PatternSet(basis_side, scheme); }

namespace {

double apply_noise(double m, const NoiseModel &noise, const RandomStream &stream) {
  return std::visit(
      [&](const auto &model) -> double {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, NoNoise>) {
          return m;
        } else if constexpr (std::is_same_v<T, AdditiveGaussian>) {
          if (model.sigma_read == 0.0)
            return m;
          auto eng = stream.engine();
          std::normal_distribution<double> dist(0.0, model.sigma_read);
          return m + dist(eng);
        } else {
          if (m < 0.0)
            throw std::invalid_argument("Poisson noise requires nonnegative readings");
          auto eng = stream.engine();
          std::poisson_distribution<long long> dist(m * model.scale);
          return static_cast<double>(dist(eng)) / model.scale;
        }
      },
      noise);
}

void validate_noise(const NoiseModel &noise) {
  if (const auto *g = std::get_if<AdditiveGaussian>(&noise); g && !(g->sigma_read >= 0.0))
    throw std::invalid_argument("Gaussian read noise sigma must be >= 0");
  if (const auto *p = std::get_if<PoissonNoise>(&noise); p && !(p->scale > 0.0))
    throw std::invalid_argument("Poisson scale must be > 0");
}

} // namespace

MeasurementVector simulate_measurements(const Image &scene, const PatternSet &patterns,
                                        const NoiseModel &noise, const RandomStream &stream) {
  const int n = patterns.basis_side();
  if (scene.width() != n || scene.height() != n)
    throw std::invalid_argument("scene must be " + std::to_string(n) + "x" + std::to_string(n) +
                                " to match the pattern basis");
  validate_noise(noise);

  const Eigen::Index n2 = Eigen::Index(n) * n;
  Eigen::VectorXd coeffs = Eigen::Map<const Eigen::VectorXd>(scene.pixels.data(), n2);
  const double total = coeffs.sum();
  fwht(coeffs); // bipolar inner products <h_k, scene>

  MeasurementVector m;
  m.scheme = patterns.scheme();
  m.basis_side = n;
  if (patterns.scheme() == Scheme::raw_bipolar) {
    m.values = coeffs;
  } else {
    m.values.resize(2 * n2);
    for (Eigen::Index k = 0; k < n2; ++k) {
      m.values[2 * k] = 0.5 * (total + coeffs[k]);
      m.values[2 * k + 1] = 0.5 * (total - coeffs[k]);
    }
  }
  if (!std::holds_alternative<NoNoise>(noise)) {
    for (Eigen::Index k = 0; k < m.values.size(); ++k)
      m.values[k] = apply_noise(m.values[k], noise, stream.substream(static_cast<std::uint64_t>(k)));
  }
  return m;
}

Image reconstruct_image(const MeasurementVector &m) {
  const int n = m.basis_side;
  if (!is_power_of_two(n))
    throw std::invalid_argument("measurement basis side must be a positive power of two");
  const Eigen::Index n2 = Eigen::Index(n) * n;
  const Eigen::Index expected = m.scheme == Scheme::differential_pairs ? 2 * n2 : n2;
  if (m.values.size() != expected)
    throw std::invalid_argument("measurement vector has length " + std::to_string(m.values.size()) +
                                ", expected " + std::to_string(expected));

  Eigen::VectorXd d(n2);
  if (m.scheme == Scheme::raw_bipolar) {
    d = m.values;
  } else {
    for (Eigen::Index k = 0; k < n2; ++k)
      d[k] = m.values[2 * k] - m.values[2 * k + 1];
  }
  fwht(d); // H is symmetric, so this is H^T d
  d /= static_cast<double>(n2);

  Image out(n, n);
  out.pixels = Eigen::Map<const Raster<double>>(d.data(), n, n);
  return out;
}

double read_noise_for_snr(const Image &scene, double snr_db, Scheme scheme) {
  const double rms = std::sqrt(scene.pixels.squaredNorm() / static_cast<double>(scene.pixels.size()));
  const double pixel_sigma = rms / std::pow(10.0, snr_db / 20.0);
  // Pixel noise = sigma * sqrt(#readings per coefficient) * N / N^2.
  const double n = static_cast<double>(scene.width());
  const double per_coeff = scheme == Scheme::differential_pairs ? std::sqrt(2.0) : 1.0;
  return pixel_sigma * n / per_coeff;
}

} // namespace ssi::spi
