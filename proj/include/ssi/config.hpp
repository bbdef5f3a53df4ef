#pragma once

#include "ssi/optics.hpp"
#include "ssi/registration.hpp"
#include "ssi/spi.hpp"
#include "ssi/superres.hpp"
#include "ssi/target.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace YAML {
class Emitter;
class Node;
} // namespace YAML

namespace ssi::config {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct SceneConfig {
  enum class Source { bar_target, file };
  Source source = Source::bar_target;
  std::filesystem::path path; // Source::file
  target::BarTargetSpec target;
};

struct NoiseConfig {
  enum class Model { none, gaussian, poisson };
  Model model = Model::none;
  std::optional<double> sigma_read; // gaussian: absolute read noise
  std::optional<double> snr_db;     // gaussian: reconstruction-domain SNR, per frame
  double scale = 1.0;               // poisson
};

struct SpiConfig {
  optics::SpiOptions options;
  NoiseConfig noise;
};

struct RegistrationConfig {
  registration::RegistrationOptions options{.presmooth_sigma = 1.5};
  int template_index = 0;
};

struct SuperresConfig {
  superres::SolveOptions options;
  std::optional<int> l1; // default: array cols
  std::optional<int> l2; // default: array rows
  double phase_tolerance = 0.02;
  bool export_weights = false;
  bool nearest_initial = true; // seed CG with the nearest-neighbour upsampled template
};

struct PipelineConfig {
  std::optional<std::uint64_t> seed;
  SceneConfig scene;
  optics::OpticalGeometry geometry;
  optics::DetectorArray array;
  SpiConfig spi;
  RegistrationConfig registration;
  SuperresConfig superres;
  std::filesystem::path out_dir = "ssi_out";

  void validate() const;
};

/// Parses a config document. Unknown keys, wrong types and invalid values raise ConfigError.
/// Relative file paths are resolved against `base_dir`.
PipelineConfig parse_config(const std::string &text, const std::filesystem::path &base_dir = {});
PipelineConfig load_config(const std::filesystem::path &path);

/// Emits the full resolved config as a YAML map (keys in schema order). The output section
/// is skipped when `include_output` is false, so reports do not depend on where they live.
void emit_config(YAML::Emitter &out, const PipelineConfig &cfg, bool include_output = true);
std::string to_yaml(const PipelineConfig &cfg);

} // namespace ssi::config
