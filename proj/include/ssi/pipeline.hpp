#pragma once

#include "ssi/config.hpp"
#include "ssi/image.hpp"
#include "ssi/optics.hpp"
#include "ssi/registration.hpp"
#include "ssi/superres.hpp"
#include "ssi/target.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ssi::pipeline {

namespace fs = std::filesystem;

/// Error raised by run_pipeline, tagged with the stage that failed.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string &what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string &stage() const { return stage_; }

private:
  std::string stage_;
};

/// Exclusive lock on an output directory, released on destruction.
class DirectoryLock {
public:
  explicit DirectoryLock(const fs::path &dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock &) = delete;
  DirectoryLock &operator=(const DirectoryLock &) = delete;

private:
  fs::path path_;
};

struct Scene {
  Image image;
  std::optional<target::BarTargetSpec> target;
};

Scene make_scene(const config::PipelineConfig &cfg);

/// Scene pixels per low-res pixel.
int downsample_factor(const config::PipelineConfig &cfg, const Image &scene);

spi::NoiseModel noise_model(const config::PipelineConfig &cfg, const Image &scene);

optics::LowResStack simulate(const config::PipelineConfig &cfg, const Image &scene);

std::vector<registration::ShiftEstimate> register_stack(const config::PipelineConfig &cfg,
                                                        const optics::LowResStack &stack);

superres::GridSpec grid_for(const config::PipelineConfig &cfg, const optics::LowResStack &stack);

struct Synthesis {
  superres::HighResImage hr;
  superres::GridSpec grid;
  std::vector<int> used_frames;
  Eigen::Index nonzeros = 0;
  double truncation_radius = 0.0;
  double residual_norm = 0.0;         // ||P h - L||
  double initial_residual_norm = 0.0; // same for the nearest-neighbour template
};

/// Builds P from the converged estimates and solves for the high-res image. Frames whose
/// registration did not converge are left out. Optionally writes P as CSV.
Synthesis synthesize(const config::PipelineConfig &cfg, const optics::LowResStack &stack,
                     const std::vector<registration::ShiftEstimate> &estimates,
                     const std::optional<fs::path> &weights_csv = std::nullopt);

/// Stack directory: stack.yaml plus one SSIF file per frame.
void write_stack(const fs::path &dir, const optics::LowResStack &stack, int factor);
optics::LowResStack read_stack(const fs::path &dir);

struct GroupContrast {
  double period_scene = 0.0; // scene pixels
  double period_lr = 0.0;    // low-res pixels
  double hr = 0.0;
  double nearest = 0.0;
  double lr_template = 0.0;
  double lr_min = 0.0;
  double lr_max = 0.0;
};

struct RunReport {
  std::uint64_t seed = 0;
  int factor = 1;
  std::vector<registration::ShiftEstimate> estimates;
  std::optional<std::vector<ShiftVector>> relative_true_shifts;
  double max_shift_error = 0.0;
  Synthesis synthesis;
  std::optional<double> psnr_hr;
  std::optional<double> psnr_nearest;
  std::vector<GroupContrast> contrasts;
  std::vector<std::pair<std::string, std::string>> artifacts; // file, digest
  fs::path report_path;
};

/// End to end: scene -> low-res stack -> shifts -> high-res image -> metrics, writing every
/// artifact plus report.yaml into cfg.out_dir.
RunReport run_pipeline(const config::PipelineConfig &cfg);

} // namespace ssi::pipeline
