// Command-line front end for the sampling imaging pipeline.

#include "ssi/config.hpp"
#include "ssi/io.hpp"
#include "ssi/metrics.hpp"
#include "ssi/pipeline.hpp"
#include "ssi/spi.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using namespace ssi;

// Stream used by spi-reconstruct; the pipeline uses stream 1 for the detector array.
constexpr std::uint64_t kReconstructStream = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out_dir;
};

config::PipelineConfig load(const fs::path &path, const Globals &g) {
  auto cfg = path.empty() ? config::parse_config("") : config::load_config(path);
  if (g.seed)
    cfg.seed = g.seed;
  if (g.out_dir)
    cfg.out_dir = *g.out_dir;
  cfg.validate();
  return cfg;
}

void write_image(const fs::path &dir, const std::string &stem, const Image &img) {
  io::write_ssif(dir / (stem + ".ssif"), img);
  io::write_pgm16(dir / (stem + ".pgm"), img);
}

void write_measurements(const fs::path &path, const spi::MeasurementVector &m) {
  std::ofstream os(path);
  os << "# scheme=" << spi::to_string(m.scheme) << " basis_side=" << m.basis_side << '\n';
  os << "index,value\n";
  for (Eigen::Index k = 0; k < m.values.size(); ++k)
    os << k << ',' << io::format_double(m.values[k]) << '\n';
  if (!os)
    throw std::runtime_error("cannot write '" + path.string() + "'");
}

spi::MeasurementVector read_measurements(const fs::path &path, const config::PipelineConfig &cfg) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open '" + path.string() + "'");
  spi::MeasurementVector m;
  m.scheme = cfg.spi.options.scheme;
  m.basis_side = cfg.spi.options.basis_side;
  std::vector<double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line == "index,value")
      continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos || std::stoll(line.substr(0, comma)) != static_cast<long long>(values.size()))
        throw std::invalid_argument("bad index");
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception &) {
      throw io::FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'index,value' in order");
    }
  }
  m.values = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return m;
}

std::vector<registration::ShiftEstimate> read_estimates(const fs::path &path) {
  std::vector<registration::ShiftEstimate> out;
  for (const auto &row : io::read_shifts_csv(path)) {
    if (row.frame != static_cast<int>(out.size()))
      throw io::FormatError(path.string() + ": frames must be listed in order from 0");
    registration::ShiftEstimate e;
    e.p = {row.dx, row.dy};
    e.iterations = row.iterations;
    e.converged = row.converged;
    out.push_back(e);
  }
  return out;
}

int cmd_target(const config::PipelineConfig &cfg) {
  pipeline::DirectoryLock lock(cfg.out_dir);
  const auto scene = pipeline::make_scene(cfg);
  write_image(cfg.out_dir, "scene", scene.image);
  std::cout << "scene " << scene.image.width() << "x" << scene.image.height() << " -> "
            << (cfg.out_dir / "scene.ssif").string() << '\n';
  return 0;
}

int cmd_simulate(const config::PipelineConfig &cfg) {
  pipeline::DirectoryLock lock(cfg.out_dir);
  const auto scene = pipeline::make_scene(cfg);
  const int factor = pipeline::downsample_factor(cfg, scene.image);
  const auto stack = pipeline::simulate(cfg, scene.image);
  pipeline::write_stack(cfg.out_dir / "stack", stack, factor);
  io::write_pgm16(cfg.out_dir / "template.pgm", stack.frames[static_cast<std::size_t>(stack.template_index)]);
  std::cout << stack.frames.size() << " frames of " << stack.frames.front().width() << "x"
            << stack.frames.front().height() << " -> " << (cfg.out_dir / "stack").string() << '\n';
  return 0;
}

int cmd_spi(const config::PipelineConfig &cfg, const fs::path &scene_path, const fs::path &meas_path) {
  pipeline::DirectoryLock lock(cfg.out_dir);
  spi::MeasurementVector m;
  if (!meas_path.empty()) {
    m = read_measurements(meas_path, cfg);
  } else {
    Image scene = scene_path.empty() ? pipeline::make_scene(cfg).image : io::read_image(scene_path);
    scene = optics::downsample_box(scene, pipeline::downsample_factor(cfg, scene));
    const auto patterns = spi::generate_patterns(cfg.spi.options.basis_side, cfg.spi.options.scheme);
    auto noise_cfg = cfg;
    noise_cfg.spi.options.basis_side = static_cast<int>(scene.width());
    m = spi::simulate_measurements(scene, patterns, pipeline::noise_model(noise_cfg, scene),
                                   RandomStream(cfg.seed.value_or(0)).substream(kReconstructStream));
    write_measurements(cfg.out_dir / "measurements.csv", m);
  }
  const Image img = spi::reconstruct_image(m);
  write_image(cfg.out_dir, "reconstruction", img);
  std::cout << m.values.size() << " measurements (" << spi::to_string(m.scheme) << ") -> "
            << (cfg.out_dir / "reconstruction.ssif").string() << '\n';
  return 0;
}

int cmd_register(const config::PipelineConfig &cfg, fs::path stack_dir) {
  pipeline::DirectoryLock lock(cfg.out_dir);
  if (stack_dir.empty())
    stack_dir = cfg.out_dir / "stack";
  const auto stack = pipeline::read_stack(stack_dir);
  const auto est = pipeline::register_stack(cfg, stack);
  io::write_shifts_csv(cfg.out_dir / "shifts.csv", io::to_rows(est));
  int converged = 0;
  for (const auto &e : est)
    converged += e.converged;
  std::cout << converged << " of " << est.size() << " frames converged -> "
            << (cfg.out_dir / "shifts.csv").string() << '\n';
  return 0;
}

int cmd_superres(const config::PipelineConfig &cfg, fs::path stack_dir, fs::path shifts) {
  pipeline::DirectoryLock lock(cfg.out_dir);
  if (stack_dir.empty())
    stack_dir = cfg.out_dir / "stack";
  if (shifts.empty())
    shifts = cfg.out_dir / "shifts.csv";
  const auto stack = pipeline::read_stack(stack_dir);
  const auto est = read_estimates(shifts);
  std::optional<fs::path> weights;
  if (cfg.superres.export_weights)
    weights = cfg.out_dir / "weights.csv";
  const auto syn = pipeline::synthesize(cfg, stack, est, weights);
  write_image(cfg.out_dir, "hr", syn.hr.image);
  std::cout << "high-res " << syn.grid.hr_width() << "x" << syn.grid.hr_height() << " from "
            << syn.used_frames.size() << " frames, CG " << syn.hr.iterations << " iterations"
            << (syn.hr.converged ? "" : " (not converged)") << " -> " << (cfg.out_dir / "hr.ssif").string()
            << '\n';
  return syn.hr.converged ? 0 : 2;
}

int cmd_pipeline(const config::PipelineConfig &cfg) {
  const auto r = pipeline::run_pipeline(cfg);
  const auto db = [](const std::optional<double> &v) {
    if (!v)
      return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  std::printf("frames %zu, max shift error %.4f px\n", r.estimates.size(), r.max_shift_error);
  std::cout << "PSNR high-res " << db(r.psnr_hr) << " dB, nearest " << db(r.psnr_nearest) << " dB\n";
  for (std::size_t g = 0; g < r.contrasts.size(); ++g) {
    const auto &c = r.contrasts[g];
    std::printf("group %zu: period %.3g lr px, contrast hr %.3f nearest %.3f lr [%.3f, %.3f]\n", g, c.period_lr,
                c.hr, c.nearest, c.lr_min, c.lr_max);
  }
  std::cout << "report -> " << r.report_path.string() << '\n';
  return 0;
}

int cmd_metrics(const config::PipelineConfig &cfg, const fs::path &image, const fs::path &reference,
                double peak, const std::vector<double> &offset, const fs::path &spectrum) {
  const Image img = io::read_image(image);
  if (!reference.empty())
    std::cout << "psnr_db: " << metrics::format_db(metrics::psnr(img, io::read_image(reference), peak)) << '\n';
  if (cfg.scene.source == config::SceneConfig::Source::bar_target && !cfg.scene.target.groups.empty()) {
    const auto &spec = cfg.scene.target;
    const target::Placement place{static_cast<double>(img.width()) / spec.side, offset[0], offset[1]};
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
      const double c = target::resolved_contrast(img, spec, g, place);
      std::printf("group %zu contrast: %.4f%s\n", g, c, c >= target::kResolvedContrast ? " (resolved)" : "");
    }
  }
  if (!spectrum.empty()) {
    io::write_pgm16(spectrum, metrics::log_spectrum(img), io::IntensityRange{0.0, 1.0});
    std::cout << "spectrum -> " << spectrum.string() << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Sampling imaging pipeline: single-pixel capture, defocus shifts, registration and super-resolution"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--seed", globals.seed, "Override the configured random seed");
  app.add_option("--out-dir", globals.out_dir, "Override the configured output directory");

  fs::path cfg_path;
  const auto add = [&](const char *name, const char *desc) {
    auto *sub = app.add_subcommand(name, desc);
    sub->add_option("--config", cfg_path, "YAML configuration")->check(CLI::ExistingFile);
    return sub;
  };

  auto *target_cmd = add("target", "Render the bar target scene");
  auto *simulate_cmd = add("simulate", "Simulate the low-res stack of the detector array");

  fs::path scene_path, meas_path;
  auto *spi_cmd = add("spi-reconstruct", "Simulate single-pixel measurements and reconstruct");
  auto *scene_opt = spi_cmd->add_option("--scene", scene_path, "Scene image (.ssif or .pgm)")->check(CLI::ExistingFile);
  spi_cmd->add_option("--measurements", meas_path, "Measurement CSV to reconstruct instead of simulating")
      ->check(CLI::ExistingFile)
      ->excludes(scene_opt);

  fs::path stack_dir, shifts_path;
  auto *register_cmd = add("register", "Estimate sub-pixel shifts of a stack");
  register_cmd->add_option("--stack", stack_dir, "Stack directory (default <out-dir>/stack)");

  auto *superres_cmd = add("superres", "Synthesize the high-res image from a stack and its shifts");
  superres_cmd->add_option("--stack", stack_dir, "Stack directory (default <out-dir>/stack)");
  superres_cmd->add_option("--shifts", shifts_path, "Shift CSV (default <out-dir>/shifts.csv)");

  auto *pipeline_cmd = add("pipeline", "Run every stage and write report.yaml");

  fs::path image_path, reference_path, spectrum_path;
  double peak = 1.0;
  std::vector<double> offset{0.0, 0.0};
  auto *metrics_cmd = add("metrics", "PSNR, bar contrast and spectrum of an image");
  metrics_cmd->add_option("--image", image_path, "Image to evaluate")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--reference", reference_path, "Reference image for PSNR")->check(CLI::ExistingFile);
  metrics_cmd->add_option("--peak", peak, "Peak value for PSNR")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--offset", offset, "Target offset in image pixels (the high-res grid follows the template frame)")
      ->expected(2);
  metrics_cmd->add_option("--spectrum", spectrum_path, "Write the log magnitude spectrum as PGM");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(cfg_path, globals);
    if (*target_cmd)
      return cmd_target(cfg);
    if (*simulate_cmd)
      return cmd_simulate(cfg);
    if (*spi_cmd)
      return cmd_spi(cfg, scene_path, meas_path);
    if (*register_cmd)
      return cmd_register(cfg, stack_dir);
    if (*superres_cmd)
      return cmd_superres(cfg, stack_dir, shifts_path);
    if (*pipeline_cmd)
      return cmd_pipeline(cfg);
    if (*metrics_cmd)
      return cmd_metrics(cfg, image_path, reference_path, peak, offset, spectrum_path);
  } catch (const pipeline::StageError &e) {
    std::cerr << "error in stage " << e.stage() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
