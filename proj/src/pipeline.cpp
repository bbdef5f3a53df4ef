#include "ssi/pipeline.hpp"

#include "ssi/io.hpp"
#include "ssi/metrics.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ssi::pipeline {

namespace {

constexpr std::uint64_t kSimulationStream = 1;

template <typename F>
auto stage(const char *name, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError(name, e.what());
  }
}

std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.ssif", k);
  return buf;
}

} // namespace

DirectoryLock::DirectoryLock(const fs::path &dir) : path_(dir / ".ssi.lock") {
  fs::create_directories(dir);
  std::FILE *f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw std::runtime_error("output directory '" + dir.string() +
                             "' is locked by another run (remove .ssi.lock if stale)");
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Scene make_scene(const config::PipelineConfig &cfg) {
  Scene scene;
  if (cfg.scene.source == config::SceneConfig::Source::file) {
    scene.image = io::read_image(cfg.scene.path);
  } else {
    scene.image = target::generate_bar_target(cfg.scene.target);
    scene.target = cfg.scene.target;
  }
  return scene;
}

int downsample_factor(const config::PipelineConfig &cfg, const Image &scene) {
  const int n = cfg.spi.options.basis_side;
  if (scene.width() != scene.height() || scene.width() % n != 0)
    throw std::invalid_argument("scene (" + std::to_string(scene.width()) + "x" +
                                std::to_string(scene.height()) + ") must be square with a side divisible by " +
                                std::to_string(n));
  return static_cast<int>(scene.width() / n);
}

spi::NoiseModel noise_model(const config::PipelineConfig &cfg, const Image &scene) {
  const auto &n = cfg.spi.noise;
  switch (n.model) {
  case config::NoiseConfig::Model::none:
    return spi::NoNoise{};
  case config::NoiseConfig::Model::poisson:
    return spi::PoissonNoise{n.scale};
  case config::NoiseConfig::Model::gaussian:
    if (n.sigma_read)
      return spi::AdditiveGaussian{*n.sigma_read};
    const auto lr = optics::downsample_box(scene, downsample_factor(cfg, scene));
    return spi::AdditiveGaussian{spi::read_noise_for_snr(lr, *n.snr_db, cfg.spi.options.scheme)};
  }
  return spi::NoNoise{};
}

optics::LowResStack simulate(const config::PipelineConfig &cfg, const Image &scene) {
  downsample_factor(cfg, scene);
  const RandomStream root(cfg.seed.value_or(0));
  return optics::simulate_lowres_stack(scene, cfg.geometry, cfg.array, cfg.spi.options,
                                       noise_model(cfg, scene), root.substream(kSimulationStream),
                                       cfg.registration.template_index);
}

std::vector<registration::ShiftEstimate> register_stack(const config::PipelineConfig &cfg,
                                                        const optics::LowResStack &stack) {
  return registration::estimate_stack_shifts(stack, cfg.registration.options);
}

superres::GridSpec grid_for(const config::PipelineConfig &cfg, const optics::LowResStack &stack) {
  stack.validate();
  superres::GridSpec grid;
  grid.n1 = static_cast<int>(stack.frames.front().width());
  grid.n2 = static_cast<int>(stack.frames.front().height());
  grid.l1 = cfg.superres.l1.value_or(cfg.array.cols);
  grid.l2 = cfg.superres.l2.value_or(cfg.array.rows);
  grid.validate();
  return grid;
}

Synthesis synthesize(const config::PipelineConfig &cfg, const optics::LowResStack &stack,
                     const std::vector<registration::ShiftEstimate> &estimates,
                     const std::optional<fs::path> &weights_csv) {
  stack.validate();
  if (estimates.size() != stack.frames.size())
    throw std::invalid_argument("synthesize: one shift estimate per frame is required");

  Synthesis out;
  out.grid = grid_for(cfg, stack);
  optics::LowResStack used;
  std::vector<ShiftVector> shifts;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (!estimates[k].converged)
      continue;
    if (static_cast<int>(k) == stack.template_index)
      used.template_index = static_cast<int>(used.frames.size());
    used.frames.push_back(stack.frames[k]);
    shifts.push_back({estimates[k].p.x(), estimates[k].p.y()});
    out.used_frames.push_back(static_cast<int>(k));
  }
  if (used.frames.empty())
    throw std::runtime_error("synthesize: no frame has a converged shift estimate");
  superres::check_factors_against_shifts(out.grid, shifts, cfg.superres.phase_tolerance);

  const auto system = superres::assemble_system(used, shifts, out.grid, cfg.superres.options);
  if (weights_csv) {
    std::ofstream os(*weights_csv);
    if (!os)
      throw std::runtime_error("cannot write '" + weights_csv->string() + "'");
    system.weights.write_csv(os);
  }
  out.nonzeros = system.weights.weights.nonZeros();
  out.truncation_radius = system.weights.truncation_radius;

  const Image nearest = superres::upsample_nearest(stack.frames[static_cast<std::size_t>(stack.template_index)],
                                                   out.grid.l1, out.grid.l2);
  const Eigen::VectorXd h0 = Eigen::Map<const Eigen::VectorXd>(nearest.pixels.data(), nearest.pixels.size());
  out.hr = superres::solve_high_res(system.observations, system.weights, out.grid, cfg.superres.options,
                                    cfg.superres.nearest_initial ? &h0 : nullptr);
  out.hr.image.pixel_pitch = stack.frames.front().pixel_pitch / out.grid.l1;

  const Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(out.hr.image.pixels.data(), out.hr.image.pixels.size());
  out.residual_norm = (system.weights.apply(h) - system.observations).norm();
  out.initial_residual_norm = (system.weights.apply(h0) - system.observations).norm();
  return out;
}

void write_stack(const fs::path &dir, const optics::LowResStack &stack, int factor) {
  stack.validate();
  fs::create_directories(dir);
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "frames" << YAML::Value << YAML::BeginSeq;
  for (std::size_t k = 0; k < stack.frames.size(); ++k) {
    io::write_ssif(dir / frame_name(k), stack.frames[k]);
    out << frame_name(k);
  }
  out << YAML::EndSeq;
  out << YAML::Key << "template_index" << YAML::Value << stack.template_index;
  out << YAML::Key << "downsample_factor" << YAML::Value << factor;
  out << YAML::Key << "pixel_pitch_um" << YAML::Value << io::format_double(stack.frames.front().pixel_pitch);
  if (stack.true_shifts) {
    out << YAML::Key << "true_shifts" << YAML::Value << YAML::BeginSeq;
    for (const auto &s : *stack.true_shifts)
      out << YAML::Flow << YAML::BeginSeq << io::format_double(s.dx) << io::format_double(s.dy) << YAML::EndSeq;
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  std::ofstream os(dir / "stack.yaml");
  os << out.c_str() << '\n';
  if (!os)
    throw std::runtime_error("cannot write stack manifest in '" + dir.string() + "'");
}

optics::LowResStack read_stack(const fs::path &dir) {
  YAML::Node root;
  try {
    root = YAML::LoadFile((dir / "stack.yaml").string());
  } catch (const YAML::Exception &e) {
    throw io::FormatError("stack manifest: " + std::string(e.what()));
  }
  optics::LowResStack stack;
  try {
    double pitch = root["pixel_pitch_um"] ? root["pixel_pitch_um"].as<double>() : 1.0;
    for (const auto &f : root["frames"]) {
      stack.frames.push_back(io::read_ssif(dir / f.as<std::string>()));
      stack.frames.back().pixel_pitch = pitch;
    }
    stack.template_index = root["template_index"].as<int>(0);
    if (const auto ts = root["true_shifts"]) {
      std::vector<ShiftVector> shifts;
      for (const auto &s : ts) {
        const auto v = s.as<std::vector<double>>();
        if (v.size() != 2)
          throw io::FormatError("stack manifest: true_shifts entries must be [dx, dy]");
        shifts.push_back({v[0], v[1]});
      }
      stack.true_shifts = std::move(shifts);
    }
  } catch (const YAML::Exception &e) {
    throw io::FormatError("stack manifest: " + std::string(e.what()));
  }
  stack.validate();
  return stack;
}

namespace {

void emit_report(const fs::path &path, const config::PipelineConfig &cfg, const RunReport &r) {
  const auto num = [](double v) { return io::format_double(v); };
  const auto opt_db = [](const std::optional<double> &v) {
    return v ? metrics::format_db(*v) : std::string("n/a");
  };
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << r.seed;
  out << YAML::Key << "config" << YAML::Value;
  config::emit_config(out, cfg, false);

  out << YAML::Key << "stack" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "frames" << YAML::Value << r.estimates.size();
  out << YAML::Key << "template_index" << YAML::Value << cfg.registration.template_index;
  out << YAML::Key << "downsample_factor" << YAML::Value << r.factor;
  out << YAML::Key << "period_units" << YAML::Value
      << "bar periods are scene pixels; one low-res pixel spans downsample_factor scene pixels";
  out << YAML::EndMap;

  out << YAML::Key << "shifts" << YAML::Value << YAML::BeginSeq;
  for (std::size_t k = 0; k < r.estimates.size(); ++k) {
    const auto &e = r.estimates[k];
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "frame" << YAML::Value << k;
    out << YAML::Key << "dx" << YAML::Value << num(e.p.x());
    out << YAML::Key << "dy" << YAML::Value << num(e.p.y());
    if (r.relative_true_shifts) {
      out << YAML::Key << "true_dx" << YAML::Value << num((*r.relative_true_shifts)[k].dx);
      out << YAML::Key << "true_dy" << YAML::Value << num((*r.relative_true_shifts)[k].dy);
    }
    out << YAML::Key << "iterations" << YAML::Value << e.iterations;
    out << YAML::Key << "converged" << YAML::Value << e.converged;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  if (r.relative_true_shifts)
    out << YAML::Key << "max_shift_error" << YAML::Value << num(r.max_shift_error);

  const auto &s = r.synthesis;
  out << YAML::Key << "superres" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "l1" << YAML::Value << s.grid.l1;
  out << YAML::Key << "l2" << YAML::Value << s.grid.l2;
  out << YAML::Key << "hr_width" << YAML::Value << s.grid.hr_width();
  out << YAML::Key << "hr_height" << YAML::Value << s.grid.hr_height();
  out << YAML::Key << "frames_used" << YAML::Value << s.used_frames.size();
  out << YAML::Key << "nonzeros" << YAML::Value << s.nonzeros;
  out << YAML::Key << "truncation_radius" << YAML::Value << num(s.truncation_radius);
  out << YAML::Key << "lambda" << YAML::Value << num(s.hr.lambda);
  out << YAML::Key << "cg_iterations" << YAML::Value << s.hr.iterations;
  out << YAML::Key << "relative_residual" << YAML::Value << num(s.hr.relative_residual);
  out << YAML::Key << "converged" << YAML::Value << s.hr.converged;
  out << YAML::Key << "residual_norm" << YAML::Value << num(s.residual_norm);
  out << YAML::Key << "nearest_residual_norm" << YAML::Value << num(s.initial_residual_norm);
  out << YAML::EndMap;

  out << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "psnr_hr" << YAML::Value << opt_db(r.psnr_hr);
  out << YAML::Key << "psnr_nearest" << YAML::Value << opt_db(r.psnr_nearest);
  out << YAML::Key << "resolved_threshold" << YAML::Value << num(target::kResolvedContrast);
  out << YAML::Key << "contrast" << YAML::Value << YAML::BeginSeq;
  for (std::size_t g = 0; g < r.contrasts.size(); ++g) {
    const auto &c = r.contrasts[g];
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "group" << YAML::Value << g;
    out << YAML::Key << "period_scene_px" << YAML::Value << num(c.period_scene);
    out << YAML::Key << "period_lr_px" << YAML::Value << num(c.period_lr);
    out << YAML::Key << "hr" << YAML::Value << num(c.hr);
    out << YAML::Key << "nearest" << YAML::Value << num(c.nearest);
    out << YAML::Key << "lr_template" << YAML::Value << num(c.lr_template);
    out << YAML::Key << "lr_min" << YAML::Value << num(c.lr_min);
    out << YAML::Key << "lr_max" << YAML::Value << num(c.lr_max);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "artifacts" << YAML::Value << YAML::BeginSeq;
  for (const auto &[file, digest] : r.artifacts)
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "file" << YAML::Value << file << YAML::Key
        << "fnv1a64" << YAML::Value << digest << YAML::EndMap;
  out << YAML::EndSeq;
  out << YAML::EndMap;

  std::ofstream os(path, std::ios::trunc);
  os << out.c_str() << '\n';
  if (!os)
    throw std::runtime_error("cannot write report '" + path.string() + "'");
}

} // namespace

RunReport run_pipeline(const config::PipelineConfig &cfg) {
  stage("config", [&] { cfg.validate(); });
  const fs::path dir = cfg.out_dir;
  DirectoryLock lock = stage("output", [&] { return DirectoryLock(dir); });

  RunReport report;
  report.seed = cfg.seed.value_or(0);
  std::vector<std::string> files;
  const auto record = [&](const std::string &name) { files.push_back(name); };

  const Scene scene = stage("scene", [&] {
    auto s = make_scene(cfg);
    io::write_ssif(dir / "scene.ssif", s.image);
    io::write_pgm16(dir / "scene.pgm", s.image);
    return s;
  });
  record("scene.ssif");
  record("scene.pgm");

  const auto stack = stage("simulate", [&] {
    report.factor = downsample_factor(cfg, scene.image);
    auto st = simulate(cfg, scene.image);
    write_stack(dir / "stack", st, report.factor);
    io::write_pgm16(dir / "template.pgm", st.frames[static_cast<std::size_t>(st.template_index)]);
    return st;
  });
  record("stack/stack.yaml");
  for (std::size_t k = 0; k < stack.frames.size(); ++k)
    record("stack/" + frame_name(k));
  record("template.pgm");

  const ShiftVector template_shift = (*stack.true_shifts)[static_cast<std::size_t>(stack.template_index)];
  report.estimates = stage("register", [&] {
    auto est = register_stack(cfg, stack);
    io::write_shifts_csv(dir / "shifts.csv", io::to_rows(est));
    return est;
  });
  record("shifts.csv");
  {
    std::vector<ShiftVector> rel;
    for (std::size_t k = 0; k < stack.frames.size(); ++k) {
      rel.push_back((*stack.true_shifts)[k] - template_shift);
      report.max_shift_error =
          std::max({report.max_shift_error, std::abs(report.estimates[k].p.x() - rel.back().dx),
                    std::abs(report.estimates[k].p.y() - rel.back().dy)});
    }
    report.relative_true_shifts = std::move(rel);
    std::vector<io::ShiftRow> rows;
    for (std::size_t k = 0; k < stack.frames.size(); ++k)
      rows.push_back({static_cast<int>(k), (*report.relative_true_shifts)[k].dx,
                      (*report.relative_true_shifts)[k].dy, 0, true});
    io::write_shifts_csv(dir / "true_shifts.csv", rows);
    record("true_shifts.csv");
  }

  report.synthesis = stage("superres", [&] {
    std::optional<fs::path> weights;
    if (cfg.superres.export_weights)
      weights = dir / "weights.csv";
    auto syn = synthesize(cfg, stack, report.estimates, weights);
    io::write_ssif(dir / "hr.ssif", syn.hr.image);
    io::write_pgm16(dir / "hr.pgm", syn.hr.image);
    return syn;
  });
  if (cfg.superres.export_weights)
    record("weights.csv");
  record("hr.ssif");
  record("hr.pgm");

  stage("metrics", [&] {
    const auto &grid = report.synthesis.grid;
    const Image &hr = report.synthesis.hr.image;
    const auto &templ = stack.frames[static_cast<std::size_t>(stack.template_index)];
    const Image nearest = superres::upsample_nearest(templ, grid.l1, grid.l2);
    io::write_ssif(dir / "nearest.ssif", nearest);
    io::write_pgm16(dir / "hr_spectrum.pgm", metrics::log_spectrum(hr), io::IntensityRange{0.0, 1.0});
    io::write_pgm16(dir / "nearest_spectrum.pgm", metrics::log_spectrum(nearest), io::IntensityRange{0.0, 1.0});

    // The high-res grid is registered to the template frame, so the reference is the
    // scene moved by the template's own shift.
    const int f = report.factor;
    if (grid.l1 == grid.l2 && f % grid.l1 == 0) {
      Image truth = optics::warp_subpixel(scene.image, template_shift * f);
      truth = optics::downsample_box(truth, f / grid.l1);
      const double peak = truth.pixels.maxCoeff() > 0.0 ? truth.pixels.maxCoeff() : 1.0;
      report.psnr_hr = metrics::psnr(hr, truth, peak);
      report.psnr_nearest = metrics::psnr(nearest, truth, peak);
      io::write_ssif(dir / "truth.ssif", truth);
    }
    if (scene.target) {
      const auto &spec = *scene.target;
      const target::Placement hr_place{static_cast<double>(grid.l1) / f, grid.l1 * template_shift.dx,
                                       grid.l2 * template_shift.dy};
      for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        GroupContrast c;
        c.period_scene = spec.groups[g].period;
        c.period_lr = spec.groups[g].period / f;
        if (grid.l1 == grid.l2) {
          c.hr = target::resolved_contrast(hr, spec, g, hr_place);
          c.nearest = target::resolved_contrast(nearest, spec, g, hr_place);
        }
        c.lr_min = 1.0;
        for (std::size_t k = 0; k < stack.frames.size(); ++k) {
          const auto &s = (*stack.true_shifts)[k];
          const double v = target::resolved_contrast(stack.frames[k], spec, g, {1.0 / f, s.dx, s.dy});
          c.lr_min = std::min(c.lr_min, v);
          c.lr_max = std::max(c.lr_max, v);
          if (static_cast<int>(k) == stack.template_index)
            c.lr_template = v;
        }
        report.contrasts.push_back(c);
      }
    }
  });
  record("nearest.ssif");
  record("hr_spectrum.pgm");
  record("nearest_spectrum.pgm");
  if (report.psnr_hr)
    record("truth.ssif");

  stage("report", [&] {
    for (const auto &name : files) {
      report.artifacts.emplace_back(name, io::file_digest(dir / name));
      const auto sidecar = io::range_sidecar(dir / name);
      if (fs::path(name).extension() == ".pgm" && fs::exists(sidecar))
        report.artifacts.emplace_back(name + ".range", io::file_digest(sidecar));
    }
    report.report_path = dir / "report.yaml";
    emit_report(report.report_path, cfg, report);
  });
  return report;
}

} // namespace ssi::pipeline
