#include "ssi/config.hpp"
#include "ssi/io.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace ssi::config {

namespace {

using Keys = std::set<std::string>;

void require_map(const YAML::Node &node, const std::string &where) {
  if (!node.IsMap())
    throw ConfigError(where + ": expected a mapping");
}

void check_keys(const YAML::Node &node, const std::string &where, const Keys &allowed) {
  require_map(node, where);
  for (const auto &kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::string path_of(const std::string &where, const std::string &key) {
  return where.empty() ? key : where + "." + key;
}

template <typename T>
void read(const YAML::Node &node, const std::string &where, const std::string &key, T &out) {
  const auto v = node[key];
  if (!v)
    return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError(path_of(where, key) + ": wrong type");
  }
}

template <typename T>
void read(const YAML::Node &node, const std::string &where, const std::string &key, std::optional<T> &out) {
  const auto v = node[key];
  if (!v || v.IsNull())
    return;
  T value{};
  read(node, where, key, value);
  out = value;
}

std::string scene_source_name(SceneConfig::Source s) {
  return s == SceneConfig::Source::bar_target ? "bar_target" : "file";
}

std::string noise_model_name(NoiseConfig::Model m) {
  switch (m) {
  case NoiseConfig::Model::none:
    return "none";
  case NoiseConfig::Model::gaussian:
    return "gaussian";
  case NoiseConfig::Model::poisson:
    return "poisson";
  }
  return "none";
}

void parse_scene(const YAML::Node &node, SceneConfig &scene, const std::filesystem::path &base_dir) {
  const std::string where = "scene";
  check_keys(node, where, {"source", "path", "side", "foreground", "background", "groups"});
  std::string source = scene_source_name(scene.source);
  read(node, where, "source", source);
  if (source == "bar_target")
    scene.source = SceneConfig::Source::bar_target;
  else if (source == "file")
    scene.source = SceneConfig::Source::file;
  else
    throw ConfigError("scene.source: expected bar_target or file");
  std::string path;
  read(node, where, "path", path);
  if (!path.empty())
    scene.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base_dir / path;
  read(node, where, "side", scene.target.side);
  read(node, where, "foreground", scene.target.foreground);
  read(node, where, "background", scene.target.background);
  if (const auto groups = node["groups"]) {
    if (!groups.IsSequence())
      throw ConfigError("scene.groups: expected a sequence");
    scene.target.groups.clear();
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::string gw = "scene.groups[" + std::to_string(i) + "]";
      const auto g = groups[i];
      check_keys(g, gw, {"period", "orientation", "bar_count", "rect"});
      target::BarGroup group;
      read(g, gw, "period", group.period);
      read(g, gw, "bar_count", group.bar_count);
      std::string orient = "vertical";
      read(g, gw, "orientation", orient);
      try {
        group.orientation = target::orientation_from_string(orient);
      } catch (const std::invalid_argument &e) {
        throw ConfigError(gw + ".orientation: " + e.what());
      }
      std::vector<double> rect;
      read(g, gw, "rect", rect);
      if (rect.size() != 4)
        throw ConfigError(gw + ".rect: expected [x, y, w, h]");
      group.rect = {rect[0], rect[1], rect[2], rect[3]};
      scene.target.groups.push_back(group);
    }
  }
}

void parse_geometry(const YAML::Node &node, optics::OpticalGeometry &g) {
  const std::string where = "geometry";
  check_keys(node, where, {"z1_mm", "z2_mm", "magnification", "na", "wavelength_um", "encoding_pixel_um",
                           "lr_pixel_pitch_um"});
  read(node, where, "z1_mm", g.z1);
  read(node, where, "z2_mm", g.z2);
  read(node, where, "magnification", g.magnification);
  read(node, where, "na", g.na);
  read(node, where, "wavelength_um", g.wavelength);
  read(node, where, "encoding_pixel_um", g.encoding_pixel);
  read(node, where, "lr_pixel_pitch_um", g.lr_pixel_pitch);
}

void parse_array(const YAML::Node &node, optics::DetectorArray &a) {
  const std::string where = "array";
  check_keys(node, where, {"rows", "cols", "pitch_mm", "binning"});
  read(node, where, "rows", a.rows);
  read(node, where, "cols", a.cols);
  read(node, where, "pitch_mm", a.pitch);
  read(node, where, "binning", a.binning);
}

void parse_spi(const YAML::Node &node, SpiConfig &s) {
  const std::string where = "spi";
  check_keys(node, where, {"basis_side", "scheme", "through_spi", "noise"});
  read(node, where, "basis_side", s.options.basis_side);
  read(node, where, "through_spi", s.options.through_spi);
  std::string scheme = spi::to_string(s.options.scheme);
  read(node, where, "scheme", scheme);
  try {
    s.options.scheme = spi::scheme_from_string(scheme);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("spi.scheme: ") + e.what());
  }
  if (const auto n = node["noise"]) {
    const std::string nw = "spi.noise";
    check_keys(n, nw, {"model", "sigma_read", "snr_db", "scale"});
    std::string model = noise_model_name(s.noise.model);
    read(n, nw, "model", model);
    if (model == "none")
      s.noise.model = NoiseConfig::Model::none;
    else if (model == "gaussian")
      s.noise.model = NoiseConfig::Model::gaussian;
    else if (model == "poisson")
      s.noise.model = NoiseConfig::Model::poisson;
    else
      throw ConfigError("spi.noise.model: expected none, gaussian or poisson");
    read(n, nw, "sigma_read", s.noise.sigma_read);
    read(n, nw, "snr_db", s.noise.snr_db);
    read(n, nw, "scale", s.noise.scale);
  }
}

void parse_registration(const YAML::Node &node, RegistrationConfig &r) {
  const std::string where = "registration";
  check_keys(node, where, {"epsilon", "max_iterations", "normalize", "border_margin", "presmooth_sigma",
                           "template_index"});
  read(node, where, "epsilon", r.options.epsilon);
  read(node, where, "max_iterations", r.options.max_iterations);
  read(node, where, "normalize", r.options.normalize);
  read(node, where, "border_margin", r.options.border_margin);
  read(node, where, "presmooth_sigma", r.options.presmooth_sigma);
  read(node, where, "template_index", r.template_index);
}

void parse_superres(const YAML::Node &node, SuperresConfig &s) {
  const std::string where = "superres";
  check_keys(node, where, {"l1", "l2", "sigma", "truncation_radius", "lambda_reg", "cg_tolerance",
                           "cg_max_iterations", "phase_tolerance", "export_weights", "initial"});
  read(node, where, "l1", s.l1);
  read(node, where, "l2", s.l2);
  read(node, where, "sigma", s.options.sigma);
  read(node, where, "truncation_radius", s.options.truncation_radius);
  read(node, where, "lambda_reg", s.options.lambda_reg);
  read(node, where, "cg_tolerance", s.options.cg_tolerance);
  read(node, where, "cg_max_iterations", s.options.cg_max_iterations);
  read(node, where, "phase_tolerance", s.phase_tolerance);
  read(node, where, "export_weights", s.export_weights);
  std::string initial = s.nearest_initial ? "nearest" : "zero";
  read(node, where, "initial", initial);
  if (initial != "nearest" && initial != "zero")
    throw ConfigError("superres.initial: expected nearest or zero");
  s.nearest_initial = initial == "nearest";
}

template <typename F>
void wrap(const char *section, F &&f) {
  try {
    f();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

} // namespace

void PipelineConfig::validate() const {
  if (scene.source == SceneConfig::Source::bar_target)
    wrap("scene", [&] { scene.target.validate(); });
  else if (scene.path.empty())
    throw ConfigError("scene.path: required when scene.source is file");
  wrap("geometry", [&] { geometry.validate(); });
  wrap("array", [&] { array.validate(); });
  if (!spi::is_power_of_two(spi.options.basis_side))
    throw ConfigError("spi.basis_side: must be a positive power of two");
  switch (spi.noise.model) {
  case NoiseConfig::Model::none:
    break;
  case NoiseConfig::Model::gaussian:
    if (spi.noise.sigma_read.has_value() == spi.noise.snr_db.has_value())
      throw ConfigError("spi.noise: gaussian needs exactly one of sigma_read, snr_db");
    if (spi.noise.sigma_read && !(*spi.noise.sigma_read >= 0.0))
      throw ConfigError("spi.noise.sigma_read: must be >= 0");
    break;
  case NoiseConfig::Model::poisson:
    if (!(spi.noise.scale > 0.0))
      throw ConfigError("spi.noise.scale: must be > 0");
    break;
  }
  if (spi.noise.model != NoiseConfig::Model::none && !seed)
    throw ConfigError("seed: required when spi.noise.model is not none");
  if (spi.noise.model != NoiseConfig::Model::none && !spi.options.through_spi)
    throw ConfigError("spi.noise: measurement noise requires spi.through_spi");
  wrap("registration", [&] { registration.options.validate(); });
  if (registration.template_index < 0 || registration.template_index >= array.count())
    throw ConfigError("registration.template_index: out of range for the detector array");
  wrap("superres", [&] { superres.options.validate(); });
  if ((superres.l1 && *superres.l1 < 1) || (superres.l2 && *superres.l2 < 1))
    throw ConfigError("superres.l1/l2: must be >= 1");
  if (!(superres.phase_tolerance > 0.0))
    throw ConfigError("superres.phase_tolerance: must be > 0");
}

PipelineConfig parse_config(const std::string &text, const std::filesystem::path &base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  if (root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  check_keys(root, "config",
             {"seed", "scene", "geometry", "array", "spi", "registration", "superres", "output"});
  read(root, "", "seed", cfg.seed);
  if (const auto n = root["scene"])
    parse_scene(n, cfg.scene, base_dir);
  if (const auto n = root["geometry"])
    parse_geometry(n, cfg.geometry);
  if (const auto n = root["array"])
    parse_array(n, cfg.array);
  if (const auto n = root["spi"])
    parse_spi(n, cfg.spi);
  if (const auto n = root["registration"])
    parse_registration(n, cfg.registration);
  if (const auto n = root["superres"])
    parse_superres(n, cfg.superres);
  if (const auto n = root["output"]) {
    check_keys(n, "output", {"dir"});
    std::string dir;
    read(n, "output", "dir", dir);
    if (!dir.empty())
      cfg.out_dir = std::filesystem::path(dir).is_absolute() ? std::filesystem::path(dir) : base_dir / dir;
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is)
    throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void emit_config(YAML::Emitter &out, const PipelineConfig &cfg, bool include_output) {
  const auto num = [](double v) { return io::format_double(v); };
  const auto emit_opt = [&](const char *key, const auto &v) {
    out << YAML::Key << key << YAML::Value;
    if (!v)
      out << YAML::Null;
    else if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, double>)
      out << num(*v);
    else
      out << *v;
  };

  out << YAML::BeginMap;
  emit_opt("seed", cfg.seed);

  out << YAML::Key << "scene" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "source" << YAML::Value << scene_source_name(cfg.scene.source);
  out << YAML::Key << "path" << YAML::Value << cfg.scene.path.generic_string();
  const auto &t = cfg.scene.target;
  out << YAML::Key << "side" << YAML::Value << t.side;
  out << YAML::Key << "foreground" << YAML::Value << num(t.foreground);
  out << YAML::Key << "background" << YAML::Value << num(t.background);
  out << YAML::Key << "groups" << YAML::Value << YAML::BeginSeq;
  for (const auto &g : t.groups) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "period" << YAML::Value << num(g.period);
    out << YAML::Key << "orientation" << YAML::Value << target::to_string(g.orientation);
    out << YAML::Key << "bar_count" << YAML::Value << g.bar_count;
    out << YAML::Key << "rect" << YAML::Value << YAML::Flow << YAML::BeginSeq << num(g.rect.x)
        << num(g.rect.y) << num(g.rect.w) << num(g.rect.h) << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  const auto &g = cfg.geometry;
  out << YAML::Key << "geometry" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "z1_mm" << YAML::Value << num(g.z1);
  out << YAML::Key << "z2_mm" << YAML::Value << num(g.z2);
  out << YAML::Key << "magnification" << YAML::Value << num(g.magnification);
  out << YAML::Key << "na" << YAML::Value << num(g.na);
  out << YAML::Key << "wavelength_um" << YAML::Value << num(g.wavelength);
  out << YAML::Key << "encoding_pixel_um" << YAML::Value << num(g.encoding_pixel);
  out << YAML::Key << "lr_pixel_pitch_um" << YAML::Value << num(g.lr_pixel_pitch);
  out << YAML::EndMap;

  const auto &a = cfg.array;
  out << YAML::Key << "array" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rows" << YAML::Value << a.rows;
  out << YAML::Key << "cols" << YAML::Value << a.cols;
  out << YAML::Key << "pitch_mm" << YAML::Value << num(a.pitch);
  out << YAML::Key << "binning" << YAML::Value << a.binning;
  out << YAML::EndMap;

  const auto &s = cfg.spi;
  out << YAML::Key << "spi" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "basis_side" << YAML::Value << s.options.basis_side;
  out << YAML::Key << "scheme" << YAML::Value << spi::to_string(s.options.scheme);
  out << YAML::Key << "through_spi" << YAML::Value << s.options.through_spi;
  out << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value << noise_model_name(s.noise.model);
  emit_opt("sigma_read", s.noise.sigma_read);
  emit_opt("snr_db", s.noise.snr_db);
  out << YAML::Key << "scale" << YAML::Value << num(s.noise.scale);
  out << YAML::EndMap << YAML::EndMap;

  const auto &r = cfg.registration;
  out << YAML::Key << "registration" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epsilon" << YAML::Value << num(r.options.epsilon);
  out << YAML::Key << "max_iterations" << YAML::Value << r.options.max_iterations;
  out << YAML::Key << "normalize" << YAML::Value << r.options.normalize;
  out << YAML::Key << "border_margin" << YAML::Value << r.options.border_margin;
  out << YAML::Key << "presmooth_sigma" << YAML::Value << r.options.presmooth_sigma;
  out << YAML::Key << "template_index" << YAML::Value << r.template_index;
  out << YAML::EndMap;

  const auto &sr = cfg.superres;
  out << YAML::Key << "superres" << YAML::Value << YAML::BeginMap;
  emit_opt("l1", sr.l1);
  emit_opt("l2", sr.l2);
  out << YAML::Key << "sigma" << YAML::Value << num(sr.options.sigma);
  emit_opt("truncation_radius", sr.options.truncation_radius);
  emit_opt("lambda_reg", sr.options.lambda_reg);
  out << YAML::Key << "cg_tolerance" << YAML::Value << num(sr.options.cg_tolerance);
  out << YAML::Key << "cg_max_iterations" << YAML::Value << sr.options.cg_max_iterations;
  out << YAML::Key << "phase_tolerance" << YAML::Value << num(sr.phase_tolerance);
  out << YAML::Key << "export_weights" << YAML::Value << sr.export_weights;
  out << YAML::Key << "initial" << YAML::Value << (sr.nearest_initial ? "nearest" : "zero");
  out << YAML::EndMap;

  if (include_output) {
    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "dir" << YAML::Value << cfg.out_dir.generic_string();
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
}

std::string to_yaml(const PipelineConfig &cfg) {
  YAML::Emitter out;
  emit_config(out, cfg);
  return std::string(out.c_str()) + "\n";
}

} // namespace ssi::config
