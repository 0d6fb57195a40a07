#include "dryfuse/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dryfuse/hash.hpp"

namespace dryfuse {

ExperimentDesign DesignGrid::expand() const {
  ExperimentDesign d;
  d.min_time = min_time;
  d.max_time = max_time;
  d.time_resolution = time_resolution;
  for (double t : temperatures) {
    for (double v : velocities) {
      for (double mc : target_mcs) d.cells.push_back({t, v, mc, run_slices});
    }
  }
  return d;
}

SimulatorConfig RunConfig::simulator() const {
  return {kinetics, variability, stock, render, design.expand()};
}

void RunConfig::check() const {
  if (version != kConfigVersion) {
    throw ConfigError("config version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  try {
    kinetics.check();
    variability.check();
    render.check();
    fusion.check();
    training.check();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (design.temperatures.empty() || design.velocities.empty() || design.target_mcs.empty() ||
      design.run_slices.empty()) {
    throw ConfigError("simulator.design: every level list must be non-empty");
  }
  for (int s : design.run_slices) {
    if (s < 1) throw ConfigError("simulator.design.run_slices entries must be >= 1");
  }
  if (!(design.min_time > 0.0) || !(design.max_time > design.min_time) || !(design.time_resolution >= 0.0)) {
    throw ConfigError("simulator.design: need 0 < min_time < max_time and time_resolution >= 0");
  }
  if (baselines.nn_hidden < 1) throw ConfigError("baselines.nn_hidden must be >= 1");
  if (sweep.epochs < 1) throw ConfigError("sweep.epochs must be >= 1");
  if (sweep.ratios.empty()) throw ConfigError("sweep.ratios must be non-empty");
}

Ratio parse_ratio(const std::string& text) {
  const auto colon = text.find(':');
  Ratio r{};
  auto parse = [&](std::string_view s, int& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && out >= 1;
  };
  const std::string_view sv(text);
  if (colon == std::string::npos || !parse(sv.substr(0, colon), r.tabular) ||
      !parse(sv.substr(colon + 1), r.image)) {
    throw ConfigError("invalid ratio '" + text + "' (expected positive integers like 8:1)");
  }
  return r;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const Json* v = find(key);
    if (v == nullptr) return;
    read(*v, join(path_, key), out);
  }

  // Calls fn(Reader&) on a nested object when present.
  template <class Fn>
  void section(const std::string& key, Fn fn) {
    const Json* v = find(key);
    if (v == nullptr) return;
    Reader r(*v, join(path_, key));
    fn(r);
    r.finish();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + join(path_, key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config document" : "'" + path_ + "'"; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  static void read(const Json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ConfigError("'" + p + "' must be a number");
    out = v.get<double>();
  }
  static void read(const Json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError("'" + p + "' must be an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, const std::string& p, std::uint64_t& out) {
    if (!v.is_number_unsigned()) throw ConfigError("'" + p + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void read(const Json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError("'" + p + "' must be true or false");
    out = v.get<bool>();
  }
  static void read(const Json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError("'" + p + "' must be a string");
    out = v.get<std::string>();
  }
  static void read(const Json& v, const std::string& p, Rgb& out) {
    if (!v.is_array() || v.size() != 3) throw ConfigError("'" + p + "' must be an [r, g, b] array");
    std::uint8_t c[3];
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number_integer() || v[i].get<int>() < 0 || v[i].get<int>() > 255) {
        throw ConfigError("'" + p + "' entries must be integers in [0, 255]");
      }
      c[i] = static_cast<std::uint8_t>(v[i].get<int>());
    }
    out = Rgb{c[0], c[1], c[2]};
  }
  static void read(const Json& v, const std::string& p, Ratio& out) {
    if (!v.is_string()) throw ConfigError("'" + p + "' must be a ratio string like \"8:1\"");
    out = parse_ratio(v.get<std::string>());
  }
  template <class T>
  static void read(const Json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError("'" + p + "' must be an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      read(v[i], p + "[" + std::to_string(i) + "]", item);
      out.push_back(item);
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json rgb_json(const Rgb& c) { return Json::array({c[0], c[1], c[2]}); }

}  // namespace

RunConfig apply_config(RunConfig c, const Json& document) {
  Reader root(document, "");
  root.get("version", c.version);
  root.get("seed", c.seed);
  root.get("deterministic", c.deterministic);
  root.get("jobs", c.jobs);
  root.section("simulator", [&](Reader& sim) {
    sim.section("kinetics", [&](Reader& r) {
      r.get("pre_exponential", c.kinetics.pre_exponential);
      r.get("activation_temperature", c.kinetics.activation_temperature);
      r.get("velocity_exponent", c.kinetics.velocity_exponent);
      r.get("page_exponent", c.kinetics.page_exponent);
      r.get("thickness_exponent", c.kinetics.thickness_exponent);
      r.get("equilibrium_mc", c.kinetics.equilibrium_mc);
      r.get("reference_thickness", c.kinetics.reference_thickness);
      r.get("rate_noise_sd", c.kinetics.rate_noise_sd);
    });
    sim.section("variability", [&](Reader& r) {
      r.get("thickness_cv", c.variability.thickness_cv);
      r.get("weight_cv", c.variability.weight_cv);
      r.get("diameter_cv", c.variability.diameter_cv);
      r.get("initial_mc_sd", c.variability.initial_mc_sd);
      r.get("pixel_noise_sd", c.variability.pixel_noise_sd);
      r.get("browning_noise_sd", c.variability.browning_noise_sd);
    });
    sim.section("stock", [&](Reader& r) {
      r.get("thickness", c.stock.thickness);
      r.get("diameter", c.stock.diameter);
      r.get("core_diameter", c.stock.core_diameter);
      r.get("initial_mc", c.stock.initial_mc);
      r.get("tissue_density", c.stock.tissue_density);
    });
    sim.section("render", [&](Reader& r) {
      auto& s = c.render;
      r.get("canvas_width", s.canvas_width);
      r.get("canvas_height", s.canvas_height);
      r.get("background", s.background);
      r.get("base_slice_color", s.base_slice_color);
      r.get("browning_color", s.browning_color);
      r.get("core_hole_fraction", s.core_hole_fraction);
      r.get("shrinkage_exponent", s.shrinkage_exponent);
      r.get("pixels_per_mm", s.pixels_per_mm);
      r.get("boundary_perturbation", s.boundary_perturbation);
      r.get("center_jitter", s.center_jitter);
      r.get("browning_temperature_gain", s.browning_temperature_gain);
      r.get("browning_time_gain", s.browning_time_gain);
      r.get("browning_moisture_gain", s.browning_moisture_gain);
      r.get("browning_moisture_offset", s.browning_moisture_offset);
      r.get("capture_cct", s.capture_cct);
      r.get("target_cct", s.target_cct);
    });
    sim.section("design", [&](Reader& r) {
      r.get("temperatures", c.design.temperatures);
      r.get("velocities", c.design.velocities);
      r.get("target_mcs", c.design.target_mcs);
      r.get("run_slices", c.design.run_slices);
      r.get("min_time", c.design.min_time);
      r.get("max_time", c.design.max_time);
      r.get("time_resolution", c.design.time_resolution);
    });
  });
  root.section("calibration", [&](Reader& r) {
    r.get("source_cct", c.preprocess.calibration.source_cct);
    r.get("target_cct", c.preprocess.calibration.target_cct);
  });
  root.section("segmenter", [&](Reader& r) {
    auto& s = c.preprocess.segmenter;
    r.get("threshold", s.threshold);
    r.get("closing_radius", s.closing_radius);
    r.get("min_area", s.min_area);
    r.get("max_speckle_area", s.max_speckle_area);
    r.get("fill_core_hole", s.fill_core_hole);
  });
  root.section("fusion", [&](Reader& r) {
    r.get("tabular_hidden", c.fusion.tabular_hidden);
    r.get("embedding_dim", c.fusion.embedding_dim);
    r.get("fused_dim", c.fusion.fused_dim);
    r.get("head_hidden", c.fusion.head_hidden);
    r.get("ratio", c.fusion.ratio);
    std::string preset = to_string(c.fusion.encoder_preset);
    r.get("encoder_preset", preset);
    try {
      c.fusion.encoder_preset = parse_encoder_preset(preset);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("fusion.encoder_preset: ") + e.what());
    }
  });
  root.section("training", [&](Reader& r) {
    r.get("batch_size", c.training.batch_size);
    r.get("learning_rate", c.training.learning_rate);
    r.get("epochs", c.training.epochs);
    r.get("optimizer", c.training.optimizer);
    r.get("beta1", c.training.beta1);
    r.get("beta2", c.training.beta2);
    r.get("epsilon", c.training.epsilon);
    r.get("metric", c.training.metric);
  });
  root.section("baselines", [&](Reader& r) {
    std::string mode = to_string(c.baselines.rgb_mode);
    r.get("rgb_mode", mode);
    try {
      c.baselines.rgb_mode = parse_rgb_mode(mode);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("baselines.rgb_mode: ") + e.what());
    }
    r.get("nn_hidden", c.baselines.nn_hidden);
    r.section("gp", [&](Reader& g) {
      g.get("signal_variance", c.baselines.gp.signal_variance);
      g.get("length_scale", c.baselines.gp.length_scale);
      g.get("noise_variance", c.baselines.gp.noise_variance);
      g.get("noise_floor", c.baselines.gp.noise_floor);
      g.get("optimize", c.baselines.gp.optimize);
    });
  });
  root.section("sweep", [&](Reader& r) {
    r.get("ratios", c.sweep.ratios);
    r.get("epochs", c.sweep.epochs);
  });
  root.finish();
  c.check();
  return c;
}

RunConfig default_config() {
  static const RunConfig cached = [] {
    try {
      return apply_config(RunConfig{}, Json::parse(default_config_text()));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("built-in default config is invalid: ") + e.what());
    }
  }();
  return cached;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return apply_config(default_config(), doc);
}

Json to_json(const RunConfig& c) {
  Json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["jobs"] = c.jobs;
  const auto& k = c.kinetics;
  j["simulator"]["kinetics"] = {{"pre_exponential", k.pre_exponential},
                                {"activation_temperature", k.activation_temperature},
                                {"velocity_exponent", k.velocity_exponent},
                                {"page_exponent", k.page_exponent},
                                {"thickness_exponent", k.thickness_exponent},
                                {"equilibrium_mc", k.equilibrium_mc},
                                {"reference_thickness", k.reference_thickness},
                                {"rate_noise_sd", k.rate_noise_sd}};
  const auto& v = c.variability;
  j["simulator"]["variability"] = {{"thickness_cv", v.thickness_cv},
                                   {"weight_cv", v.weight_cv},
                                   {"diameter_cv", v.diameter_cv},
                                   {"initial_mc_sd", v.initial_mc_sd},
                                   {"pixel_noise_sd", v.pixel_noise_sd},
                                   {"browning_noise_sd", v.browning_noise_sd}};
  const auto& st = c.stock;
  j["simulator"]["stock"] = {{"thickness", st.thickness},
                             {"diameter", st.diameter},
                             {"core_diameter", st.core_diameter},
                             {"initial_mc", st.initial_mc},
                             {"tissue_density", st.tissue_density}};
  const auto& r = c.render;
  j["simulator"]["render"] = {{"canvas_width", r.canvas_width},
                              {"canvas_height", r.canvas_height},
                              {"background", rgb_json(r.background)},
                              {"base_slice_color", rgb_json(r.base_slice_color)},
                              {"browning_color", rgb_json(r.browning_color)},
                              {"core_hole_fraction", r.core_hole_fraction},
                              {"shrinkage_exponent", r.shrinkage_exponent},
                              {"pixels_per_mm", r.pixels_per_mm},
                              {"boundary_perturbation", r.boundary_perturbation},
                              {"center_jitter", r.center_jitter},
                              {"browning_temperature_gain", r.browning_temperature_gain},
                              {"browning_time_gain", r.browning_time_gain},
                              {"browning_moisture_gain", r.browning_moisture_gain},
                              {"browning_moisture_offset", r.browning_moisture_offset},
                              {"capture_cct", r.capture_cct},
                              {"target_cct", r.target_cct}};
  const auto& d = c.design;
  j["simulator"]["design"] = {{"temperatures", d.temperatures}, {"velocities", d.velocities},
                              {"target_mcs", d.target_mcs},     {"run_slices", d.run_slices},
                              {"min_time", d.min_time},         {"max_time", d.max_time},
                              {"time_resolution", d.time_resolution}};
  j["calibration"] = {{"source_cct", c.preprocess.calibration.source_cct},
                      {"target_cct", c.preprocess.calibration.target_cct}};
  const auto& s = c.preprocess.segmenter;
  j["segmenter"] = {{"threshold", s.threshold},
                    {"closing_radius", s.closing_radius},
                    {"min_area", s.min_area},
                    {"max_speckle_area", s.max_speckle_area},
                    {"fill_core_hole", s.fill_core_hole}};
  const auto& f = c.fusion;
  j["fusion"] = {{"tabular_hidden", f.tabular_hidden}, {"embedding_dim", f.embedding_dim},
                 {"fused_dim", f.fused_dim},           {"head_hidden", f.head_hidden},
                 {"ratio", f.ratio.label()},           {"encoder_preset", to_string(f.encoder_preset)}};
  const auto& t = c.training;
  j["training"] = {{"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
                   {"epochs", t.epochs},         {"optimizer", t.optimizer},
                   {"beta1", t.beta1},           {"beta2", t.beta2},
                   {"epsilon", t.epsilon},       {"metric", t.metric}};
  const auto& g = c.baselines.gp;
  j["baselines"] = {{"rgb_mode", to_string(c.baselines.rgb_mode)},
                    {"nn_hidden", c.baselines.nn_hidden},
                    {"gp",
                     {{"signal_variance", g.signal_variance},
                      {"length_scale", g.length_scale},
                      {"noise_variance", g.noise_variance},
                      {"noise_floor", g.noise_floor},
                      {"optimize", g.optimize}}}};
  Json ratios = Json::array();
  for (const auto& ratio : c.sweep.ratios) ratios.push_back(ratio.label());
  j["sweep"] = {{"ratios", ratios}, {"epochs", c.sweep.epochs}};
  return j;
}

std::string config_hash(const RunConfig& config) { return sha256_hex(to_json(config).dump()); }

RunConfig apply_override(const RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json patch = Json::object();
  Json* node = &patch;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
  return apply_config(config, patch);
}

}  // namespace dryfuse
