#include "tdgp/config.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tdgp/errors.hpp"

namespace tdgp {

namespace {

enum class Kind { number, integer, boolean, choice };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* default_value;
  const char* choices;  // '|'-separated, for Kind::choice
};

// registry order is the echo order
constexpr std::array<KeySpec, 46> kKeys = {{
    {"seed", Kind::integer, "0", nullptr},
    // model
    {"layers", Kind::integer, "1", nullptr},
    {"hidden_width", Kind::integer, "10", nullptr},
    {"inducing", Kind::integer, "64", nullptr},
    {"ard", Kind::boolean, "true", nullptr},
    {"jitter", Kind::number, "1e-6", nullptr},
    {"mean_fn", Kind::choice, "identity", "identity|zero"},
    // training
    {"epochs", Kind::integer, "20", nullptr},
    {"lr0", Kind::number, "0.01", nullptr},
    {"s_train", Kind::integer, "1", nullptr},
    {"s_pred", Kind::integer, "20", nullptr},
    {"adam_beta1", Kind::number, "0.9", nullptr},
    {"adam_beta2", Kind::number, "0.999", nullptr},
    {"adam_eps", Kind::number, "1e-8", nullptr},
    {"ell_rescale", Kind::boolean, "false", nullptr},
    // preprocessing
    {"smooth_sigma_mm", Kind::number, "1.0", nullptr},
    {"mask_low", Kind::number, "0.0", nullptr},
    {"mask_high", Kind::number, "300.0", nullptr},
    {"downsample", Kind::boolean, "false", nullptr},
    // postprocessing
    {"pp_mu", Kind::number, "0.0", nullptr},
    {"pp_sigma", Kind::number, "0.75", nullptr},
    {"pp_radius", Kind::integer, "3", nullptr},
    {"pp_center_max", Kind::boolean, "true", nullptr},
    {"pp_threshold", Kind::number, "0.55", nullptr},
    {"smooth_binary", Kind::boolean, "false", nullptr},
    // metrics
    {"r2_identity", Kind::boolean, "false", nullptr},
    // synthetic cohorts
    {"synth_patients", Kind::integer, "8", nullptr},
    {"synth_nx", Kind::integer, "32", nullptr},
    {"synth_ny", Kind::integer, "32", nullptr},
    {"synth_nz", Kind::integer, "2", nullptr},
    {"synth_t_min", Kind::integer, "20", nullptr},
    {"synth_t_max", Kind::integer, "24", nullptr},
    {"synth_lesion_fraction", Kind::number, "0.10", nullptr},
    {"synth_rho", Kind::number, "0.55", nullptr},
    {"synth_delay", Kind::number, "3.0", nullptr},
    {"synth_gamma", Kind::number, "1.6", nullptr},
    {"synth_amplitude", Kind::number, "100.0", nullptr},
    {"synth_onset", Kind::number, "4.0", nullptr},
    {"synth_shape", Kind::number, "3.0", nullptr},
    {"synth_scale", Kind::number, "1.5", nullptr},
    {"synth_baseline", Kind::number, "40.0", nullptr},
    {"synth_noise_std", Kind::number, "2.0", nullptr},
    {"synth_skull", Kind::number, "1000.0", nullptr},
    {"synth_param_jitter", Kind::number, "0.05", nullptr},
    {"synth_spacing_xy", Kind::number, "1.0", nullptr},
    {"synth_spacing_z", Kind::number, "5.0", nullptr},
}};

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void validate_value(const KeySpec& spec, const std::string& value) {
  switch (spec.kind) {
    case Kind::number: {
      char* end = nullptr;
      std::strtod(value.c_str(), &end);
      if (end == value.c_str() || *end != '\0')
        throw config_error("key '" + std::string(spec.key) + "': '" + value +
                           "' is not a number");
      break;
    }
    case Kind::integer: {
      char* end = nullptr;
      std::strtoll(value.c_str(), &end, 10);
      if (end == value.c_str() || *end != '\0')
        throw config_error("key '" + std::string(spec.key) + "': '" + value +
                           "' is not an integer");
      break;
    }
    case Kind::boolean:
      if (value != "true" && value != "false" && value != "0" && value != "1")
        throw config_error("key '" + std::string(spec.key) + "': '" + value +
                           "' is not a boolean");
      break;
    case Kind::choice: {
      std::string choices = spec.choices;
      std::stringstream ss(choices);
      std::string c;
      while (std::getline(ss, c, '|'))
        if (value == c) return;
      throw config_error("key '" + std::string(spec.key) + "': '" + value +
                         "' is not one of " + choices);
    }
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  for (const auto& k : kKeys) cfg.values_[k.key] = k.default_value;
  return cfg;
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg = defaults();
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw config_error("unknown key '" + key + "'");
  validate_value(*spec, value);
  values_[key] = value;
}

double RunConfig::number(const std::string& key) const { return std::stod(raw(key)); }

long RunConfig::integer(const std::string& key) const { return std::stol(raw(key)); }

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = raw(key);
  return v == "true" || v == "1";
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown key '" + key + "'");
  return it->second;
}

void RunConfig::override_seed(std::uint64_t seed) {
  values_["seed"] = std::to_string(seed);
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& k : kKeys) os << k.key << " = " << values_.at(k.key) << "\n";
  return os.str();
}

DgpArchitecture RunConfig::architecture(int input_dim) const {
  DgpArchitecture arch;
  arch.input_dim = input_dim;
  long h = integer("layers");
  if (h < 1) throw config_error("layers must be >= 1");
  arch.layer_widths.assign(static_cast<std::size_t>(h - 1),
                           static_cast<int>(integer("hidden_width")));
  arch.layer_widths.push_back(1);
  arch.inducing_count = static_cast<int>(integer("inducing"));
  arch.ard = flag("ard");
  arch.jitter = number("jitter");
  arch.hidden_mean = raw("mean_fn") == "zero" ? MeanFunction::zero : MeanFunction::identity;
  return arch;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = static_cast<int>(integer("epochs"));
  t.initial_lr = number("lr0");
  t.mc_train = static_cast<int>(integer("s_train"));
  t.mc_pred = static_cast<int>(integer("s_pred"));
  t.seed = seed();
  t.adam_beta1 = number("adam_beta1");
  t.adam_beta2 = number("adam_beta2");
  t.adam_eps = number("adam_eps");
  t.ell_rescale = flag("ell_rescale");
  return t;
}

PreprocessConfig RunConfig::preprocess_config() const {
  PreprocessConfig p;
  p.smooth_sigma_mm = number("smooth_sigma_mm");
  p.mask_low = number("mask_low");
  p.mask_high = number("mask_high");
  p.downsample = flag("downsample");
  return p;
}

LognormalKernel2D RunConfig::postprocess_kernel() const {
  return LognormalKernel2D::build(number("pp_mu"), number("pp_sigma"),
                                  static_cast<int>(integer("pp_radius")),
                                  flag("pp_center_max"));
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.patients = static_cast<int>(integer("synth_patients"));
  s.nx = static_cast<int>(integer("synth_nx"));
  s.ny = static_cast<int>(integer("synth_ny"));
  s.nz = static_cast<int>(integer("synth_nz"));
  s.t_min = static_cast<int>(integer("synth_t_min"));
  s.t_max = static_cast<int>(integer("synth_t_max"));
  s.lesion_fraction = number("synth_lesion_fraction");
  s.lesion_rho = number("synth_rho");
  s.lesion_delay = number("synth_delay");
  s.lesion_gamma = number("synth_gamma");
  s.curve.amplitude = number("synth_amplitude");
  s.curve.onset = number("synth_onset");
  s.curve.shape = number("synth_shape");
  s.curve.scale = number("synth_scale");
  s.curve.baseline = number("synth_baseline");
  s.curve.noise_std = number("synth_noise_std");
  s.skull_intensity = number("synth_skull");
  s.param_jitter = number("synth_param_jitter");
  s.spacing.dx = number("synth_spacing_xy");
  s.spacing.dy = number("synth_spacing_xy");
  s.spacing.dz = number("synth_spacing_z");
  s.seed = seed();
  return s;
}

}  // namespace tdgp
