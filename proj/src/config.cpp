#include "sce/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <variant>

namespace sce {

namespace {

using C = ExperimentConfig;
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed shares the unsigned field kind");
using Field = std::variant<double C::*, std::size_t C::*, bool C::*, Optimizer C::*>;

struct Entry {
  const char* key;
  Field field;
};

const std::vector<Entry>& table() {
  static const std::vector<Entry> t = {
      {"seed", &C::seed},
      {"eta", &C::eta},
      {"kc", &C::kc},
      {"r-aa", &C::r_aa},
      {"r-ai", &C::r_ai},
      {"r-ii", &C::r_ii},
      {"tau", &C::tau},
      {"cosine", &C::cosine},
      {"rho-verbatim", &C::rho_verbatim},
      {"drop-rate", &C::drop_rate},
      {"proj-dim", &C::proj_dim},
      {"proj-lr", &C::proj_lr},
      {"proj-steps", &C::proj_steps},
      {"proj-optimizer", &C::proj_optimizer},
      {"heatmaps", &C::heatmaps},
      {"softargmax-temperature", &C::softargmax_temperature},
      {"reg-lr", &C::reg_lr},
      {"reg-steps", &C::reg_steps},
      {"reg-optimizer", &C::reg_optimizer},
      {"budget", &C::budget},
      {"detect-test", &C::detect_test},
      {"detect-repeats", &C::detect_repeats},
      {"resize", &C::resize},
      {"crop", &C::crop},
      {"patch", &C::patch},
      {"count", &C::count},
      {"pairs-same", &C::pairs_same},
      {"pairs-different", &C::pairs_different},
      {"tps-sigma", &C::tps_sigma},
      {"shift-sigma", &C::shift_sigma},
      {"channels", &C::channels},
      {"aux-channels", &C::aux_channels},
      {"aux-layer", &C::aux_layer},
      {"sigma-landmark", &C::sigma_landmark},
      {"sigma-background", &C::sigma_background},
      {"sigma-global", &C::sigma_global},
      {"sigma-identity", &C::sigma_identity},
      {"beta", &C::beta},
  };
  return t;
}

const Entry& lookup(const std::string& key) {
  for (const auto& e : table()) {
    if (key == e.key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError(key + ": value out of range '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : table()) out.emplace_back(e.key);
    return out;
  }();
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  const Entry& e = lookup(key);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, double>) {
          this->*member = parse_real(key, v);
        } else if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") {
            this->*member = true;
          } else if (v == "false" || v == "0") {
            this->*member = false;
          } else {
            throw ConfigError(key + ": expected true or false, got '" + v + "'");
          }
        } else if constexpr (std::is_same_v<T, Optimizer>) {
          if (v == "gd") {
            this->*member = Optimizer::gradient_descent;
          } else if (v == "momentum") {
            this->*member = Optimizer::momentum;
          } else {
            throw ConfigError(key + ": expected gd or momentum, got '" + v + "'");
          }
        } else {
          this->*member = static_cast<T>(parse_unsigned(key, v));
        }
      },
      e.field);
}

std::string ExperimentConfig::get(const std::string& key) const {
  const Entry& e = lookup(key);
  return std::visit(
      [&](auto member) -> std::string {
        const auto& v = this->*member;
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_real(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, Optimizer>) {
          return v == Optimizer::momentum ? "momentum" : "gd";
        } else {
          return std::to_string(v);
        }
      },
      e.field);
}

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& k : keys()) out += k + "=" + get(k) + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  if (crop > resize) throw ConfigError("crop must not exceed resize");
  if (patch == 0 || crop % patch != 0) throw ConfigError("crop must be a positive multiple of patch");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ConfigError("drop-rate must lie in [0, 1)");
  if (pairs_same + pairs_different == 0) throw ConfigError("at least one evaluation pair is required");
  if (detect_repeats == 0) throw ConfigError("detect-repeats must be positive");
  if (!(tps_sigma >= 0.0) || !(shift_sigma >= 0.0)) throw ConfigError("jitter scales must be >= 0");
  try {
    projector_config().validate();
    regressor_config(seed).validate();
    face_spec().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RepellenceConfig ExperimentConfig::repellence() const {
  RepellenceConfig r;
  r.r_att_att = r_aa;
  r.r_att_inatt = r_ai;
  r.r_inatt_inatt = r_ii;
  r.tau = tau;
  r.normalize = cosine;
  return r;
}

TrainConfig ExperimentConfig::projector_config() const {
  TrainConfig t;
  t.learning_rate = proj_lr;
  t.steps = proj_steps;
  t.seed = seed;
  t.eta = eta;
  t.clusters = kc;
  t.repellence = repellence();
  t.optimizer = proj_optimizer;
  t.out_dim = proj_dim;
  t.density = density();
  return t;
}

RegressorTrainConfig ExperimentConfig::regressor_config(std::uint64_t s) const {
  RegressorTrainConfig r;
  r.learning_rate = reg_lr;
  r.steps = reg_steps;
  r.seed = s;
  r.heatmaps = heatmaps;
  r.temperature = softargmax_temperature;
  r.optimizer = reg_optimizer;
  return r;
}

SyntheticFaceSpec ExperimentConfig::face_spec() const {
  const std::size_t g = patch == 0 ? 0 : crop / patch;
  SyntheticFaceSpec s = default_face_spec(GridGeometry{g, g, patch});
  s.channels = channels;
  s.aux_channels = aux_channels;
  s.aux_layer = aux_layer;
  s.sigma_landmark = sigma_landmark;
  s.sigma_background = sigma_background;
  s.sigma_global = sigma_global;
  s.sigma_identity = sigma_identity;
  s.beta = beta;
  return s;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_config({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, base);
}

}  // namespace sce
