#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sce/projector.hpp"
#include "sce/regressor.hpp"
#include "sce/synth.hpp"

namespace sce {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every hyperparameter of an experiment. Serialized as flat key=value text
/// whose keys double as command-line flag names.
struct ExperimentConfig {
  std::uint64_t seed = 7;

  double eta = 0.25;
  std::size_t kc = 4;
  double r_aa = 5.0;
  double r_ai = 5.0;
  double r_ii = 2.0;
  double tau = 0.07;
  bool cosine = true;
  bool rho_verbatim = false;
  double drop_rate = 0.0;

  std::size_t proj_dim = 64;
  double proj_lr = 1e-3;
  std::size_t proj_steps = 200;
  Optimizer proj_optimizer = Optimizer::gradient_descent;

  std::size_t heatmaps = 50;
  double softargmax_temperature = 0.1;
  double reg_lr = 1e-3;
  std::size_t reg_steps = 200;
  Optimizer reg_optimizer = Optimizer::momentum;
  std::size_t budget = 20;
  std::size_t detect_test = 100;
  std::size_t detect_repeats = 3;

  std::size_t resize = 136;
  std::size_t crop = 96;
  std::size_t patch = 8;

  std::size_t count = 32;
  std::size_t pairs_same = 500;
  std::size_t pairs_different = 500;
  double tps_sigma = 0.05;
  double shift_sigma = 3.0;
  std::size_t channels = 32;
  std::size_t aux_channels = 16;
  std::size_t aux_layer = 3;
  double sigma_landmark = 0.3;
  double sigma_background = 0.3;
  double sigma_global = 3.0;
  double sigma_identity = 0.3;
  double beta = 2.0;

  /// Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  std::string dump() const;
  void validate() const;

  RepellenceConfig repellence() const;
  TrainConfig projector_config() const;
  RegressorTrainConfig regressor_config(std::uint64_t seed) const;
  DensityVariant density() const { return rho_verbatim ? DensityVariant::verbatim : DensityVariant::gaussian; }
  SyntheticFaceSpec face_spec() const;
};

/// Applies key=value lines on top of `base`; '#' starts a comment.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

}  // namespace sce
