#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/matrix.hpp"
#include "sce/metrics.hpp"
#include "sce/projector.hpp"
#include "sce/synth.hpp"

namespace sce {

/// Landmark regressor over concatenated backbone + projector features:
/// one 3x3 convolution (stride 1, zero padding) producing I heatmaps per
/// landmark, soft-argmax on each, and a per-landmark linear head mapping the
/// 2I heatmap coordinates (cell units) to a pixel position.
struct RegressorParams {
  std::size_t landmarks = 0;
  std::size_t heatmaps = 50;
  std::size_t in_channels = 0;
  double temperature = 0.1;
  // Row (ky * 3 + kx) * in_channels + c, column l * heatmaps + i.
  Matrix conv_weight;
  std::vector<double> conv_bias;
  // Row 2l is landmark l's x output, row 2l + 1 its y output; column 2i / 2i + 1
  // read heatmap i's x / y coordinate.
  Matrix head_weight;
  std::vector<double> head_bias;

  /// Random conv weights; the head starts as the mean heatmap coordinate
  /// converted from cell to pixel units.
  static RegressorParams initialize(std::size_t landmarks, std::size_t heatmaps, std::size_t in_channels,
                                    std::size_t patch_size, double temperature, std::uint64_t seed);
  std::uint64_t checksum() const;
};

/// Channel concatenation of two grids on the same geometry.
FeatureGrid concat_channels(const FeatureGrid& a, const FeatureGrid& b);

/// All L * I heatmaps, one column each, over the grid cells.
Matrix regressor_heatmaps(const RegressorParams& params, const FeatureGrid& input);

std::vector<Pixel> regressor_forward(const RegressorParams& params, const FeatureGrid& stage1, const FeatureGrid& stage2);

struct RegressorTrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  std::size_t heatmaps = 50;
  double temperature = 0.1;
  Optimizer optimizer = Optimizer::momentum;

  void validate() const;
};

struct AnnotatedSample {
  const BackboneOutput* backbone = nullptr;
  std::vector<Pixel> landmarks;
};

struct RegressorResult {
  RegressorParams params;
  TrainTrace trace;  // mean squared pixel error per step
};

/// Full-batch descent on the mean squared pixel error. The backbone and the
/// projector are only read.
RegressorResult train_regressor(std::span<const AnnotatedSample> samples, const Projector& projector,
                                const RegressorTrainConfig& cfg);

std::vector<std::vector<Pixel>> predict_landmarks(const RegressorParams& params, const Projector& projector,
                                                  std::span<const AnnotatedSample> samples);

/// Predicts the training-set mean position of every landmark.
std::vector<Pixel> mean_landmark_positions(std::span<const AnnotatedSample> samples);

}  // namespace sce
