#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "sce/dpc.hpp"
#include "sce/feature_grid.hpp"
#include "sce/lcr.hpp"
#include "sce/matrix.hpp"
#include "sce/partition.hpp"
#include "sce/synth.hpp"

namespace sce {

/// Per-token affine map phi = W^T f + b, W stored in_dim x out_dim.
struct Projector {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  /// W ~ U(-1/sqrt(in), 1/sqrt(in)), b = 0.
  static Projector initialize(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);
  static Projector identity(std::size_t dim);

  std::uint64_t checksum() const;
};

FeatureGrid project(const Projector& p, const FeatureGrid& grid);

enum class Optimizer { gradient_descent, momentum };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  double eta = 0.25;
  std::size_t clusters = 4;
  RepellenceConfig repellence;
  Optimizer optimizer = Optimizer::gradient_descent;
  std::size_t out_dim = 64;
  DensityVariant density = DensityVariant::gaussian;

  void validate() const;
};

struct TrainTrace {
  std::vector<double> loss;  // mean per-image loss before each update
  double seconds = 0.0;
  std::uint64_t checksum = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Tokens entering the loss for one image: attentive tokens followed by the
/// cluster centers, with the features of the center-substituted grid.
struct LcrView {
  std::vector<std::size_t> tokens;
  std::vector<GridPos> positions;
  std::vector<TokenKind> labels;
  Matrix features;  // tokens.size() x in_dim
};

LcrView prepare_view(const BackboneOutput& backbone, double eta, std::size_t clusters,
                     DensityVariant variant = DensityVariant::gaussian);

struct ProjectorGradient {
  double loss = 0.0;
  Matrix weight;
  std::vector<double> bias;
};

/// LCR loss of one image under `p` and its gradient with respect to (W, b).
ProjectorGradient projector_gradient(const Projector& p, const LcrView& view, const RepellenceConfig& cfg);

struct TrainResult {
  Projector projector;
  TrainTrace trace;
};

/// Full-batch descent on the mean per-image LCR loss. Backbone outputs are
/// read only; partitions and clusterings are computed once up front.
TrainResult train_projector(std::span<const BackboneOutput> corpus, const TrainConfig& cfg);
/// Continues from a given projector instead of a fresh initialization.
TrainResult train_projector(std::span<const BackboneOutput> corpus, const TrainConfig& cfg, Projector start);

/// Checkpoint: <dir>/weight.scet, <dir>/bias.scet, <dir>/meta.txt.
void save_projector(const std::filesystem::path& dir, const Projector& p, const TrainConfig& cfg);
Projector load_projector(const std::filesystem::path& dir);

}  // namespace sce
