#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/projector.hpp"
#include "sce/synth.hpp"

namespace sce {

/// Scanline-ordered argmax of cosine similarity between the reference
/// feature at `query` (rounded to the nearest pixel) and every test pixel.
/// Test pixels with a zero feature never match.
Pixel match_landmark(const DenseFeatureMap& ref_map, const DenseFeatureMap& test_map, Pixel query);

/// Test map with per-pixel inverse norms cached, for many queries.
class CosineMatcher {
 public:
  explicit CosineMatcher(const DenseFeatureMap& test_map);
  /// Returns std::nullopt when the query feature has zero norm.
  std::optional<Pixel> best_match(std::span<const double> query) const;

 private:
  const DenseFeatureMap& map_;
  std::vector<double> inv_norm_;
};

struct MatchRecord {
  std::size_t pair = 0;
  std::size_t landmark = 0;
  PairKind kind = PairKind::same;
  Pixel predicted;
  Pixel truth;
  double error_px = 0.0;
};

struct MatchResult {
  std::vector<MatchRecord> records;
  double mean_same = 0.0;
  double mean_different = 0.0;
  std::size_t failed_queries = 0;  // zero-norm queries, scored at the image center
};

using FeatureExtractor = std::function<FeatureGrid(const BackboneOutput&)>;

FeatureExtractor raw_features();
FeatureExtractor projected_features(const Projector& p);

/// Landmark matching over the pairs: both grids are upsampled to image
/// resolution, every reference landmark queries the test map. With
/// drop_rate > 0, that fraction of lowest-CLS-similarity tokens is zeroed
/// in both images first.
MatchResult run_matching(const std::vector<EvalPair>& pairs, const FeatureExtractor& extract, double drop_rate = 0.0);

/// Zeroes the round(rate * N) tokens with the lowest CLS similarity.
FeatureGrid drop_tokens(const FeatureGrid& grid, const BackboneOutput& backbone, double rate);

/// Cosine-similarity map of one query against a dense map, row-major.
std::vector<double> similarity_map(const DenseFeatureMap& map, std::span<const double> query);

}  // namespace sce
