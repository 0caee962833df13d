#pragma once

#include <cstdint>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/matrix.hpp"
#include "sce/tps.hpp"

namespace sce {

/// Parameters of the stub backbone. Landmark-bearing patches carry a
/// landmark prototype, every other patch the prototype of its region.
struct SyntheticFaceSpec {
  GridGeometry geometry{12, 12, 8};
  std::vector<Pixel> landmarks;
  // Landmarks sharing a group share a class mean (left/right eye, mouth corners).
  std::vector<std::size_t> landmark_groups;
  std::vector<std::uint32_t> region_layout;  // one region id per patch
  std::size_t region_count = 0;
  std::size_t left_eye = 0;
  std::size_t right_eye = 1;

  std::uint64_t prototype_seed = 20240531;
  std::uint64_t identity_seed = 1;

  std::size_t channels = 32;
  std::size_t aux_channels = 16;
  std::size_t aux_layer = 3;

  double sigma_landmark = 0.3;    // per-token noise on landmark patches
  double sigma_background = 0.3;  // per-token noise on region patches
  double sigma_aux = 0.02;        // aux noise at layer 3, grows linearly with depth
  double sigma_global = 3.0;      // per-image offset shared by every token of the image
  double sigma_identity = 0.3;    // prototype spread around class means across identities
  double group_spread = 0.6;      // within-group separation of landmark class means
  double aux_scale = 0.35;        // spread of auxiliary class means
  double beta = 2.0;              // CLS logit boost of landmark keys
  std::size_t global_rank = 4;    // dimension of the per-image offset subspace

  void validate() const;
};

/// Five-landmark face on a 96x96 crop with patch 8: eyes, nose, mouth
/// corners over five regions (background, forehead, two cheeks, chin).
SyntheticFaceSpec default_face_spec();
SyntheticFaceSpec default_face_spec(const GridGeometry& geometry);

struct BackboneOutput {
  FeatureGrid main;
  FeatureGrid aux;
  std::vector<double> cls_query;
  Matrix keys;  // token_count x channels
};

struct Sample {
  BackboneOutput backbone;
  std::vector<Pixel> landmarks;
  std::uint64_t identity_seed = 0;
};

BackboneOutput generate_backbone_output(const SyntheticFaceSpec& spec, std::uint64_t seed);
Sample generate_sample(const SyntheticFaceSpec& spec, std::uint64_t seed);

/// Tokens whose patch contains a landmark (sorted, unique).
std::vector<std::size_t> landmark_tokens(const SyntheticFaceSpec& spec);

/// Moves landmarks through the warp and resamples the region layout by
/// pulling each patch center back through the inverse warp.
SyntheticFaceSpec warp_spec(const SyntheticFaceSpec& spec, const TpsWarp& warp);

/// Random per-sample geometry: TPS deformation plus a global translation.
SyntheticFaceSpec jitter_spec(const SyntheticFaceSpec& spec, std::uint64_t seed, double tps_sigma, double shift_sigma_px);

enum class PairKind { same, different };

struct EvalPair {
  Sample reference;
  Sample test;
  PairKind kind = PairKind::same;
};

EvalPair make_pair(const SyntheticFaceSpec& spec, PairKind kind, std::uint64_t seed, double tps_sigma = 0.05);

/// n_same same-identity pairs followed by n_different different-identity
/// pairs, each on its own jittered reference geometry.
std::vector<EvalPair> make_pair_batch(const SyntheticFaceSpec& spec, std::size_t n_same, std::size_t n_different,
                                      std::uint64_t master_seed, double tps_sigma = 0.05, double shift_sigma_px = 3.0);

std::uint64_t hash_sample(const Sample& s, Fnv1a& h);
std::uint64_t hash_pairs(const std::vector<EvalPair>& pairs);

/// SplitMix64 step, used to derive independent seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sce
