#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/matrix.hpp"

namespace sce {

enum class TokenKind : std::uint8_t { attentive, inattentive };

struct RepellenceConfig {
  double r_att_att = 5.0;
  double r_att_inatt = 5.0;
  double r_inatt_inatt = 2.0;
  double tau = 0.07;
  // Cosine similarity when true, raw inner products otherwise.
  bool normalize = true;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double att_att = 0.0;
  double att_inatt = 0.0;
  double inatt_inatt = 0.0;
  Matrix locality;
  Matrix correspondence;
};

/// F[i][j] = log(|pos_i - pos_j| + 1) in patch-grid units.
Matrix locality_matrix(std::span<const GridPos> positions);

Matrix repellence_matrix(std::span<const TokenKind> labels, const RepellenceConfig& cfg);

/// Row-stochastic P[i][j] = softmax_j(<phi_i, phi_j> / tau), the self pair
/// included. Throws on a zero-norm row when normalizing.
Matrix correspondence_matrix(const Matrix& features, double tau, bool normalize = true);

/// sum_ij F * Lambda * P, with the per-type partial sums.
LossBreakdown lcr_loss(const Matrix& correspondence, const Matrix& locality, const Matrix& repellence,
                       std::span<const TokenKind> labels);

struct LossAndGradient {
  LossBreakdown loss;
  Matrix gradient;  // dL / dphi, same shape as the features
};

LossAndGradient lcr_value_and_gradient(const Matrix& features, std::span<const GridPos> positions,
                                       std::span<const TokenKind> labels, const RepellenceConfig& cfg);

inline Matrix lcr_gradient(const Matrix& features, std::span<const GridPos> positions, std::span<const TokenKind> labels,
                           const RepellenceConfig& cfg) {
  return lcr_value_and_gradient(features, positions, labels, cfg).gradient;
}

}  // namespace sce
