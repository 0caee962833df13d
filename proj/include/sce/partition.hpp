#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sce/matrix.hpp"

namespace sce {

/// CLS-similarity split of the patch tokens into attentive and inattentive
/// index sets (both ascending).
struct TokenPartition {
  std::vector<double> scores;
  std::vector<std::size_t> attentive;
  std::vector<std::size_t> inattentive;
  double eta = 0.0;
};

/// softmax(K q / sqrt(d)) over the N key rows.
std::vector<double> cls_similarity(std::span<const double> cls_query, const Matrix& keys);

/// clamp(round-half-up(eta * n), 1, n - 1).
std::size_t attentive_count(double eta, std::size_t n);

/// Top attentive_count(eta, N) scores become attentive; equal scores are
/// ranked by lower index first.
TokenPartition split_tokens(std::span<const double> scores, double eta);

}  // namespace sce
