#include "sce/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sce {

std::vector<double> cls_similarity(std::span<const double> cls_query, const Matrix& keys) {
  const std::size_t d = cls_query.size();
  if (d == 0) throw std::invalid_argument("cls_similarity: empty query");
  if (keys.cols() != d) throw std::invalid_argument("cls_similarity: key width != query length");
  if (keys.rows() == 0) throw std::invalid_argument("cls_similarity: no keys");
  for (double v : cls_query) {
    if (!std::isfinite(v)) throw std::invalid_argument("cls_similarity: non-finite query");
  }
  for (double v : keys.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("cls_similarity: non-finite key");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> logits(keys.rows());
  for (std::size_t i = 0; i < keys.rows(); ++i) logits[i] = dot(keys.row(i), cls_query) * scale;
  const double mx = *std::max_element(logits.begin(), logits.end());
  for (auto& v : logits) v = std::exp(v - mx);
  const double z = pairwise_sum(logits);
  for (auto& v : logits) v /= z;
  return logits;
}

std::size_t attentive_count(double eta, std::size_t n) {
  const auto k = static_cast<long long>(std::floor(eta * static_cast<double>(n) + 0.5));
  return static_cast<std::size_t>(std::clamp<long long>(k, 1, static_cast<long long>(n) - 1));
}

TokenPartition split_tokens(std::span<const double> scores, double eta) {
  const std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("split_tokens: need at least two tokens");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("split_tokens: eta must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t k = attentive_count(eta, n);
  TokenPartition p;
  p.scores.assign(scores.begin(), scores.end());
  p.eta = eta;
  p.attentive.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  p.inattentive.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(p.attentive.begin(), p.attentive.end());
  std::sort(p.inattentive.begin(), p.inattentive.end());
  return p;
}

}  // namespace sce
