#include "sce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace sce {

double mean_pixel_error(std::span<const Pixel> predicted, std::span<const Pixel> truth) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw std::invalid_argument("mean_pixel_error: need matching non-empty sequences");
  }
  std::vector<double> d(predicted.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::hypot(predicted[i].x - truth[i].x, predicted[i].y - truth[i].y);
  return pairwise_sum(d) / static_cast<double>(d.size());
}

Pixel soft_argmax(std::span<const double> heat, std::size_t h, std::size_t w, double temperature) {
  if (heat.size() != h * w || heat.empty()) throw std::invalid_argument("soft_argmax: heat size mismatch");
  if (!(temperature > 0.0)) throw std::invalid_argument("soft_argmax: temperature must be > 0");
  const double mx = *std::max_element(heat.begin(), heat.end());
  double z = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double e = std::exp((heat[r * w + c] - mx) / temperature);
      z += e;
      sx += e * static_cast<double>(c);
      sy += e * static_cast<double>(r);
    }
  }
  return {sx / z, sy / z};
}

DetectionMetrics inter_ocular_error(const std::vector<std::vector<Pixel>>& predicted,
                                    const std::vector<std::vector<Pixel>>& truth, std::size_t left_eye,
                                    std::size_t right_eye) {
  if (predicted.empty() || predicted.size() != truth.size()) {
    throw std::invalid_argument("inter_ocular_error: need matching non-empty batches");
  }
  const std::size_t L = truth.front().size();
  if (left_eye >= L || right_eye >= L) throw std::invalid_argument("inter_ocular_error: eye index out of range");
  DetectionMetrics m;
  m.per_landmark_pct.assign(L, 0.0);
  std::vector<double> all;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (predicted[s].size() != L || truth[s].size() != L) throw std::invalid_argument("inter_ocular_error: ragged batch");
    const double iod = std::hypot(truth[s][left_eye].x - truth[s][right_eye].x, truth[s][left_eye].y - truth[s][right_eye].y);
    if (!(iod > 0.0)) throw std::invalid_argument("inter_ocular_error: coincident eye ground truths");
    std::vector<double> row(L);
    for (std::size_t l = 0; l < L; ++l) {
      row[l] = 100.0 * std::hypot(predicted[s][l].x - truth[s][l].x, predicted[s][l].y - truth[s][l].y) / iod;
      m.per_landmark_pct[l] += row[l];
      all.push_back(row[l]);
    }
    m.errors_pct.push_back(std::move(row));
  }
  for (auto& v : m.per_landmark_pct) v /= static_cast<double>(truth.size());
  m.mean_pct = pairwise_sum(all) / static_cast<double>(all.size());
  return m;
}

double silhouette_coefficient(const Matrix& embeddings, std::span<const std::size_t> labels) {
  const std::size_t m = embeddings.rows();
  if (labels.size() != m) throw std::invalid_argument("silhouette: label count mismatch");
  std::map<std::size_t, std::size_t> sizes;
  for (auto l : labels) ++sizes[l];
  if (sizes.size() < 2) throw std::invalid_argument("silhouette: need at least two clusters");

  std::vector<double> s(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<std::size_t, double> sum;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) sum[labels[j]] += std::sqrt(squared_distance(embeddings.row(i), embeddings.row(j)));
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, total] : sum) {
      if (label != labels[i]) b = std::min(b, total / static_cast<double>(sizes[label]));
    }
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return pairwise_sum(s) / static_cast<double>(m);
}

}  // namespace sce
