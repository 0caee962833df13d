#include "sce/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sce/partition.hpp"

namespace sce {

namespace {

std::pair<std::size_t, std::size_t> nearest_pixel(Pixel p, std::size_t h, std::size_t w) {
  const auto snap = [](double v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, static_cast<double>(n - 1)));
  };
  return {snap(p.x, w), snap(p.y, h)};
}

}  // namespace

CosineMatcher::CosineMatcher(const DenseFeatureMap& test_map) : map_(test_map), inv_norm_(test_map.height * test_map.width) {
  for (std::size_t y = 0; y < map_.height; ++y) {
    for (std::size_t x = 0; x < map_.width; ++x) {
      const double n = norm(map_.at(x, y));
      inv_norm_[y * map_.width + x] = n > 0.0 ? 1.0 / n : 0.0;
    }
  }
}

std::optional<Pixel> CosineMatcher::best_match(std::span<const double> query) const {
  if (query.size() != map_.channels) throw std::invalid_argument("match: channel count mismatch");
  if (!(norm(query) > 0.0)) return std::nullopt;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t idx = 0; idx < inv_norm_.size(); ++idx) {
    if (inv_norm_[idx] == 0.0) continue;
    const double s = dot(query, {map_.values.data() + idx * map_.channels, map_.channels}) * inv_norm_[idx];
    if (s > best) {
      best = s;
      best_idx = idx;
    }
  }
  if (std::isinf(best)) return std::nullopt;
  return Pixel{static_cast<double>(best_idx % map_.width), static_cast<double>(best_idx / map_.width)};
}

Pixel match_landmark(const DenseFeatureMap& ref_map, const DenseFeatureMap& test_map, Pixel query) {
  if (ref_map.channels != test_map.channels) throw std::invalid_argument("match_landmark: channel count mismatch");
  if (!(query.x >= -0.5 && query.y >= -0.5 && query.x < static_cast<double>(ref_map.width) - 0.5 &&
        query.y < static_cast<double>(ref_map.height) - 0.5)) {
    throw std::invalid_argument("match_landmark: query outside the reference map");
  }
  const auto [qx, qy] = nearest_pixel(query, ref_map.height, ref_map.width);
  const auto q = ref_map.at(qx, qy);
  const auto m = CosineMatcher(test_map).best_match(q);
  if (!m) throw std::invalid_argument("match_landmark: zero-norm query feature");
  return *m;
}

std::vector<double> similarity_map(const DenseFeatureMap& map, std::span<const double> query) {
  const double qn = norm(query);
  std::vector<double> out(map.height * map.width, 0.0);
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      const auto f = map.at(x, y);
      const double n = norm(f) * qn;
      out[y * map.width + x] = n > 0.0 ? dot(query, f) / n : 0.0;
    }
  }
  return out;
}

FeatureExtractor raw_features() {
  return [](const BackboneOutput& b) { return b.main; };
}

FeatureExtractor projected_features(const Projector& p) {
  return [p](const BackboneOutput& b) { return project(p, b.main); };
}

FeatureGrid drop_tokens(const FeatureGrid& grid, const BackboneOutput& backbone, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("drop rate must lie in [0, 1)");
  const std::size_t n = grid.token_count();
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5));
  if (k == 0) return grid;
  const auto scores = cls_similarity(backbone.cls_query, backbone.keys);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Lowest similarity first; equal scores drop the higher index first so the
  // kept set matches split_tokens' tie rule.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a > b);
  });
  FeatureGrid out = grid;
  for (std::size_t i = 0; i < std::min(k, n); ++i) {
    for (auto& v : out.features.row(order[i])) v = 0.0;
  }
  return out;
}

MatchResult run_matching(const std::vector<EvalPair>& pairs, const FeatureExtractor& extract, double drop_rate) {
  MatchResult res;
  std::vector<double> same, diff;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    FeatureGrid ref = extract(pr.reference.backbone);
    FeatureGrid test = extract(pr.test.backbone);
    if (drop_rate > 0.0) {
      ref = drop_tokens(ref, pr.reference.backbone, drop_rate);
      test = drop_tokens(test, pr.test.backbone, drop_rate);
    }
    const auto& geo = ref.geometry;
    const DenseFeatureMap ref_map = bilinear_upsample(ref, geo.image_h(), geo.image_w());
    const DenseFeatureMap test_map = bilinear_upsample(test, geo.image_h(), geo.image_w());
    const CosineMatcher matcher(test_map);
    for (std::size_t l = 0; l < pr.reference.landmarks.size(); ++l) {
      const auto [qx, qy] = nearest_pixel(pr.reference.landmarks[l], ref_map.height, ref_map.width);
      auto m = matcher.best_match(ref_map.at(qx, qy));
      if (!m) {
        ++res.failed_queries;
        m = Pixel{(static_cast<double>(geo.image_w()) - 1.0) / 2.0, (static_cast<double>(geo.image_h()) - 1.0) / 2.0};
      }
      MatchRecord r{k, l, pr.kind, *m, pr.test.landmarks[l], 0.0};
      r.error_px = std::hypot(r.predicted.x - r.truth.x, r.predicted.y - r.truth.y);
      (pr.kind == PairKind::same ? same : diff).push_back(r.error_px);
      res.records.push_back(r);
    }
  }
  res.mean_same = same.empty() ? 0.0 : pairwise_sum(same) / static_cast<double>(same.size());
  res.mean_different = diff.empty() ? 0.0 : pairwise_sum(diff) / static_cast<double>(diff.size());
  return res;
}

}  // namespace sce
