#include "sce/dpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sce {

namespace {

void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite feature");
  }
}

}  // namespace

std::vector<double> density(const Matrix& features, DensityVariant variant) {
  const std::size_t m = features.rows();
  if (m == 0) throw std::invalid_argument("density: no tokens");
  require_finite(features, "density");
  std::vector<double> rho(m);
  std::vector<double> terms;
  terms.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    terms.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double d2 = squared_distance(features.row(i), features.row(j));
      terms.push_back(variant == DensityVariant::gaussian ? std::exp(-d2) : d2);
    }
    const double s = pairwise_sum(terms);
    rho[i] = variant == DensityVariant::gaussian ? s : std::exp(s);
  }
  return rho;
}

std::vector<double> peak_distance(const Matrix& features, std::span<const double> rho) {
  const std::size_t m = features.rows();
  if (m == 0) throw std::invalid_argument("peak_distance: no tokens");
  if (rho.size() != m) throw std::invalid_argument("peak_distance: rho length mismatch");
  std::vector<double> delta(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double nearest_denser = std::numeric_limits<double>::infinity();
    double farthest = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double d = std::sqrt(squared_distance(features.row(i), features.row(j)));
      farthest = std::max(farthest, d);
      if (denser(rho, j, i)) nearest_denser = std::min(nearest_denser, d);
    }
    delta[i] = std::isinf(nearest_denser) ? farthest : nearest_denser;
  }
  return delta;
}

std::vector<std::size_t> select_centers(std::span<const double> rho, std::span<const double> delta, std::size_t k) {
  if (k < 1) throw std::invalid_argument("select_centers: K_c must be >= 1");
  if (rho.size() != delta.size()) throw std::invalid_argument("select_centers: length mismatch");
  const std::size_t m = rho.size();
  std::vector<double> score(m);
  for (std::size_t i = 0; i < m; ++i) score[i] = rho[i] * delta[i];
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(std::min(k, m));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> assign_members(const Matrix& features, std::span<const std::size_t> centers) {
  if (centers.empty()) throw std::invalid_argument("assign_members: no centers");
  std::vector<std::size_t> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::size_t best = centers.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c : centers) {
      const double d = squared_distance(features.row(i), features.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[i] = best;
  }
  // Coincident centers would otherwise claim each other.
  for (std::size_t c : centers) out[c] = c;
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> tokens) {
  Matrix out(tokens.size(), m.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto src = m.row(tokens[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

ClusterAssignment cluster_inattentive(const FeatureGrid& aux, const TokenPartition& partition, std::size_t k,
                                      DensityVariant variant) {
  ClusterAssignment a;
  a.inattentive = partition.inattentive;
  const Matrix feats = gather_rows(aux.features, a.inattentive);
  a.rho = density(feats, variant);
  a.delta = peak_distance(feats, a.rho);
  a.score.resize(a.rho.size());
  for (std::size_t i = 0; i < a.rho.size(); ++i) a.score[i] = a.rho[i] * a.delta[i];
  a.centers = select_centers(a.rho, a.delta, k);
  a.member_center = assign_members(feats, a.centers);
  return a;
}

FeatureGrid approximate_inattentive(const FeatureGrid& grid, const TokenPartition& partition,
                                    const ClusterAssignment& assignment) {
  if (assignment.inattentive != partition.inattentive ||
      assignment.member_center.size() != assignment.inattentive.size()) {
    throw std::invalid_argument("approximate_inattentive: assignment does not cover the inattentive set");
  }
  FeatureGrid out = grid;
  for (std::size_t i = 0; i < assignment.inattentive.size(); ++i) {
    const auto src = grid.features.row(assignment.center_token(i));
    std::copy(src.begin(), src.end(), out.features.row(assignment.inattentive[i]).begin());
  }
  return out;
}

}  // namespace sce
