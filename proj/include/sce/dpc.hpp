#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/matrix.hpp"
#include "sce/partition.hpp"

namespace sce {

/// How the per-token density is computed.
///  - gaussian: rho_i = sum_{j != i} exp(-|t_i - t_j|^2), the usual
///    density-peak form and the default.
///  - verbatim: rho_i = exp(sum_j |t_i - t_j|^2), the formula exactly as
///    printed in the original write-up. It grows with distance, so it ranks
///    outliers as "dense"; kept for comparison only.
enum class DensityVariant { gaussian, verbatim };

/// Density-peak clustering of the inattentive tokens. All per-token vectors
/// are indexed locally (position within `inattentive`); `centers` and
/// `member_center` hold local indices too.
struct ClusterAssignment {
  std::vector<std::size_t> inattentive;
  std::vector<double> rho;
  std::vector<double> delta;
  std::vector<double> score;
  std::vector<std::size_t> centers;        // ascending
  std::vector<std::size_t> member_center;  // local index of the assigned center

  std::size_t center_token(std::size_t member) const { return inattentive[member_center[member]]; }
};

std::vector<double> density(const Matrix& features, DensityVariant variant = DensityVariant::gaussian);

/// True when token a ranks above token b in effective density: strictly
/// larger rho, or equal rho and lower index.
inline bool denser(std::span<const double> rho, std::size_t a, std::size_t b) {
  return rho[a] > rho[b] || (rho[a] == rho[b] && a < b);
}

/// delta_i = distance to the nearest effectively denser token; the densest
/// token takes its largest distance to any token; a single token gets 0.
std::vector<double> peak_distance(const Matrix& features, std::span<const double> rho);

/// min(k, M) indices with the largest rho*delta, ties to the lower index,
/// returned ascending.
std::vector<std::size_t> select_centers(std::span<const double> rho, std::span<const double> delta, std::size_t k);

/// Nearest center in feature space; ties go to the center listed first.
std::vector<std::size_t> assign_members(const Matrix& features, std::span<const std::size_t> centers);

/// Runs density, peak distance, center selection and assignment on the
/// auxiliary features of the inattentive tokens.
ClusterAssignment cluster_inattentive(const FeatureGrid& aux, const TokenPartition& partition, std::size_t k,
                                      DensityVariant variant = DensityVariant::gaussian);

/// Replaces every inattentive token's main feature with that of its
/// assigned center; attentive tokens are left untouched.
FeatureGrid approximate_inattentive(const FeatureGrid& grid, const TokenPartition& partition,
                                    const ClusterAssignment& assignment);

/// Rows of `grid` listed in `tokens`, in that order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> tokens);

}  // namespace sce
