#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sce/feature_grid.hpp"
#include "sce/matrix.hpp"

namespace sce {

/// Masking sentinel for soft_argmax heatmaps; its weight underflows to
/// exactly zero next to any finite heat value at temperatures below ~1e290.
inline constexpr double kMaskedHeat = -1e300;

double mean_pixel_error(std::span<const Pixel> predicted, std::span<const Pixel> truth);

/// softmax(heat / temperature) over an h x w map, then the expected
/// (column, row) coordinate in cell units.
Pixel soft_argmax(std::span<const double> heat, std::size_t h, std::size_t w, double temperature);

struct DetectionMetrics {
  std::vector<std::vector<double>> errors_pct;  // [sample][landmark]
  std::vector<double> per_landmark_pct;
  double mean_pct = 0.0;
};

/// Error normalized by the ground-truth inter-ocular distance, in percent.
DetectionMetrics inter_ocular_error(const std::vector<std::vector<Pixel>>& predicted,
                                    const std::vector<std::vector<Pixel>>& truth, std::size_t left_eye,
                                    std::size_t right_eye);

/// Mean silhouette with Euclidean distances; singleton clusters score 0.
double silhouette_coefficient(const Matrix& embeddings, std::span<const std::size_t> labels);

}  // namespace sce
