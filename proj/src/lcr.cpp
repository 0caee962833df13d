#include "sce/lcr.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace sce {

namespace {

struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& features) {
  Normalized n{features, std::vector<double>(features.rows())};
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double len = norm(features.row(i));
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw std::invalid_argument("correspondence: feature row " + std::to_string(i) + " has zero or non-finite norm");
    }
    n.norms[i] = len;
    for (auto& v : n.unit.row(i)) v /= len;
  }
  return n;
}

Matrix softmax_rows(const Matrix& space, double tau) {
  const std::size_t n = space.rows();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = p.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] = dot(space.row(i), space.row(j)) / tau;
    const double mx = *std::max_element(row.begin(), row.end());
    for (auto& v : row) v = std::exp(v - mx);
    const double z = pairwise_sum(row);
    for (auto& v : row) v /= z;
  }
  return p;
}

}  // namespace

void RepellenceConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be > 0");
  for (double r : {r_att_att, r_att_inatt, r_inatt_inatt}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("repellence weights must be >= 0");
  }
}

Matrix locality_matrix(std::span<const GridPos> positions) {
  const std::size_t n = positions.size();
  Matrix f(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dr = static_cast<double>(positions[i].row) - static_cast<double>(positions[j].row);
      const double dc = static_cast<double>(positions[i].col) - static_cast<double>(positions[j].col);
      f(i, j) = std::log(std::sqrt(dr * dr + dc * dc) + 1.0);
    }
  }
  return f;
}

Matrix repellence_matrix(std::span<const TokenKind> labels, const RepellenceConfig& cfg) {
  const std::size_t n = labels.size();
  Matrix r(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool ai = labels[i] == TokenKind::attentive, aj = labels[j] == TokenKind::attentive;
      r(i, j) = ai && aj ? cfg.r_att_att : (!ai && !aj ? cfg.r_inatt_inatt : cfg.r_att_inatt);
    }
  }
  return r;
}

Matrix correspondence_matrix(const Matrix& features, double tau, bool normalize) {
  if (!(tau > 0.0)) throw std::invalid_argument("correspondence: temperature must be > 0");
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("correspondence: non-finite feature");
  }
  return softmax_rows(normalize ? normalize_rows(features).unit : features, tau);
}

LossBreakdown lcr_loss(const Matrix& correspondence, const Matrix& locality, const Matrix& repellence,
                       std::span<const TokenKind> labels) {
  const std::size_t n = correspondence.rows();
  if (correspondence.cols() != n || locality.rows() != n || locality.cols() != n || repellence.rows() != n ||
      repellence.cols() != n || labels.size() != n) {
    throw std::invalid_argument("lcr_loss: matrices are not conformable");
  }
  LossBreakdown out;
  std::vector<double> all, aa, ai, ii;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double term = locality(i, j) * repellence(i, j) * correspondence(i, j);
      all.push_back(term);
      const bool a = labels[i] == TokenKind::attentive, b = labels[j] == TokenKind::attentive;
      (a && b ? aa : (!a && !b ? ii : ai)).push_back(term);
    }
  }
  out.total = pairwise_sum(all);
  out.att_att = pairwise_sum(aa);
  out.att_inatt = pairwise_sum(ai);
  out.inatt_inatt = pairwise_sum(ii);
  out.locality = locality;
  out.correspondence = correspondence;
  return out;
}

LossAndGradient lcr_value_and_gradient(const Matrix& features, std::span<const GridPos> positions,
                                       std::span<const TokenKind> labels, const RepellenceConfig& cfg) {
  cfg.validate();
  const std::size_t n = features.rows(), dim = features.cols();
  if (positions.size() != n || labels.size() != n) throw std::invalid_argument("lcr: token metadata length mismatch");

  std::optional<Normalized> nrm;
  if (cfg.normalize) nrm = normalize_rows(features);
  const Matrix& space = cfg.normalize ? nrm->unit : features;

  const Matrix f = locality_matrix(positions);
  const Matrix lam = repellence_matrix(labels, cfg);
  const Matrix p = correspondence_matrix(features, cfg.tau, cfg.normalize);

  LossAndGradient out{lcr_loss(p, f, lam, labels), Matrix(n, dim)};

  // dL/ds_ij = P_ij (C_ij - sum_k C_ik P_ik), with s_ij = <u_i, u_j> / tau.
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double expected = 0.0;
    for (std::size_t k = 0; k < n; ++k) expected += f(i, k) * lam(i, k) * p(i, k);
    for (std::size_t j = 0; j < n; ++j) g(i, j) = p(i, j) * (f(i, j) * lam(i, j) - expected);
  }

  // dL/du_i = (1/tau) sum_j (g_ij + g_ji) u_j
  Matrix du(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = du.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = (g(i, j) + g(j, i)) / cfg.tau;
      const auto uj = space.row(j);
      for (std::size_t c = 0; c < dim; ++c) dst[c] += w * uj[c];
    }
  }

  if (!cfg.normalize) {
    out.gradient = std::move(du);
    return out;
  }
  // Through u = phi / |phi|: dL/dphi = (du - u <u, du>) / |phi|.
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = space.row(i);
    const auto d = du.row(i);
    const double radial = dot(u, d);
    auto dst = out.gradient.row(i);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = (d[c] - radial * u[c]) / nrm->norms[i];
  }
  return out;
}

}  // namespace sce
