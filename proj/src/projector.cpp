#include "sce/projector.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "sce/tensor.hpp"

namespace sce {

Projector Projector::initialize(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 2) throw std::invalid_argument("projector needs in_dim >= 1 and out_dim >= 2");
  Projector p{Matrix(in_dim, out_dim), std::vector<double>(out_dim, 0.0)};
  std::mt19937_64 rng(mix_seed(seed, 0x70726f6a));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& w : p.weight.data()) w = u(rng);
  return p;
}

Projector Projector::identity(std::size_t dim) {
  Projector p{Matrix(dim, dim), std::vector<double>(dim, 0.0)};
  for (std::size_t i = 0; i < dim; ++i) p.weight(i, i) = 1.0;
  return p;
}

std::uint64_t Projector::checksum() const {
  Fnv1a h;
  h.update_u64(in_dim());
  h.update_u64(out_dim());
  h.update_doubles(weight.data());
  h.update_doubles(bias);
  return h.digest();
}

namespace {

Matrix affine_rows(const Projector& p, const Matrix& x) {
  const std::size_t n = x.rows(), in = p.in_dim(), out = p.out_dim();
  Matrix y(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = y.row(i);
    std::copy(p.bias.begin(), p.bias.end(), dst.begin());
    const auto src = x.row(i);
    for (std::size_t c = 0; c < in; ++c) {
      const double v = src[c];
      const auto w = p.weight.row(c);
      for (std::size_t k = 0; k < out; ++k) dst[k] += v * w[k];
    }
  }
  return y;
}

}  // namespace

FeatureGrid project(const Projector& p, const FeatureGrid& grid) {
  if (grid.channels() != p.in_dim()) {
    throw std::invalid_argument("project: grid has " + std::to_string(grid.channels()) + " channels, projector expects " +
                                std::to_string(p.in_dim()));
  }
  return FeatureGrid{grid.geometry, affine_rows(p, grid.features)};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
  if (clusters < 1) throw std::invalid_argument("cluster count must be >= 1");
  if (out_dim < 2) throw std::invalid_argument("projector output dim must be >= 2");
  repellence.validate();
}

DivergenceError::DivergenceError(std::size_t step, const std::string& what)
    : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

LcrView prepare_view(const BackboneOutput& backbone, double eta, std::size_t clusters, DensityVariant variant) {
  const auto scores = cls_similarity(backbone.cls_query, backbone.keys);
  const auto partition = split_tokens(scores, eta);
  const auto assignment = cluster_inattentive(backbone.aux, partition, clusters, variant);
  const FeatureGrid substituted = approximate_inattentive(backbone.main, partition, assignment);

  LcrView v;
  for (auto t : partition.attentive) {
    v.tokens.push_back(t);
    v.labels.push_back(TokenKind::attentive);
  }
  for (auto c : assignment.centers) {
    v.tokens.push_back(assignment.inattentive[c]);
    v.labels.push_back(TokenKind::inattentive);
  }
  for (auto t : v.tokens) v.positions.push_back(substituted.position(t));
  v.features = gather_rows(substituted.features, v.tokens);
  return v;
}

ProjectorGradient projector_gradient(const Projector& p, const LcrView& view, const RepellenceConfig& cfg) {
  const Matrix phi = affine_rows(p, view.features);
  const auto lg = lcr_value_and_gradient(phi, view.positions, view.labels, cfg);
  ProjectorGradient g{lg.loss.total, Matrix(p.in_dim(), p.out_dim()), std::vector<double>(p.out_dim(), 0.0)};
  for (std::size_t i = 0; i < view.features.rows(); ++i) {
    const auto f = view.features.row(i);
    const auto d = lg.gradient.row(i);
    for (std::size_t c = 0; c < p.in_dim(); ++c) {
      auto w = g.weight.row(c);
      for (std::size_t k = 0; k < p.out_dim(); ++k) w[k] += f[c] * d[k];
    }
    for (std::size_t k = 0; k < p.out_dim(); ++k) g.bias[k] += d[k];
  }
  return g;
}

TrainResult train_projector(std::span<const BackboneOutput> corpus, const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train_projector: empty corpus");
  return train_projector(corpus, cfg, Projector::initialize(corpus.front().main.channels(), cfg.out_dim, cfg.seed));
}

TrainResult train_projector(std::span<const BackboneOutput> corpus, const TrainConfig& cfg, Projector start) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train_projector: empty corpus");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<LcrView> views;
  views.reserve(corpus.size());
  for (const auto& b : corpus) views.push_back(prepare_view(b, cfg.eta, cfg.clusters, cfg.density));

  TrainResult r{std::move(start), {}};
  Projector& p = r.projector;
  Matrix vel_w(p.in_dim(), p.out_dim());
  std::vector<double> vel_b(p.out_dim(), 0.0);
  const double inv = 1.0 / static_cast<double>(views.size());

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<double> losses;
    Matrix gw(p.in_dim(), p.out_dim());
    std::vector<double> gb(p.out_dim(), 0.0);
    for (const auto& v : views) {
      const auto g = projector_gradient(p, v, cfg.repellence);
      losses.push_back(g.loss);
      for (std::size_t i = 0; i < gw.data().size(); ++i) gw.data()[i] += g.weight.data()[i];
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g.bias[k];
    }
    const double mean_loss = pairwise_sum(losses) * inv;
    if (!std::isfinite(mean_loss)) throw DivergenceError(step, "non-finite loss");
    r.trace.loss.push_back(mean_loss);

    const double mu = cfg.optimizer == Optimizer::momentum ? 0.9 : 0.0;
    for (std::size_t i = 0; i < gw.data().size(); ++i) {
      vel_w.data()[i] = mu * vel_w.data()[i] + gw.data()[i] * inv;
      p.weight.data()[i] -= cfg.learning_rate * vel_w.data()[i];
    }
    for (std::size_t k = 0; k < gb.size(); ++k) {
      vel_b[k] = mu * vel_b[k] + gb[k] * inv;
      p.bias[k] -= cfg.learning_rate * vel_b[k];
    }
    for (double w : p.weight.data()) {
      if (!std::isfinite(w)) throw DivergenceError(step, "non-finite projector weight");
    }
  }
  r.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.trace.checksum = p.checksum();
  return r;
}

void save_projector(const std::filesystem::path& dir, const Projector& p, const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "weight.scet", Tensor::from_matrix(p.weight));
  write_tensor(dir / "bias.scet", Tensor::from_vector(p.bias));
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
  meta << "in_dim=" << p.in_dim() << "\n"
       << "out_dim=" << p.out_dim() << "\n"
       << "seed=" << cfg.seed << "\n"
       << "steps=" << cfg.steps << "\n"
       << "checksum=" << hex64(p.checksum()) << "\n";
}

Projector load_projector(const std::filesystem::path& dir) {
  const Tensor w = read_tensor(dir / "weight.scet");
  const Tensor b = read_tensor(dir / "bias.scet");
  if (w.rank() != 2 || b.rank() != 1 || w.dims[1] != b.dims[0]) {
    throw std::runtime_error(dir.string() + ": projector tensors have inconsistent shapes");
  }
  return Projector{w.to_matrix(), b.data};
}

}  // namespace sce
