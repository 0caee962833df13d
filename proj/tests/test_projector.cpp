#include <doctest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "sce/projector.hpp"
#include "sce/synth.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

LcrView random_view(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  LcrView v;
  v.features = oracle::random_matrix(rng, n, d);
  std::uniform_int_distribution<std::size_t> cell(0, 7);
  for (std::size_t i = 0; i < n; ++i) {
    v.tokens.push_back(i);
    v.positions.push_back({cell(rng), cell(rng)});
    v.labels.push_back(i < n / 2 ? TokenKind::attentive : TokenKind::inattentive);
  }
  return v;
}

double view_loss(const Projector& p, const LcrView& v, const RepellenceConfig& r) {
  oracle::Rows phi(v.features.rows(), std::vector<double>(p.out_dim()));
  for (std::size_t i = 0; i < v.features.rows(); ++i) {
    for (std::size_t k = 0; k < p.out_dim(); ++k) {
      double s = p.bias[k];
      for (std::size_t c = 0; c < p.in_dim(); ++c) s += v.features(i, c) * p.weight(c, k);
      phi[i][k] = s;
    }
  }
  return oracle::lcr_loss(phi, v.positions, v.labels, r);
}

std::vector<BackboneOutput> small_corpus(std::size_t n) {
  std::vector<BackboneOutput> out;
  const auto spec = default_face_spec();
  for (std::size_t i = 0; i < n; ++i) {
    auto s = jitter_spec(spec, mix_seed(5, i), 0.05, 3.0);
    s.identity_seed = mix_seed(6, i);
    out.push_back(generate_backbone_output(s, mix_seed(7, i)));
  }
  return out;
}

}  // namespace

TEST_CASE("projection") {
  const GridGeometry geo{2, 2, 4};
  const FeatureGrid g{geo, Matrix(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, -1, 0, 2})};
  CHECK(project(Projector::identity(3), g).features == g.features);

  Projector b{Matrix(3, 2), {0.5, -1.5}};
  const auto c = project(b, g);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(c.features(t, 0) == 0.5);
    CHECK(c.features(t, 1) == -1.5);
  }
  CHECK(c.geometry == geo);

  const Projector r = Projector::initialize(3, 2, 11);
  const auto out = project(r, g);
  const double want = 4 * r.weight(0, 1) + 5 * r.weight(1, 1) + 6 * r.weight(2, 1) + r.bias[1];
  CHECK(out.features(1, 1) == doctest::Approx(want).epsilon(1e-15));
  CHECK_THROWS_AS(project(Projector::identity(2), g), std::invalid_argument);
}

TEST_CASE("initialization is seeded fan-in uniform with zero bias") {
  const Projector a = Projector::initialize(16, 8, 3), b = Projector::initialize(16, 8, 3);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != Projector::initialize(16, 8, 4).checksum());
  for (double w : a.weight.data()) CHECK(std::abs(w) <= 0.25);
  for (double v : a.bias) CHECK(v == 0.0);
  CHECK_THROWS_AS(Projector::initialize(4, 1, 0), std::invalid_argument);
}

TEST_CASE("parameter gradient matches central differences") {
  std::mt19937_64 rng(13);
  const RepellenceConfig r;
  const LcrView v = random_view(rng, 9, 5);
  Projector p = Projector::initialize(5, 4, 2);
  p.bias = {0.1, -0.2, 0.05, 0.3};
  const auto g = projector_gradient(p, v, r);
  CHECK(g.loss == doctest::Approx(view_loss(p, v, r)).epsilon(1e-12));
  const auto fw = oracle::central_difference(
      [&](const std::vector<double>& w) { return view_loss(Projector{Matrix(5, 4, w), p.bias}, v, r); },
      p.weight.data());
  CHECK(oracle::max_relative_error(g.weight.data(), fw) <= 1e-5);
  const auto fb = oracle::central_difference(
      [&](const std::vector<double>& b) { return view_loss(Projector{p.weight, b}, v, r); }, p.bias);
  CHECK(oracle::max_relative_error(g.bias, fb) <= 1e-5);
}

TEST_CASE("training") {
  const auto corpus = small_corpus(6);
  TrainConfig cfg;
  cfg.seed = 4;
  SUBCASE("zero steps returns the initial projector") {
    cfg.steps = 0;
    const auto r = train_projector(corpus, cfg);
    CHECK(r.trace.loss.empty());
    CHECK(r.projector.checksum() == Projector::initialize(32, 64, 4).checksum());
  }
  SUBCASE("loss decreases and runs repeat exactly") {
    cfg.steps = 40;
    const auto a = train_projector(corpus, cfg);
    const auto b = train_projector(corpus, cfg);
    CHECK(a.trace.loss.size() == 40);
    CHECK(a.trace.loss.back() < a.trace.loss.front());
    CHECK(a.trace.loss == b.trace.loss);
    CHECK(a.trace.checksum == b.trace.checksum);
    CHECK(a.projector.checksum() == a.trace.checksum);
  }
  SUBCASE("small steps never increase a single image's loss") {
    cfg.learning_rate = 1e-4;
    cfg.steps = 10;
    const auto many = small_corpus(20);
    for (std::size_t i = 0; i < many.size(); ++i) {
      const auto r = train_projector(std::span(many).subspan(i, 1), cfg);
      for (std::size_t s = 1; s < r.trace.loss.size(); ++s) CHECK(r.trace.loss[s] <= r.trace.loss[s - 1]);
    }
  }
  SUBCASE("the backbone is never modified") {
    Fnv1a before, after;
    for (const auto& b : corpus) before.update_doubles(b.main.features.data());
    cfg.steps = 3;
    train_projector(corpus, cfg);
    for (const auto& b : corpus) after.update_doubles(b.main.features.data());
    CHECK(before.digest() == after.digest());
  }
  SUBCASE("momentum also descends") {
    cfg.steps = 20;
    cfg.optimizer = Optimizer::momentum;
    const auto r = train_projector(corpus, cfg);
    CHECK(r.trace.loss.back() < r.trace.loss.front());
  }
  SUBCASE("divergence reports the step") {
    cfg.steps = 5;
    cfg.learning_rate = 1e308;
    CHECK_THROWS_AS(train_projector(corpus, cfg), DivergenceError);
  }
  SUBCASE("invalid configs are rejected") {
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train_projector(corpus, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_projector(std::span<const BackboneOutput>(), TrainConfig{}), std::invalid_argument);
  }
}

TEST_CASE("views hold attentive tokens then cluster centers") {
  const auto corpus = small_corpus(1);
  const LcrView v = prepare_view(corpus[0], 0.25, 4);
  CHECK(v.tokens.size() == 40);
  for (std::size_t i = 0; i < 36; ++i) CHECK(v.labels[i] == TokenKind::attentive);
  for (std::size_t i = 36; i < 40; ++i) CHECK(v.labels[i] == TokenKind::inattentive);
  CHECK(v.features.cols() == 32);
}

TEST_CASE("checkpoints roundtrip") {
  const fs::path dir = fs::temp_directory_path() / "sce_projector_ckpt";
  const Projector p = Projector::initialize(6, 3, 9);
  TrainConfig cfg;
  cfg.seed = 9;
  save_projector(dir, p, cfg);
  const Projector q = load_projector(dir);
  CHECK(q.weight == p.weight);
  CHECK(q.bias == p.bias);
  CHECK(fs::exists(dir / "meta.txt"));
  CHECK_THROWS(load_projector(dir / "missing"));
}
