#include "sce/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "sce/corpus.hpp"
#include "sce/dpc.hpp"
#include "sce/lcr.hpp"
#include "sce/partition.hpp"
#include "sce/regressor.hpp"

namespace sce {

namespace {

constexpr std::uint64_t kCorpusStream = 0x636f7270;
constexpr std::uint64_t kHeldOutStream = 0x686f6c64;
constexpr std::uint64_t kPairStream = 0x70616972;
constexpr std::uint64_t kRegressorStream = 0x72656772;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path, const char* header) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::vector<BackboneOutput> backbones(std::vector<Sample>&& samples) {
  std::vector<BackboneOutput> out;
  out.reserve(samples.size());
  for (auto& s : samples) out.push_back(std::move(s.backbone));
  return out;
}

std::vector<Sample> load_checked(const ExperimentConfig& cfg, const fs::path& manifest) {
  auto samples = load_corpus(manifest, cfg.patch);
  for (const auto& s : samples) {
    if (s.backbone.main.geometry.image_w() != cfg.crop || s.backbone.main.geometry.image_h() != cfg.crop) {
      throw CorpusError(manifest.string() + ": sample geometry does not match crop " + std::to_string(cfg.crop));
    }
  }
  return samples;
}

FeatureExtractor extractor_for(const std::optional<fs::path>& checkpoint) {
  if (!checkpoint) return raw_features();
  return projected_features(load_projector(*checkpoint));
}

}  // namespace

Sample corpus_sample(const ExperimentConfig& cfg, std::size_t index, bool held_out) {
  const std::uint64_t s = mix_seed(mix_seed(cfg.seed, held_out ? kHeldOutStream : kCorpusStream), index);
  SyntheticFaceSpec spec = jitter_spec(cfg.face_spec(), mix_seed(s, 0), cfg.tps_sigma, cfg.shift_sigma);
  spec.identity_seed = mix_seed(s, 1);
  return generate_sample(spec, mix_seed(s, 2));
}

std::vector<EvalPair> evaluation_pairs(const ExperimentConfig& cfg) {
  return make_pair_batch(cfg.face_spec(), cfg.pairs_same, cfg.pairs_different, mix_seed(cfg.seed, kPairStream),
                         cfg.tps_sigma, cfg.shift_sigma);
}

fs::path cmd_gen(const ExperimentConfig& cfg, std::size_t count, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  std::vector<fs::path> dirs;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu", i);
    write_sample(out / name, corpus_sample(cfg, i));
    dirs.emplace_back(name);
  }
  const fs::path manifest = out / "manifest.txt";
  write_manifest(manifest, dirs);
  return manifest;
}

TrainResult cmd_train_projector(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& out) {
  cfg.validate();
  const auto corpus = backbones(load_checked(cfg, manifest));
  if (corpus.empty()) throw CorpusError(manifest.string() + ": empty corpus");
  const TrainConfig tc = cfg.projector_config();
  TrainResult res = train_projector(corpus, tc);
  save_projector(out, res.projector, tc);
  auto csv = open_csv(out / "trace.csv", "step,loss");
  for (std::size_t s = 0; s < res.trace.loss.size(); ++s) csv << s << ',' << num(res.trace.loss[s]) << '\n';
  return res;
}

MatchResult cmd_eval_match(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint, const fs::path& out) {
  cfg.validate();
  const auto extract = extractor_for(checkpoint);
  const MatchResult res = run_matching(evaluation_pairs(cfg), extract, cfg.drop_rate);
  auto csv = open_csv(out / "match.csv", "pair_id,landmark_id,kind,err_px");
  for (const auto& r : res.records) {
    csv << r.pair << ',' << r.landmark << ',' << (r.kind == PairKind::same ? "same" : "different") << ','
        << num(r.error_px) << '\n';
  }
  auto summary = open_csv(out / "match_summary.csv", "features,mean_same_px,mean_diff_px,failed_queries");
  summary << (checkpoint ? "projector" : "baseline") << ',' << num(res.mean_same) << ',' << num(res.mean_different)
          << ',' << res.failed_queries << '\n';
  return res;
}

double DetectReport::mean() const {
  return mean_pct.empty() ? 0.0 : std::accumulate(mean_pct.begin(), mean_pct.end(), 0.0) / mean_pct.size();
}

double DetectReport::stddev() const {
  if (mean_pct.size() < 2) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double v : mean_pct) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(mean_pct.size() - 1));
}

DetectReport cmd_eval_detect(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& checkpoint,
                             const fs::path& out, std::ostream& log) {
  cfg.validate();
  const Projector projector = load_projector(checkpoint);
  const auto corpus = load_checked(cfg, manifest);
  if (corpus.empty()) throw CorpusError(manifest.string() + ": empty corpus");
  if (cfg.detect_test == 0) throw ConfigError("detect-test must be positive");

  DetectReport rep;
  rep.budget = std::min(cfg.budget, corpus.size());
  if (rep.budget < cfg.budget) {
    log << "warning: budget " << cfg.budget << " exceeds the corpus; using " << rep.budget << " samples\n";
  }
  std::vector<AnnotatedSample> train;
  for (std::size_t i = 0; i < rep.budget; ++i) train.push_back({&corpus[i].backbone, corpus[i].landmarks});

  std::vector<Sample> held;
  held.reserve(cfg.detect_test);
  for (std::size_t i = 0; i < cfg.detect_test; ++i) held.push_back(corpus_sample(cfg, i, true));
  std::vector<AnnotatedSample> test;
  std::vector<std::vector<Pixel>> truth;
  for (const auto& s : held) {
    test.push_back({&s.backbone, s.landmarks});
    truth.push_back(s.landmarks);
  }

  const auto spec = cfg.face_spec();
  const std::vector<std::vector<Pixel>> baseline(test.size(), mean_landmark_positions(train));
  const double base = inter_ocular_error(baseline, truth, spec.left_eye, spec.right_eye).mean_pct;

  auto reps = open_csv(out / "detection_repeats.csv", "repeat,seed,mean_iod_pct,baseline_iod_pct");
  for (std::size_t r = 0; r < cfg.detect_repeats; ++r) {
    const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, kRegressorStream), r);
    const auto trained = train_regressor(train, projector, cfg.regressor_config(seed));
    const auto m = inter_ocular_error(predict_landmarks(trained.params, projector, test), truth, spec.left_eye,
                                      spec.right_eye);
    rep.mean_pct.push_back(m.mean_pct);
    rep.baseline_pct.push_back(base);
    reps << r << ',' << seed << ',' << num(m.mean_pct) << ',' << num(base) << '\n';
    if (r == 0) rep.first = m;
  }

  auto csv = open_csv(out / "detection.csv", "sample_id,landmark_id,err_iod_pct");
  for (std::size_t i = 0; i < rep.first.errors_pct.size(); ++i) {
    for (std::size_t l = 0; l < rep.first.errors_pct[i].size(); ++l) {
      csv << i << ',' << l << ',' << num(rep.first.errors_pct[i][l]) << '\n';
    }
  }
  return rep;
}

std::optional<AblationAxis> parse_axis(const std::string& name) {
  if (name == "eta") return AblationAxis::eta;
  if (name == "kc") return AblationAxis::kc;
  if (name == "repellence") return AblationAxis::repellence;
  if (name == "drop_rate" || name == "drop-rate") return AblationAxis::drop_rate;
  return std::nullopt;
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg, AblationAxis axis, const fs::path& manifest,
                                    const std::optional<fs::path>& checkpoint, const fs::path& out) {
  cfg.validate();
  const auto pairs = evaluation_pairs(cfg);
  std::vector<AblationRow> rows;
  const char* name = "drop_rate";

  if (axis == AblationAxis::drop_rate) {
    const auto extract = extractor_for(checkpoint);
    for (double rate : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9}) {
      const auto m = run_matching(pairs, extract, rate);
      rows.push_back({num(rate), m.mean_same, m.mean_different, std::numeric_limits<double>::quiet_NaN()});
    }
  } else {
    const auto corpus = backbones(load_checked(cfg, manifest));
    if (corpus.empty()) throw CorpusError(manifest.string() + ": empty corpus");
    std::vector<std::pair<std::string, ExperimentConfig>> settings;
    if (axis == AblationAxis::eta) {
      name = "eta";
      for (double eta : {0.1, 0.25, 0.5}) {
        ExperimentConfig c = cfg;
        c.eta = eta;
        settings.emplace_back(num(eta), c);
      }
    } else if (axis == AblationAxis::kc) {
      name = "kc";
      for (std::size_t k : {1, 2, 4, 8}) {
        ExperimentConfig c = cfg;
        c.kc = k;
        settings.emplace_back(std::to_string(k), c);
      }
    } else {
      name = "repellence";
      settings.emplace_back("all", cfg);
      for (const char* drop : {"no-att-att", "no-att-inatt", "no-inatt-inatt"}) {
        ExperimentConfig c = cfg;
        const std::string d = drop;
        (d == "no-att-att" ? c.r_aa : d == "no-att-inatt" ? c.r_ai : c.r_ii) = 0.0;
        settings.emplace_back(d, c);
      }
    }
    for (const auto& [label, c] : settings) {
      c.validate();
      const auto trained = train_projector(corpus, c.projector_config());
      const auto m = run_matching(pairs, projected_features(trained.projector), c.drop_rate);
      rows.push_back({label, m.mean_same, m.mean_different, trained.trace.loss.back()});
    }
  }

  auto csv = open_csv(out / ("ablation_" + std::string(name) + ".csv"), "setting,mean_same_px,mean_diff_px,final_loss");
  for (const auto& r : rows) {
    csv << r.label << ',' << num(r.mean_same) << ',' << num(r.mean_different) << ','
        << (std::isnan(r.final_loss) ? std::string() : num(r.final_loss)) << '\n';
  }
  return rows;
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, const std::vector<double>& values,
               double lo, double hi) {
  if (values.size() != width * height) throw std::invalid_argument("write_pgm: size mismatch");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
}

Pixel cmd_export_simmap(const ExperimentConfig& cfg, const SimmapSpec& spec, const std::optional<fs::path>& checkpoint,
                        const fs::path& out) {
  cfg.validate();
  const auto pairs = evaluation_pairs(cfg);
  if (spec.pair >= pairs.size()) throw std::invalid_argument("pair index out of range");
  const auto& pr = pairs[spec.pair];
  if (spec.landmark >= pr.reference.landmarks.size()) throw std::invalid_argument("landmark index out of range");
  const auto extract = extractor_for(checkpoint);
  const auto ref = extract(pr.reference.backbone), test = extract(pr.test.backbone);
  const auto& geo = ref.geometry;
  const auto ref_map = bilinear_upsample(ref, geo.image_h(), geo.image_w());
  const auto test_map = bilinear_upsample(test, geo.image_h(), geo.image_w());
  const Pixel q = pr.reference.landmarks[spec.landmark];
  const auto qx = static_cast<std::size_t>(std::clamp(std::round(q.x), 0.0, geo.image_w() - 1.0));
  const auto qy = static_cast<std::size_t>(std::clamp(std::round(q.y), 0.0, geo.image_h() - 1.0));
  write_pgm(out / "simmap.pgm", test_map.width, test_map.height, similarity_map(test_map, ref_map.at(qx, qy)), -1.0,
            1.0);
  return match_landmark(ref_map, test_map, q);
}

void cmd_export_dpc(const ExperimentConfig& cfg, const fs::path& manifest, std::size_t sample,
                    const std::optional<fs::path>& checkpoint, const fs::path& out) {
  cfg.validate();
  const auto dirs = read_manifest(manifest);
  if (sample >= dirs.size()) throw std::invalid_argument("sample index out of range");
  const Sample s = read_sample(dirs[sample], cfg.patch);
  const auto& b = s.backbone;

  const auto part = split_tokens(cls_similarity(b.cls_query, b.keys), cfg.eta);
  const auto ca = cluster_inattentive(b.aux, part, cfg.kc, cfg.density());
  auto graph = open_csv(out / "decision_graph.csv", "token,rho,delta,score,center");
  for (std::size_t m = 0; m < ca.inattentive.size(); ++m) {
    const bool center = std::binary_search(ca.centers.begin(), ca.centers.end(), m);
    graph << ca.inattentive[m] << ',' << num(ca.rho[m]) << ',' << num(ca.delta[m]) << ',' << num(ca.score[m]) << ','
          << (center ? 1 : 0) << '\n';
  }

  const LcrView view = prepare_view(b, cfg.eta, cfg.kc, cfg.density());
  Matrix phi = view.features;
  if (checkpoint) {
    const Projector p = load_projector(*checkpoint);
    phi = project(p, FeatureGrid{GridGeometry{1, view.features.rows(), 1}, view.features}).features;
  }
  const Matrix P = correspondence_matrix(phi, cfg.tau, cfg.cosine);
  std::string header = "token";
  for (std::size_t j = 0; j < view.tokens.size(); ++j) header += ",t" + std::to_string(view.tokens[j]);
  auto corr = open_csv(out / "correspondence.csv", header.c_str());
  for (std::size_t i = 0; i < P.rows(); ++i) {
    corr << view.tokens[i];
    for (double v : P.row(i)) corr << ',' << num(v);
    corr << '\n';
  }
}

}  // namespace sce
