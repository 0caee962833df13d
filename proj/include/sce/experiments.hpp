#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sce/config.hpp"
#include "sce/matching.hpp"
#include "sce/metrics.hpp"
#include "sce/projector.hpp"

namespace sce {

namespace fs = std::filesystem;

/// Corpus sample `index` under the config's master seed: a jittered face
/// with its own identity. The held-out stream never collides with it.
Sample corpus_sample(const ExperimentConfig& cfg, std::size_t index, bool held_out = false);
std::vector<EvalPair> evaluation_pairs(const ExperimentConfig& cfg);

/// Writes sample_NNNNN directories and manifest.txt under `out`.
fs::path cmd_gen(const ExperimentConfig& cfg, std::size_t count, const fs::path& out);

/// Checkpoint files plus trace.csv (step,loss) under `out`.
TrainResult cmd_train_projector(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& out);

/// match.csv (pair_id,landmark_id,kind,err_px) and match_summary.csv under
/// `out`. Without a checkpoint the raw backbone features are matched.
MatchResult cmd_eval_match(const ExperimentConfig& cfg, const std::optional<fs::path>& checkpoint, const fs::path& out);

struct DetectReport {
  std::size_t budget = 0;  // after clamping to the corpus size
  std::vector<double> mean_pct;           // one per repeat
  std::vector<double> baseline_pct;       // mean-position predictor, one per repeat
  DetectionMetrics first;                 // repeat 0, per sample and landmark
  double mean() const;
  double stddev() const;
};

/// detection.csv (sample_id,landmark_id,err_iod_pct) for the first repeat and
/// detection_repeats.csv (repeat,seed,mean_iod_pct,baseline_iod_pct).
DetectReport cmd_eval_detect(const ExperimentConfig& cfg, const fs::path& manifest, const fs::path& checkpoint,
                             const fs::path& out, std::ostream& log);

enum class AblationAxis { eta, kc, repellence, drop_rate };
std::optional<AblationAxis> parse_axis(const std::string& name);

struct AblationRow {
  std::string label;
  double mean_same = 0.0;
  double mean_different = 0.0;
  double final_loss = 0.0;  // NaN when no training was involved
};

/// ablation_<axis>.csv (setting,mean_same_px,mean_diff_px,final_loss). The
/// drop-rate axis evaluates the checkpoint, or raw features without one.
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& cfg, AblationAxis axis, const fs::path& manifest,
                                    const std::optional<fs::path>& checkpoint, const fs::path& out);

struct SimmapSpec {
  std::size_t pair = 0;
  std::size_t landmark = 0;
};

/// simmap.pgm: cosine similarity of the reference landmark's feature over
/// the test image, mapped from [-1, 1] to [0, 255]. Returns the best match.
Pixel cmd_export_simmap(const ExperimentConfig& cfg, const SimmapSpec& spec, const std::optional<fs::path>& checkpoint,
                        const fs::path& out);

/// decision_graph.csv (token,rho,delta,score,center) and correspondence.csv
/// (the row-stochastic matrix over attentive tokens then centers) for one
/// corpus sample.
void cmd_export_dpc(const ExperimentConfig& cfg, const fs::path& manifest, std::size_t sample,
                    const std::optional<fs::path>& checkpoint, const fs::path& out);

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, const std::vector<double>& values,
               double lo, double hi);

}  // namespace sce
