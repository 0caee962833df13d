#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "sce/config.hpp"
#include "sce/corpus.hpp"
#include "sce/experiments.hpp"
#include "sce/tensor.hpp"

namespace fs = std::filesystem;
using namespace sce;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::string manifest;
  std::string checkpoint;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key=value configuration file");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--manifest", c.manifest, "corpus manifest");
  app->add_option("--checkpoint", c.checkpoint, "projector checkpoint directory");
  const ExperimentConfig defaults;
  for (const auto& key : ExperimentConfig::keys()) {
    const std::string v = defaults.get(key);
    if (v == "true" || v == "false") {
      c.flags[key] = false;
      c.options[key] = app->add_flag("--" + key, c.flags[key], "override " + key + " (default " + v + ")");
    } else {
      c.options[key] = app->add_option("--" + key, c.values[key], "override " + key + " (default " + v + ")");
    }
  }
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& [key, opt] : c.options) {
    if (opt->count() == 0) continue;
    const auto f = c.flags.find(key);
    cfg.set(key, f != c.flags.end() ? (f->second ? "true" : "false") : c.values.at(key));
  }
  cfg.validate();
  return cfg;
}

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required ") + flag);
  return value;
}

std::optional<fs::path> optional_path(const std::string& v) {
  if (v.empty()) return std::nullopt;
  return fs::path(v);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-stage landmark features: token split, clustering, LCR projector and evaluation"};
  app.require_subcommand(1);

  std::map<CLI::App*, Common> commons;
  std::string axis;
  SimmapSpec simmap;
  std::size_t dpc_sample = 0;

  auto* gen = app.add_subcommand("gen", "write a synthetic corpus and its manifest");
  auto* train = app.add_subcommand("train-projector", "train the projector on a corpus");
  auto* match = app.add_subcommand("eval-match", "landmark matching on generated pairs");
  auto* detect = app.add_subcommand("eval-detect", "few-shot landmark detection");
  auto* ablate = app.add_subcommand("ablate", "hyperparameter sweeps");
  auto* sim = app.add_subcommand("export-simmap", "similarity map of one landmark as PGM");
  auto* dpc = app.add_subcommand("export-dpc", "decision graph and correspondence matrix of one sample");
  for (auto* sub : {gen, train, match, detect, ablate, sim, dpc}) add_common(sub, commons[sub]);
  ablate->add_option("--axis", axis, "eta | kc | repellence | drop_rate")->required();
  sim->add_option("--pair", simmap.pair, "pair index");
  sim->add_option("--landmark", simmap.landmark, "landmark index");
  dpc->add_option("--sample", dpc_sample, "manifest entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    const Common& common = commons.at(app.get_subcommands().front());
    const ExperimentConfig cfg = resolve(common);
    if (gen->parsed()) {
      const auto m = cmd_gen(cfg, cfg.count, require(common.out, "--out"));
      std::cout << "manifest " << m.string() << " (" << cfg.count << " samples, hash "
                << hex64(hash_corpus_files(m)) << ")\n";
    } else if (train->parsed()) {
      const auto res = cmd_train_projector(cfg, require(common.manifest, "--manifest"), require(common.out, "--out"));
      std::cout << "loss " << fmt(res.trace.loss.front()) << " -> " << fmt(res.trace.loss.back()) << " in "
                << fmt(res.trace.seconds) << " s, checksum " << hex64(res.projector.checksum()) << "\n";
    } else if (match->parsed()) {
      const auto res = cmd_eval_match(cfg, optional_path(common.checkpoint), require(common.out, "--out"));
      std::cout << (common.checkpoint.empty() ? "baseline" : "projector") << ": same " << fmt(res.mean_same)
                << " px, different " << fmt(res.mean_different) << " px\n";
    } else if (detect->parsed()) {
      const auto rep = cmd_eval_detect(cfg, require(common.manifest, "--manifest"),
                                       require(common.checkpoint, "--checkpoint"), require(common.out, "--out"),
                                       std::cerr);
      std::cout << "budget " << rep.budget << ": IOD " << fmt(rep.mean()) << " +- " << fmt(rep.stddev())
                << " %, mean-position baseline " << fmt(rep.baseline_pct.front()) << " %\n";
    } else if (ablate->parsed()) {
      const auto a = parse_axis(axis);
      if (!a) throw UsageError("unknown axis '" + axis + "'");
      const fs::path manifest = *a == AblationAxis::drop_rate ? fs::path(common.manifest)
                                                              : fs::path(require(common.manifest, "--manifest"));
      for (const auto& r : cmd_ablate(cfg, *a, manifest, optional_path(common.checkpoint), require(common.out, "--out"))) {
        std::cout << axis << '=' << r.label << ": same " << fmt(r.mean_same) << " px, different "
                  << fmt(r.mean_different) << " px\n";
      }
    } else if (sim->parsed()) {
      const Pixel p = cmd_export_simmap(cfg, simmap, optional_path(common.checkpoint), require(common.out, "--out"));
      std::cout << "best match (" << p.x << ", " << p.y << ")\n";
    } else if (dpc->parsed()) {
      cmd_export_dpc(cfg, require(common.manifest, "--manifest"), dpc_sample, optional_path(common.checkpoint),
                     require(common.out, "--out"));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
