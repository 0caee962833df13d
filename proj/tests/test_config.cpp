#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sce/config.hpp"
#include "sce/corpus.hpp"
#include "sce/experiments.hpp"
#include "sce/tensor.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "sce_config_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SCE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.eta == 0.25);
  CHECK(c.kc == 4);
  CHECK(c.r_aa == 5.0);
  CHECK(c.r_ai == 5.0);
  CHECK(c.r_ii == 2.0);
  CHECK(c.heatmaps == 50);
  CHECK(c.resize == 136);
  CHECK(c.crop == 96);
  CHECK(c.patch == 8);
  CHECK(c.pairs_same == 500);
  CHECK(c.pairs_different == 500);
  CHECK_NOTHROW(c.validate());
  const auto spec = c.face_spec();
  CHECK(spec.geometry == GridGeometry{12, 12, 8});
  const auto t = c.projector_config();
  CHECK(t.learning_rate == 1e-3);
  CHECK(t.steps == 200);
  CHECK(t.optimizer == Optimizer::gradient_descent);
}

TEST_CASE("key=value text roundtrips and overrides") {
  ExperimentConfig c;
  c.eta = 0.1;
  c.rho_verbatim = true;
  c.reg_optimizer = Optimizer::gradient_descent;
  c.seed = 123456789012345ULL;
  c.tau = 0.0123456789;
  const ExperimentConfig back = parse_config(c.dump());
  CHECK(back.dump() == c.dump());
  CHECK(back.eta == 0.1);
  CHECK(back.seed == 123456789012345ULL);
  CHECK(back.tau == 0.0123456789);

  const auto p = parse_config("# comment\n  kc = 8 \n\ndrop-rate=0.5  # trailing\ncosine=false\n");
  CHECK(p.kc == 8);
  CHECK(p.drop_rate == 0.5);
  CHECK_FALSE(p.cosine);
  for (const auto& k : ExperimentConfig::keys()) CHECK(k.find('_') == std::string::npos);
}

TEST_CASE("bad config text is rejected") {
  CHECK_THROWS_AS(parse_config("nope=1"), ConfigError);
  CHECK_THROWS_AS(parse_config("kc"), ConfigError);
  CHECK_THROWS_AS(parse_config("kc=-1"), ConfigError);
  CHECK_THROWS_AS(parse_config("eta=abc"), ConfigError);
  CHECK_THROWS_AS(parse_config("cosine=maybe"), ConfigError);
  CHECK_THROWS_AS(parse_config("proj-optimizer=adam"), ConfigError);
  ExperimentConfig c;
  c.crop = 144;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.crop = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.eta = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.r_ii = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sample directories roundtrip") {
  const fs::path dir = scratch("corpus");
  ExperimentConfig cfg;
  const fs::path manifest = cmd_gen(cfg, 3, dir);
  const auto dirs = read_manifest(manifest);
  REQUIRE(dirs.size() == 3);
  const Sample s = read_sample(dirs[1], 8);
  const Sample want = corpus_sample(cfg, 1);
  CHECK(s.backbone.main.features == want.backbone.main.features);
  CHECK(s.backbone.aux.features == want.backbone.aux.features);
  CHECK(s.backbone.keys == want.backbone.keys);
  CHECK(s.backbone.cls_query == want.backbone.cls_query);
  CHECK(s.landmarks == want.landmarks);
  CHECK(read_tensor(dirs[1] / "tokens.scet").dims == std::vector<std::uint64_t>{12, 12, 32});
  CHECK(slurp(dirs[1] / "landmarks.csv").rfind("landmark_index,x_px,y_px\n", 0) == 0);

  fs::remove(dirs[2] / "aux.scet");
  const Sample no_aux = read_sample(dirs[2], 8);
  CHECK(no_aux.backbone.aux.features == no_aux.backbone.main.features);

  std::ofstream(dirs[0] / "landmarks.csv") << "landmark_index,x_px,y_px\n0,1.5\n";
  CHECK_THROWS_AS(read_sample(dirs[0], 8), CorpusError);
}

TEST_CASE("corpus generation is deterministic") {
  ExperimentConfig cfg;
  const auto a = hash_corpus_files(cmd_gen(cfg, 4, scratch("gen_a")));
  const auto b = hash_corpus_files(cmd_gen(cfg, 4, scratch("gen_b")));
  CHECK(a == b);
  cfg.seed = 8;
  CHECK(hash_corpus_files(cmd_gen(cfg, 4, scratch("gen_c"))) != a);
  const auto empty = cmd_gen(cfg, 0, scratch("gen_empty"));
  CHECK(read_manifest(empty).empty());
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("cli");
  const std::string out = (dir / "corpus").string();
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("gen --count 3 --out " + out) == 0);
  CHECK(run_cli("gen --count 0 --out " + (dir / "empty").string()) == 0);
  CHECK(run_cli("gen --count 1") == 1);
  CHECK(run_cli("gen --eta 1.5 --out " + out) == 1);
  CHECK(run_cli("gen --kc x --out " + out) == 1);
  CHECK(run_cli("gen --config " + (dir / "missing.cfg").string() + " --out " + out) == 1);
  const std::string manifest = (dir / "corpus" / "manifest.txt").string();
  CHECK(run_cli("train-projector --proj-steps 2 --manifest " + (dir / "none.txt").string() + " --out " +
                (dir / "ck").string()) == 2);
  CHECK(run_cli("train-projector --proj-steps 2 --proj-lr 1e308 --manifest " + manifest + " --out " +
                (dir / "ck").string()) == 3);
  CHECK(run_cli("eval-match --pairs-same 1 --pairs-different 1 --checkpoint " + (dir / "nock").string() + " --out " +
                (dir / "m").string()) == 2);
  CHECK(run_cli("ablate --axis sideways --out " + (dir / "a").string()) == 1);
}

TEST_CASE("config file values can be overridden by flags") {
  const fs::path dir = scratch("override");
  std::ofstream(dir / "exp.cfg") << "proj-steps=3\nkc=2\n";
  REQUIRE(run_cli("gen --count 2 --out " + (dir / "c").string()) == 0);
  const std::string base = "train-projector --config " + (dir / "exp.cfg").string() + " --manifest " +
                           (dir / "c" / "manifest.txt").string();
  REQUIRE(run_cli(base + " --out " + (dir / "a").string()) == 0);
  REQUIRE(run_cli(base + " --proj-steps 5 --out " + (dir / "b").string()) == 0);
  std::stringstream a(slurp(dir / "a" / "trace.csv")), b(slurp(dir / "b" / "trace.csv"));
  std::size_t na = 0, nb = 0;
  for (std::string line; std::getline(a, line);) ++na;
  for (std::string line; std::getline(b, line);) ++nb;
  CHECK(na == 4);
  CHECK(nb == 6);
}
