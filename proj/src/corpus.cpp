#include "sce/corpus.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "sce/tensor.hpp"

namespace sce {

namespace fs = std::filesystem;

namespace {

Tensor grid_tensor(const FeatureGrid& g) {
  return Tensor{DType::f64, {g.geometry.grid_h, g.geometry.grid_w, g.channels()}, g.features.data()};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const fs::path& origin) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CorpusError(origin.string() + ": cannot parse number '" + s + "'");
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_landmarks_csv(const fs::path& path, const std::vector<Pixel>& landmarks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << "landmark_index,x_px,y_px\n";
  for (std::size_t l = 0; l < landmarks.size(); ++l) {
    out << l << ',' << format_double(landmarks[l].x) << ',' << format_double(landmarks[l].y) << '\n';
  }
}

std::vector<Pixel> read_landmarks_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("landmark_index", 0) != 0) {
    throw CorpusError(path.string() + ": missing landmark_index,x_px,y_px header");
  }
  std::vector<Pixel> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 3) throw CorpusError(path.string() + ": expected 3 columns: " + line);
    if (static_cast<std::size_t>(parse_double(cells[0], path)) != out.size()) {
      throw CorpusError(path.string() + ": landmark indices must be 0..L-1 in order");
    }
    out.push_back({parse_double(cells[1], path), parse_double(cells[2], path)});
  }
  return out;
}

void write_sample(const fs::path& dir, const Sample& s) {
  fs::create_directories(dir);
  write_tensor(dir / "tokens.scet", grid_tensor(s.backbone.main));
  write_tensor(dir / "aux.scet", grid_tensor(s.backbone.aux));
  write_tensor(dir / "cls_query.scet", Tensor::from_vector(s.backbone.cls_query));
  write_tensor(dir / "keys.scet", Tensor::from_matrix(s.backbone.keys));
  write_landmarks_csv(dir / "landmarks.csv", s.landmarks);
}

Sample read_sample(const fs::path& dir, std::size_t patch_size) {
  const Tensor tokens = read_tensor(dir / "tokens.scet");
  if (tokens.rank() != 3) throw CorpusError((dir / "tokens.scet").string() + ": expected H x W x d");
  const GridGeometry geo{tokens.dims[0], tokens.dims[1], patch_size};
  Sample s;
  s.backbone.main = assemble_feature_grid(tokens, geo);
  s.backbone.aux = fs::exists(dir / "aux.scet") ? assemble_feature_grid(read_tensor(dir / "aux.scet"), geo) : s.backbone.main;
  s.backbone.cls_query = read_tensor(dir / "cls_query.scet").data;
  s.backbone.keys = read_tensor(dir / "keys.scet").to_matrix();
  if (s.backbone.keys.rows() != geo.token_count() || s.backbone.keys.cols() != s.backbone.cls_query.size()) {
    throw CorpusError(dir.string() + ": keys must be N x d with d = cls_query length");
  }
  s.landmarks = read_landmarks_csv(dir / "landmarks.csv");
  return s;
}

void write_manifest(const fs::path& path, const std::vector<fs::path>& dirs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& d : dirs) out << d.generic_string() << '\n';
}

std::vector<fs::path> read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<fs::path> out;
  const fs::path base = path.parent_path();
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const fs::path p(line);
    out.push_back(p.is_absolute() ? p : base / p);
  }
  return out;
}

std::vector<Sample> load_corpus(const fs::path& manifest, std::size_t patch_size) {
  std::vector<Sample> out;
  for (const auto& d : read_manifest(manifest)) out.push_back(read_sample(d, patch_size));
  return out;
}

std::uint64_t hash_corpus_files(const fs::path& manifest) {
  Fnv1a h;
  const std::string text = read_text(manifest);
  h.update(text.data(), text.size());
  for (const auto& d : read_manifest(manifest)) {
    for (const char* name : {"tokens.scet", "aux.scet", "cls_query.scet", "keys.scet", "landmarks.csv"}) {
      const std::string bytes = read_text(d / name);
      h.update(bytes.data(), bytes.size());
    }
  }
  return h.digest();
}

}  // namespace sce
