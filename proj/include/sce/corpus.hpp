#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "sce/synth.hpp"

namespace sce {

// A sample directory holds tokens.scet (H_p x W_p x d), aux.scet
// (H_p x W_p x d_aux, optional), cls_query.scet (d), keys.scet (N x d) and
// landmarks.csv (landmark_index,x_px,y_px). A manifest lists one sample
// directory per line, relative paths resolved against the manifest's folder.

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_sample(const std::filesystem::path& dir, const Sample& s);
/// Without aux.scet the main tokens double as clustering features.
Sample read_sample(const std::filesystem::path& dir, std::size_t patch_size);

void write_landmarks_csv(const std::filesystem::path& path, const std::vector<Pixel>& landmarks);
std::vector<Pixel> read_landmarks_csv(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<std::filesystem::path>& dirs);
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& path);

std::vector<Sample> load_corpus(const std::filesystem::path& manifest, std::size_t patch_size);

/// FNV-1a over the manifest text and every file it references, in order.
std::uint64_t hash_corpus_files(const std::filesystem::path& manifest);

}  // namespace sce
