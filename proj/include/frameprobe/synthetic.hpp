#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frameprobe/corpus.hpp"
#include "frameprobe/gateway.hpp"

namespace frameprobe {

/// Shape of a generated offline corpus. Titles are invented word pairs, images
/// are small noise PNGs, and captions never mention the title.
struct SyntheticSpec {
  int suspect = 50;
  int clean = 50;
  int excluded = 0;
  int main_frames = 100;
  int neutral_frames = 40;
  int width = 16;
  int height = 8;
  std::vector<std::string> genres{"drama", "action", "comedy", "horror"};
  bool captions = true;
  bool covariates = true;
  std::uint64_t seed = 0;
};

/// Writes images and `manifest.json` under `dir` and returns the loaded manifest.
CorpusManifest write_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Recall settings for a mock model that has seen the suspect group.
struct MockRecall {
  double suspect_main = 0.70;
  double suspect_neutral = 0.34;
  double clean_main = 0.002;
  double clean_neutral = 0.002;
  double suspect_caption = 0.25;
  double clean_caption = 0.002;
  double suspect_mcqa = 0.85;
  double clean_mcqa = 0.40;
  double suspect_sharpness = 2.5;
  double clean_sharpness = 2.5;
};

/// A complete profile for `genres`: recall for every (group, kind, mode) plus a
/// decoy confusion pool per genre.
MockProfile synthetic_profile(const std::vector<std::string>& genres, const MockRecall& recall,
                              std::uint64_t seed);

/// Mock descriptor with every capability and `max_images` images per prompt.
BackendDescriptor synthetic_descriptor(std::string name, int max_images = 4);

/// Backend config holding one mock backend.
BackendConfig synthetic_backend_config(const std::string& name, const MockProfile& profile,
                                       int max_images = 4);

}  // namespace frameprobe
