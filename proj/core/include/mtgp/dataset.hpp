#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mtgp/image.hpp"
#include "mtgp/task_spec.hpp"

namespace mtgp::data {

enum class Split { Train, Test };

/// A labelled image collection with a train/test split tag per item.
struct Dataset {
  std::string name;
  std::vector<Image> images;
  std::vector<int> labels;  // dense, in [0, num_classes)
  std::vector<Split> splits;
  int num_classes = 0;
};

/// Decode a binary PGM ("P5", maxval <= 255). Header comments and arbitrary
/// whitespace are accepted; pixels are scaled to [0, 1].
Image parse_pgm(const std::string& bytes);

/// Encode as binary PGM with maxval 255 (values clamped to [0, 1]).
std::string write_pgm(const Image& img);

Image load_pgm_file(const std::filesystem::path& path);

/// Load `root/manifest.csv` (header `path,label,split`) and the images it
/// references. Label strings map to dense ids in first-appearance order.
Dataset load_dataset(const std::filesystem::path& root);

/// Write manifest.csv plus one PGM per item under `root`.
void save_dataset(const Dataset& ds, const std::filesystem::path& root);

/// View a Dataset as an evolution-ready task.
mt::TaskSpec to_task(const Dataset& ds);

/// Parameters of the deterministic synthetic benchmark pair.
struct SynthSpec {
  int height = 32;
  int width = 32;
  int train_per_class = 10;
  int test_per_class = 100;
  double noise_std = 0.05;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Task A ("orientation"): gratings at one of four orientations, fixed
/// frequency, random phase. Task B ("frequency"): low- vs high-frequency
/// gratings at random orientation. Random phase keeps raw pixels near chance
/// for a linear classifier while oriented/band-pass features separate well.
enum class SynthTask { Orientation, Frequency };

Dataset generate_synth(const SynthSpec& spec, SynthTask task);

std::pair<mt::TaskSpec, mt::TaskSpec> generate_synth_pair(const SynthSpec& spec_a,
                                                          const SynthSpec& spec_b);

}  // namespace mtgp::data
