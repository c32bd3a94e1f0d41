#pragma once

// Datasets: loading, resizing, the eight-isometry augmentation, the 3:1:1
// split and the synthetic blob generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pidcount/image.hpp"
#include "pidcount/tensor.hpp"

namespace pidcount {

struct Sample {
  std::string id;
  Image image;
  Mask mask;
  int true_count = -1;  // -1 when no counts.csv entry exists
};

/// Reads images/<id>.png paired with masks/<id>.png. Non-PNG files are
/// skipped and reported through `warnings`; an unpaired file raises
/// LoadError naming the id. Samples are sorted by id.
std::vector<Sample> load_dataset(const std::filesystem::path& directory,
                                 std::vector<std::string>* warnings = nullptr);
/// Writes the same layout plus counts.csv for samples with a known count.
void save_dataset(const std::filesystem::path& directory, const std::vector<Sample>& samples);

/// Bilinear image, nearest-neighbour mask. size must be a positive multiple
/// of 16.
Sample resize(const Sample& sample, int size);

/// Horizontal mirror of a square sample.
Sample mirror(const Sample& sample);
/// Counter-clockwise quarter turns of a square sample.
Sample rotate90(const Sample& sample, int quarter_turns);
/// {0, 90, 180, 270} x {identity, mirror}; the mirror is applied before the
/// rotation. Ids gain the suffixes _r0, _r90, ... and _r0m, _r90m, ...
std::vector<Sample> augment8(const Sample& sample);

enum class AugmentPolicy { None, Default, Paper };
AugmentPolicy parse_augment_policy(const std::string& name);
const char* augment_policy_name(AugmentPolicy policy);

struct DatasetSplit {
  std::vector<Sample> train, val, test;
  std::uint64_t seed = 0;
  AugmentPolicy policy = AugmentPolicy::Default;
  std::array<bool, 3> augmented{};  // train, val, test
};

/// Largest-remainder apportionment of n over the ratio; leftover units go to
/// the largest fractional parts, earlier splits first on ties.
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<int, 3> ratio = {3, 1, 1});

/// Seeded partition of the originals, then augmentation per policy
/// (None: nothing; Default: train and val; Paper: all three).
DatasetSplit split(const std::vector<Sample>& samples, std::uint64_t seed,
                   AugmentPolicy policy = AugmentPolicy::Default, std::array<int, 3> ratio = {3, 1, 1});

struct SynthParams {
  int min_count = 3;
  int max_count = 12;
  int image_size = 32;
  int n_images = 64;
  std::uint64_t seed = 1;
  double noise_sigma = 0.05;
  double radius_min = 0.0;  // semi-axis bounds in pixels; 0 = derived from image_size
  double radius_max = 0.0;
  double max_eccentricity = 0.6;
  double background = 0.15;
  double foreground = 0.75;
  std::string id_prefix = "blob";
};

/// Ellipses on a dark background. Blobs may touch, but a one-pixel gap is
/// carved wherever two blobs would meet, so the 8-connected component count
/// of every mask equals its recorded true_count. Throws GenerationError when
/// the requested count cannot be packed.
std::vector<Sample> synth_blobs(const SynthParams& params);

/// Images of the given samples as an [N,C,H,W] tensor.
Tensor images_tensor(const std::vector<const Sample*>& samples);
/// Masks as an [N,H,W] tensor of 0/1.
Tensor masks_tensor(const std::vector<const Sample*>& samples);

}  // namespace pidcount
