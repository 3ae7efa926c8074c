#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pepsi/tensor.hpp"

namespace pepsi {

enum class Pattern { kStripes, kChecker, kGradientBlobs };

std::string to_string(Pattern p);
Pattern parse_pattern(const std::string& s);

struct SyntheticSpec {
  Pattern pattern = Pattern::kStripes;
  int size = 32;
  int count = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Image `index` of the set: (1, 3, size, size) in [-1, 1], a pure function
/// of (spec, index). Stripes and checkers draw their period from [4, size / 4].
Tensor<float> synth_image(const SyntheticSpec& spec, int index);
std::vector<Tensor<float>> synth_images(const SyntheticSpec& spec);

/// Writes img_NNNNN.ppm files and manifest.txt into `dir`.
void write_synthetic(const SyntheticSpec& spec, const std::string& dir);

/// Loads every image listed in `dir`/manifest.txt, or every .ppm in name order
/// when there is no manifest.
std::vector<Tensor<float>> load_image_dir(const std::string& dir);

}  // namespace pepsi
