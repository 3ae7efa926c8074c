#pragma once

#include <span>
#include <utility>
#include <vector>

#include "pepsi/graph.hpp"
#include "pepsi/mask.hpp"

namespace pepsi {

enum class CamMode {
  kCosine,     ///< normalized inner product
  kEuclidean,  ///< truncated distance similarity
};

inline constexpr double kDefaultCamLambda = 10.0;
inline constexpr double kDistanceSigmaFloor = 1e-8;

enum class PatchRole { kForeground, kBackground };

/// 3x3xC feature patch centred at (y, x), laid out as [c][dy][dx].
template <typename T>
struct Patch {
  int y = 0;
  int x = 0;
  std::vector<T> values;
};

template <typename T>
struct PatchSet {
  PatchRole role = PatchRole::kBackground;
  std::vector<Patch<T>> patches;
};

/// Stride-1 3x3 patches (reflect padded) of sample `n`, split by the centre
/// pixel's mask value. Throws if the background set would be empty while
/// the foreground is not.
template <typename T>
std::pair<PatchSet<T>, PatchSet<T>> split_patches(const Tensor<T>& features, const Mask& mask_small, int n = 0);

/// Cosine similarity of f against each background patch; zero-norm patches score 0.
template <typename T>
std::vector<T> cosine_scores(std::span<const T> f, const PatchSet<T>& background);

/// tanh(-(d - mean(d)) / std(d)) with d the Euclidean distances from f and the
/// population standard deviation floored at kDistanceSigmaFloor.
template <typename T>
std::vector<T> truncated_distance_scores(std::span<const T> f, const PatchSet<T>& background);

template <typename T>
std::vector<T> attention_weights(std::span<const T> scores, T lambda);

/// Nearest-neighbour (pixel-centre) downsampling of a mask to h x w.
Mask downsample_mask(const Mask& m, int h, int w);

/// Contextual attention: every foreground patch is rebuilt as the
/// softmax-weighted sum of background patches; overlapping rebuilt patches
/// are averaged onto foreground pixels and background pixels pass through.
/// `masks_small` holds one feature-resolution mask per batch sample.
template <typename T>
Var<T> cam_forward(Var<T> features, std::span<const Mask> masks_small, CamMode mode, T lambda);

}  // namespace pepsi
