#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "pepsi/tensor.hpp"

namespace pepsi {

/// Binary hole map: 1 = hole (foreground), 0 = background.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width);

  int height() const { return h_; }
  int width() const { return w_; }
  std::uint8_t at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * w_ + x]; }
  void set(int y, int x, bool hole) { bits_[static_cast<std::size_t>(y) * w_ + x] = hole ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t hole_count() const;
  double hole_fraction() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Box {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

Mask gen_square_mask(int h, int w, const Box& box);
/// Square of side uniform in [min(h,w)/4, min(h,w)/2] at a uniform position.
Mask gen_square_mask(int h, int w, std::mt19937_64& rng);

/// Stroke model for free-form holes: a random walk of segments dilated by a
/// disk of diameter brush_width.
struct FreeFormParams {
  int min_strokes = 3;
  int max_strokes = 5;
  int max_vertices = 12;
  double min_brush = 12.0;
  double max_brush = 40.0;
  double max_angle_step = 1.5707963267948966;
  double max_segment_length = 40.0;
  int height = 256;
  int width = 256;

  /// Defaults calibrated at 256x256, with brush and segment lengths scaled
  /// by min(h, w) / 256.
  static FreeFormParams defaults(int h, int w);
  void validate() const;
};

struct Stroke {
  std::vector<std::pair<double, double>> vertices;  // (x, y) in pixel units
  double brush_width = 0.0;
};

std::vector<Stroke> sample_strokes(const FreeFormParams& p, std::mt19937_64& rng);
/// Pixels whose centre lies within brush_width / 2 of any stroke segment.
Mask rasterize_strokes(std::span<const Stroke> strokes, int h, int w);
Mask gen_freeform_mask(const FreeFormParams& p, std::mt19937_64& rng);

/// (1, 1, H, W) tensor of the mask.
template <typename T>
Tensor<T> mask_tensor(const Mask& m);
/// (N, 1, H, W) tensor of equally-sized masks.
template <typename T>
Tensor<T> stack_masks(std::span<const Mask> masks);
/// Mask of sample n of a (N, 1, H, W) tensor (values > 0.5 are holes).
template <typename T>
Mask mask_from_tensor(const Tensor<T>& t, int n = 0);

/// Network input: channels 0-2 the image with holes set to 0, channel 3 the
/// mask. Image must lie in [-1, 1].
template <typename T>
Tensor<T> compose_input(const Tensor<T>& image, const Tensor<T>& mask);

}  // namespace pepsi
