#pragma once

#include <cstddef>

#include "pepsi/mask.hpp"
#include "pepsi/tensor.hpp"

namespace pepsi {

/// Returned for zero mean squared error.
inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// (x + 1) / 2, elementwise.
template <typename T>
Tensor<T> to_unit_range(const Tensor<T>& x);

/// PSNR (peak 1) of two (1, C, H, W) images in [0, 1]. With `region` only its
/// hole pixels count, across all channels.
template <typename T>
double psnr(const Tensor<T>& result, const Tensor<T>& reference, const Mask* region = nullptr);

/// Mean SSIM of the channel-mean luma over all valid 11x11 Gaussian windows.
template <typename T>
double ssim(const Tensor<T>& result, const Tensor<T>& reference);

struct EvalReport {
  double psnr_local = 0;
  double psnr_global = 0;
  double ssim = 0;
  /// Mean absolute error over hole pixels, in [-1, 1] units.
  double l1_local = 0;
  std::size_t hole_pixels = 0;
  std::size_t total_pixels = 0;
};

/// Scores one composited result against its reference; both in [-1, 1].
template <typename T>
EvalReport evaluate(const Tensor<T>& result, const Tensor<T>& reference, const Mask& mask);

}  // namespace pepsi
