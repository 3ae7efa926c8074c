#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pepsi/graph.hpp"

namespace pepsi {

enum class Padding {
  kReflect,  ///< mirror without edge repeat; repeats the mirroring when the pad exceeds the extent
  kZero,
  kNone,  ///< valid convolution
};

struct ConvOptions {
  int stride_h = 1;
  int stride_w = 1;
  int dilation = 1;
  Padding padding = Padding::kReflect;
  int groups = 1;
};

enum class Activation { kElu, kLeakyRelu, kTanh, kClipUnit, kRelu };

inline constexpr double kLeakySlope = 0.2;

/// Mirror index `i` into [0, n) (reflect without repeating the edge sample).
int reflect_index(int i, int n);

/// 2-D convolution. `w` has extents (k, k, C_in / groups, C_out), odd k.
/// Under kReflect / kZero the output is ceil(H / stride) x ceil(W / stride);
/// the total pad is split with the smaller half on top/left.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> bias, const ConvOptions& opt);

/// Output extent of conv2d along one axis.
int conv_output_extent(int in, int k, int stride, int dilation, Padding padding);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> add_scalar(Var<T> a, T offset);

/// gamma * w + beta with (1, 1, C_in, C_out) modulators broadcast over the
/// kernel's spatial taps.
template <typename T>
Var<T> modulate_kernel(Var<T> w, Var<T> gamma, Var<T> beta);

template <typename T>
Var<T> activation(Var<T> x, Activation kind);

template <typename T>
Var<T> upsample_nearest2x(Var<T> x);

/// View channels as (groups, C / groups), transpose, flatten.
template <typename T>
Var<T> channel_shuffle(Var<T> x, int groups);

template <typename T>
Var<T> l1_mean(Var<T> a, Var<T> b);
template <typename T>
Var<T> mean(Var<T> x);
template <typename T>
Var<T> sum(Var<T> x);
/// sum_i x_i * w_i for a constant weight tensor.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights);

/// softmax(lambda * v) over every element of v.
template <typename T>
Var<T> scaled_softmax(Var<T> v, T lambda);
template <typename T>
std::vector<T> scaled_softmax(std::span<const T> v, T lambda);

/// Samples [begin, end) along the batch axis.
template <typename T>
Var<T> slice_batch(Var<T> x, int begin, int end);

/// mask * generated + (1 - mask) * original, with a single-channel mask
/// broadcast over channels. Differentiable in `generated` only.
template <typename T>
Var<T> mask_blend(Var<T> generated, const Tensor<T>& original, const Tensor<T>& mask);

/// Per-cell affine map C -> 1: out[n,0,y,x] = sum_c w[0,c,y,x] * x[n,c,y,x] + b[0,0,y,x].
template <typename T>
Var<T> pixelwise_affine(Var<T> x, Var<T> w, Var<T> b);

/// Concatenate along the batch axis (plain tensors).
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pepsi
