#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pepsi/attention.hpp"
#include "pepsi/graph.hpp"
#include "pepsi/ops.hpp"
#include "pepsi/spectral.hpp"

namespace pepsi {

enum class Variant { kPepsi, kDietPepsi, kRed };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(CamMode m);
CamMode parse_cam_mode(const std::string& s);

/// DPU stack layout: one unit per rate; `channels` is the residual width.
struct DpuConfig {
  std::vector<int> rates{1, 2, 4, 8};
  int groups = 1;
  int channels = 256;

  int count() const { return static_cast<int>(rates.size()); }
  void validate() const;
  friend bool operator==(const DpuConfig&, const DpuConfig&) = default;
};

struct GeneratorConfig {
  Variant variant = Variant::kPepsi;
  /// Every feature width is divided by this (1 = full-size network).
  int width_divisor = 1;
  /// Diet-PEPSI only; `channels` is overwritten with the bottleneck width.
  DpuConfig dpu;
  CamMode cam_mode = CamMode::kEuclidean;
  double cam_lambda = kDefaultCamLambda;
  /// Dilation rates of the PEPSI dilated stack.
  std::vector<int> dilated_rates{2, 4, 8, 1};

  int bottleneck_channels() const;
  void validate() const;
};

/// Channel widths before division.
inline constexpr int kEncoderWidths[6] = {32, 64, 64, 128, 128, 256};
inline constexpr int kEncoderStrides[6] = {1, 2, 1, 2, 1, 2};
inline constexpr int kDecoderWidths[4] = {128, 64, 32, 16};
inline constexpr int kRedWidths[6] = {64, 128, 256, 256, 256, 512};
inline constexpr int kInputChannels = 4;

/// Weight + optional bias of one convolution.
template <typename T>
struct ConvLayer {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  ConvOptions options;

  Var<T> apply(Graph<T>& g, Var<T> x) const;
};

/// Shared 3x3 kernel W with one (gamma_d, beta_d) modulator pair per rate.
template <typename T>
struct RateAdaptiveBank {
  Parameter<T>* weight = nullptr;
  std::map<int, std::pair<Parameter<T>*, Parameter<T>*>> modulators;  // rate -> (gamma, beta)
  int groups = 1;

  std::vector<int> rates() const;
};

/// conv2d(x, gamma_d * W + beta_d) at dilation d, stride 1, reflect padding.
template <typename T>
Var<T> rate_adaptive_conv(Graph<T>& g, Var<T> x, const RateAdaptiveBank<T>& bank, int rate,
                          const Parameter<T>* bias = nullptr);

/// Per-unit parameters of a DPU that are not shared through the bank.
template <typename T>
struct DpuUnit {
  Parameter<T>* rate_bias = nullptr;
  Parameter<T>* pointwise = nullptr;  // (1, 1, C / g, C)
  Parameter<T>* pointwise_bias = nullptr;
};

/// x + pointwise(shuffle(ELU(rate_adaptive_conv(x, rates[unit])))).
template <typename T>
Var<T> dpu_forward(Graph<T>& g, Var<T> x, const RateAdaptiveBank<T>& bank, int unit_index, const DpuConfig& cfg,
                   const DpuUnit<T>& unit);

enum class GenMode { kTrain, kInfer };

template <typename T>
struct GenOutput {
  std::optional<Var<T>> coarse;
  Var<T> inpaint;
};

/// PEPSI / Diet-PEPSI generator: shared encoder, one decoder used by both
/// the coarse path and the CAM inpainting path.
template <typename T>
class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  const GeneratorConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  /// (N, 4, H, W) -> (N, C, H / 8, W / 8).
  Var<T> encode(Graph<T>& g, Var<T> input);
  /// The dilated stack (PEPSI) or DPU stack (Diet-PEPSI) alone, at the
  /// bottleneck resolution.
  Var<T> context_block(Graph<T>& g, Var<T> x);
  /// (N, C, h, w) -> (N, 3, 8h, 8w), clipped to [-1, 1].
  Var<T> decode(Graph<T>& g, Var<T> features);

  /// Train mode decodes the coarse path too (unless `coarse_path` is off);
  /// infer mode runs one encoder and one decoder pass.
  GenOutput<T> forward(Graph<T>& g, const Tensor<T>& images, const Tensor<T>& masks, GenMode mode,
                       bool coarse_path = true);

  const RateAdaptiveBank<T>& bank() const { return bank_; }
  const std::vector<DpuUnit<T>>& dpu_units() const { return units_; }

  struct PassCounts {
    int encoder = 0;
    int decoder = 0;
  };
  PassCounts passes;

 private:
  Parameter<T>& add_kernel(const std::string& name, int k, int cin, int cout, std::mt19937_64& rng);
  Parameter<T>& add_bias(const std::string& name, int cout);
  ConvLayer<T> make_conv(const std::string& name, int k, int cin, int cout, ConvOptions opt, std::mt19937_64& rng);

  GeneratorConfig cfg_;
  ParamSet<T> params_;
  std::vector<ConvLayer<T>> encoder_prefix_;
  std::vector<ConvLayer<T>> dilated_;
  RateAdaptiveBank<T> bank_;
  std::vector<DpuUnit<T>> units_;
  std::vector<ConvLayer<T>> decoder_;
};

/// Region ensemble discriminator: six spectral-normalized 5x5 stride-2
/// convolutions with leaky-ReLU, then an independent C -> 1 affine regressor
/// per cell of the final grid.
template <typename T>
class Discriminator {
 public:
  Discriminator(int height, int width, int width_divisor, std::uint64_t seed);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  /// (N, 3, H, W) -> (N, 1, gh, gw). With `update_spectral` each conv runs one
  /// power iteration first. With `frozen` parameters enter as constants.
  Var<T> forward(Graph<T>& g, Var<T> images, bool update_spectral, bool frozen = false);

  int grid_height() const { return grid_h_; }
  int grid_width() const { return grid_w_; }
  int width_divisor() const { return width_divisor_; }
  int input_height() const { return height_; }
  int input_width() const { return width_; }

  /// Spectral states of the convolutions, in layer order, keyed by weight name.
  std::vector<std::pair<std::string, SpectralState<T>>>& spectral() { return spectral_; }
  const std::vector<std::pair<std::string, SpectralState<T>>>& spectral() const { return spectral_; }

  static int grid_extent(int in);

 private:
  int height_, width_, width_divisor_;
  int grid_h_ = 0, grid_w_ = 0;
  ParamSet<T> params_;
  std::vector<ConvLayer<T>> convs_;
  Parameter<T>* fc_weight_ = nullptr;
  Parameter<T>* fc_bias_ = nullptr;
  std::vector<std::pair<std::string, SpectralState<T>>> spectral_;
};

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> per_tensor;
  /// "encoder", "decoder", "dilated_stack", "dpu_stack", "red" where present.
  std::map<std::string, std::size_t> subtotals;
  std::size_t total = 0;
};

/// Exact element counts; bias tensors (names ending ".b") are skipped when
/// `include_bias` is false.
template <typename T>
ParamCount count_params(const ParamSet<T>& params, bool include_bias);

}  // namespace pepsi
