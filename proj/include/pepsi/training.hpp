#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pepsi/metrics.hpp"
#include "pepsi/nets.hpp"
#include "pepsi/optim.hpp"

namespace pepsi {

struct LossWeights {
  double lambda_i = 10.0;
  double lambda_adv = 0.1;
  double lambda_c = 5.0;

  void validate() const;
};

/// mask * generated + (1 - mask) * original, clipped to [-1, 1]. `mask` is
/// (N, 1, H, W) and broadcast over channels.
template <typename T>
Tensor<T> composite_output(const Tensor<T>& generated, const Tensor<T>& original, const Tensor<T>& mask);
template <typename T>
Tensor<T> composite_output(const Tensor<T>& generated, const Tensor<T>& original, const Mask& mask);

/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)).
template <typename T>
Var<T> d_hinge_loss(Var<T> scores_real, Var<T> scores_fake);
/// -mean(fake).
template <typename T>
Var<T> g_adv_loss(Var<T> scores_fake);
/// lambda_i * mean|inpaint - target| + lambda_adv * g_adv_loss(fake).
template <typename T>
Var<T> g_loss(Var<T> inpaint, Var<T> target, Var<T> scores_fake, const LossWeights& w);
template <typename T>
Var<T> coarse_loss(Var<T> coarse, Var<T> target);
/// lg + lambda_c * (1 - k / k_max) * lc.
template <typename T>
Var<T> total_loss(Var<T> lg, Var<T> lc, std::int64_t k, std::int64_t k_max, const LossWeights& w);

/// Generator defaults for desk-scale runs: every width divided by 4.
inline GeneratorConfig desk_generator_config() {
  GeneratorConfig c;
  c.width_divisor = 4;
  return c;
}

struct TrainConfig {
  GeneratorConfig gen = desk_generator_config();
  bool coarse_path = true;
  LossWeights weights;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int batch_size = 4;
  std::int64_t k_max = 2000;
  int image_size = 32;
  std::uint64_t seed = 1;
  /// Empty: generate a synthetic set in memory.
  std::string data_dir;
  std::string synth_pattern = "stripes";
  int synth_count = 200;
  int holdout_count = 16;
  /// "square" or "freeform".
  std::string mask_mode = "square";
  std::int64_t checkpoint_interval = 500;
  std::int64_t eval_interval = 200;
  std::string out_dir = "run";
  /// Checkpoint to resume from; empty starts fresh.
  std::string resume;

  void validate() const;
};

struct TrainState {
  std::int64_t k = 0;
  std::int64_t k_max = 1;
  /// Base learning rates; see lr_g_at / lr_d_at for the decayed values.
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  std::uint64_t seed = 0;
  Adam<float> adam_g;
  Adam<float> adam_d;

  /// Both rates drop to 1/10 once k >= 0.9 k_max.
  bool decayed(std::int64_t at) const { return 10 * at >= 9 * k_max; }
  double lr_g_at(std::int64_t at) const { return decayed(at) ? lr_g / 10 : lr_g; }
  double lr_d_at(std::int64_t at) const { return decayed(at) ? lr_d / 10 : lr_d; }
};

TrainState make_train_state(const TrainConfig& cfg);

struct StepLog {
  double loss_d = 0;
  double loss_g = 0;
  double loss_coarse = 0;
  double loss_total = 0;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Discriminator update against composited fakes. The generator is run
/// without tracking; its parameters are untouched.
double d_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
              const Tensor<float>& masks, const TrainConfig& cfg);
/// Generator update; returns (lg, lc, total).
StepLog g_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
               const Tensor<float>& masks, const TrainConfig& cfg);
/// d_step, g_step, then k += 1. Throws TrainingDiverged on a non-finite loss.
StepLog train_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
                   const Tensor<float>& masks, const TrainConfig& cfg);

struct Batch {
  Tensor<float> images;  // (N, 3, H, W)
  Tensor<float> masks;   // (N, 1, H, W)
};

/// Draws the batch of step k: a pure function of (seed, k) and the dataset.
Batch sample_batch(const std::vector<Tensor<float>>& dataset, const TrainConfig& cfg, std::int64_t k);

/// Evaluation images with masks fixed by the seed.
struct Holdout {
  std::vector<Tensor<float>> images;
  std::vector<Mask> masks;
};
Holdout make_holdout(std::vector<Tensor<float>> images, const TrainConfig& cfg);

/// Mean report over the holdout set (infer mode, composited).
EvalReport evaluate_holdout(Generator<float>& gen, const Holdout& holdout);

struct LogRow {
  std::int64_t k = 0;
  StepLog losses;
  EvalReport eval;
};

inline constexpr const char* kLogHeader = "k,loss_d,loss_g,loss_coarse,psnr_local,psnr_global,ssim";

struct Trainer {
  explicit Trainer(const TrainConfig& config);

  TrainConfig cfg;
  Generator<float> gen;
  Discriminator<float> red;
  TrainState state;
};

/// Runs steps until state.k == run_until (default k_max). Writes
/// `metrics.csv` and `ckpt_<k>.peps` under cfg.out_dir when it is non-empty.
/// On divergence a `diverged_<k>.peps` dump is written before rethrowing.
std::vector<LogRow> train_loop(Trainer& trainer, const std::vector<Tensor<float>>& dataset, const Holdout& holdout,
                               std::int64_t run_until = -1);

}  // namespace pepsi
