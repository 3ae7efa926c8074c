#include "pepsi/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "pepsi/checkpoint.hpp"

namespace pepsi {

void LossWeights::validate() const {
  if (!(lambda_i >= 0) || !(lambda_adv >= 0) || !(lambda_c >= 0)) throw ContractError("loss weights must be >= 0");
}

template <typename T>
Tensor<T> composite_output(const Tensor<T>& generated, const Tensor<T>& original, const Tensor<T>& mask) {
  const Shape s = generated.shape();
  if (original.shape() != s) {
    throw ContractError("composite: generated " + to_string(s) + " vs original " + to_string(original.shape()));
  }
  if (mask.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw ContractError("composite: mask " + to_string(mask.shape()) + " does not fit " + to_string(s));
  }
  Tensor<T> out(s);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* m = mask.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* g = generated.plane(n, c);
      const T* o = original.plane(n, c);
      T* d = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) d[i] = std::clamp(m[i] * g[i] + (T(1) - m[i]) * o[i], T(-1), T(1));
    }
  }
  return out;
}

template <typename T>
Tensor<T> composite_output(const Tensor<T>& generated, const Tensor<T>& original, const Mask& mask) {
  return composite_output(generated, original, mask_tensor<T>(mask));
}

template <typename T>
Var<T> d_hinge_loss(Var<T> scores_real, Var<T> scores_fake) {
  const Var<T> real = mean(activation(add_scalar(scale(scores_real, T(-1)), T(1)), Activation::kRelu));
  const Var<T> fake = mean(activation(add_scalar(scores_fake, T(1)), Activation::kRelu));
  return add(real, fake);
}

template <typename T>
Var<T> g_adv_loss(Var<T> scores_fake) {
  return scale(mean(scores_fake), T(-1));
}

template <typename T>
Var<T> g_loss(Var<T> inpaint, Var<T> target, Var<T> scores_fake, const LossWeights& w) {
  w.validate();
  return add(scale(l1_mean(inpaint, target), static_cast<T>(w.lambda_i)),
             scale(g_adv_loss(scores_fake), static_cast<T>(w.lambda_adv)));
}

template <typename T>
Var<T> coarse_loss(Var<T> coarse, Var<T> target) {
  return l1_mean(coarse, target);
}

template <typename T>
Var<T> total_loss(Var<T> lg, Var<T> lc, std::int64_t k, std::int64_t k_max, const LossWeights& w) {
  if (k_max == 0) throw ContractError("total_loss: k_max must be positive");
  if (k < 0 || k > k_max) {
    throw ContractError("total_loss: k = " + std::to_string(k) + " outside [0, " + std::to_string(k_max) + "]");
  }
  const double weight = w.lambda_c * (1.0 - static_cast<double>(k) / static_cast<double>(k_max));
  return add(lg, scale(lc, static_cast<T>(weight)));
}

void TrainConfig::validate() const {
  gen.validate();
  weights.validate();
  if (!(lr_g >= 0) || !(lr_d >= 0)) throw ContractError("learning rates must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ContractError("adam betas must lie in [0, 1)");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (k_max < 1) throw ContractError("k_max must be >= 1");
  if (image_size < 8 || image_size % 8 != 0) throw ContractError("image_size must be a positive multiple of 8");
  if (synth_count < 0 || holdout_count < 0) throw ContractError("synth_count and holdout_count must be >= 0");
  if (mask_mode != "square" && mask_mode != "freeform") {
    throw ContractError("mask_mode must be square or freeform, got '" + mask_mode + "'");
  }
  if (checkpoint_interval < 1 || eval_interval < 1) throw ContractError("intervals must be >= 1");
}

TrainState make_train_state(const TrainConfig& cfg) {
  TrainState s;
  s.k_max = cfg.k_max;
  s.lr_g = cfg.lr_g;
  s.lr_d = cfg.lr_d;
  s.seed = cfg.seed;
  return s;
}

namespace {

void require_finite(double v, const char* what, std::int64_t k) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << what << " is " << v << " at iteration " << k;
    throw TrainingDiverged(os.str());
  }
}

AdamOptions adam_options(const TrainConfig& cfg, double lr) {
  AdamOptions o;
  o.lr = lr;
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  return o;
}

std::mt19937_64 stream(std::uint64_t seed, std::int64_t k, std::uint32_t purpose) {
  const auto uk = static_cast<std::uint64_t>(k);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(uk), static_cast<std::uint32_t>(uk >> 32), purpose};
  return std::mt19937_64(seq);
}

Mask draw_mask(const TrainConfig& cfg, std::mt19937_64& rng) {
  if (cfg.mask_mode == "freeform") {
    return gen_freeform_mask(FreeFormParams::defaults(cfg.image_size, cfg.image_size), rng);
  }
  return gen_square_mask(cfg.image_size, cfg.image_size, rng);
}

}  // namespace

double d_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
              const Tensor<float>& masks, const TrainConfig& cfg) {
  const int n = images.shape().n;
  Tensor<float> fake;
  {
    Graph<float> g(false);
    const GenOutput<float> out = gen.forward(g, images, masks, GenMode::kInfer);
    fake = composite_output(out.inpaint.value(), images, masks);
  }
  Graph<float> g;
  const Var<float> scores = red.forward(g, g.constant(concat_batch(images, fake)), true);
  const Var<float> loss = d_hinge_loss(slice_batch(scores, 0, n), slice_batch(scores, n, 2 * n));
  const double value = loss.value()[0];
  require_finite(value, "discriminator loss", state.k);
  red.params().zero_grad();
  g.backward(loss);
  state.adam_d.step(red.params(), adam_options(cfg, state.lr_d_at(state.k)));
  return value;
}

StepLog g_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
               const Tensor<float>& masks, const TrainConfig& cfg) {
  Graph<float> g;
  const GenOutput<float> out = gen.forward(g, images, masks, GenMode::kTrain, cfg.coarse_path);
  const Var<float> target = g.constant(images);
  const Var<float> scores = red.forward(g, mask_blend(out.inpaint, images, masks), false, true);
  const Var<float> lg = g_loss(out.inpaint, target, scores, cfg.weights);
  StepLog log;
  log.loss_g = lg.value()[0];
  Var<float> total = lg;
  if (out.coarse) {
    const Var<float> lc = coarse_loss(*out.coarse, target);
    log.loss_coarse = lc.value()[0];
    total = total_loss(lg, lc, state.k, state.k_max, cfg.weights);
  }
  log.loss_total = total.value()[0];
  require_finite(log.loss_total, "generator loss", state.k);
  gen.params().zero_grad();
  g.backward(total);
  state.adam_g.step(gen.params(), adam_options(cfg, state.lr_g_at(state.k)));
  return log;
}

StepLog train_step(Generator<float>& gen, Discriminator<float>& red, TrainState& state, const Tensor<float>& images,
                   const Tensor<float>& masks, const TrainConfig& cfg) {
  if (images.empty() || images.shape().n < 1) throw ContractError("train_step: empty batch");
  if (state.k >= state.k_max) {
    throw ContractError("train_step: already at k_max = " + std::to_string(state.k_max));
  }
  const double ld = d_step(gen, red, state, images, masks, cfg);
  StepLog log = g_step(gen, red, state, images, masks, cfg);
  log.loss_d = ld;
  ++state.k;
  return log;
}

Batch sample_batch(const std::vector<Tensor<float>>& dataset, const TrainConfig& cfg, std::int64_t k) {
  if (dataset.empty()) throw ContractError("sample_batch: empty dataset");
  std::mt19937_64 rng = stream(cfg.seed, k, 1);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  const int s = cfg.image_size;
  Batch b{Tensor<float>(Shape{cfg.batch_size, 3, s, s}), {}};
  std::vector<Mask> masks;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const Tensor<float>& img = dataset[pick(rng)];
    if (img.shape() != Shape{1, 3, s, s}) {
      throw ContractError("sample_batch: image " + to_string(img.shape()) + " is not 3x" + std::to_string(s) + "x" +
                          std::to_string(s));
    }
    std::copy(img.ptr(), img.ptr() + img.size(), b.images.ptr() + static_cast<std::size_t>(i) * img.size());
    masks.push_back(draw_mask(cfg, rng));
  }
  b.masks = stack_masks<float>(masks);
  return b;
}

Holdout make_holdout(std::vector<Tensor<float>> images, const TrainConfig& cfg) {
  Holdout h;
  std::mt19937_64 rng = stream(cfg.seed, -1, 2);
  for (std::size_t i = 0; i < images.size(); ++i) h.masks.push_back(draw_mask(cfg, rng));
  h.images = std::move(images);
  return h;
}

EvalReport evaluate_holdout(Generator<float>& gen, const Holdout& holdout) {
  if (holdout.images.empty()) throw ContractError("evaluate_holdout: empty holdout set");
  EvalReport mean_report;
  for (std::size_t i = 0; i < holdout.images.size(); ++i) {
    const Tensor<float> m = mask_tensor<float>(holdout.masks[i]);
    Graph<float> g(false);
    const GenOutput<float> out = gen.forward(g, holdout.images[i], m, GenMode::kInfer);
    const EvalReport r = evaluate(composite_output(out.inpaint.value(), holdout.images[i], m), holdout.images[i],
                                  holdout.masks[i]);
    mean_report.psnr_local += r.psnr_local;
    mean_report.psnr_global += r.psnr_global;
    mean_report.ssim += r.ssim;
    mean_report.l1_local += r.l1_local;
    mean_report.hole_pixels += r.hole_pixels;
    mean_report.total_pixels += r.total_pixels;
  }
  const double n = static_cast<double>(holdout.images.size());
  mean_report.psnr_local /= n;
  mean_report.psnr_global /= n;
  mean_report.ssim /= n;
  mean_report.l1_local /= n;
  return mean_report;
}

namespace {

const TrainConfig& validated(const TrainConfig& c) {
  c.validate();
  return c;
}

}  // namespace

Trainer::Trainer(const TrainConfig& config)
    : cfg(validated(config)),
      gen(cfg.gen, cfg.seed),
      red(cfg.image_size, cfg.image_size, cfg.gen.width_divisor, cfg.seed ^ 0x9e3779b97f4a7c15ULL),
      state(make_train_state(cfg)) {}

namespace {

std::string format_row(const LogRow& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.k << ',' << r.losses.loss_d << ',' << r.losses.loss_g << ',' << r.losses.loss_coarse
     << ',' << r.eval.psnr_local << ',' << r.eval.psnr_global << ',' << r.eval.ssim;
  return os.str();
}

std::string checkpoint_path(const std::string& dir, const std::string& stem, std::int64_t k) {
  return (std::filesystem::path(dir) / (stem + "_" + std::to_string(k) + ".peps")).string();
}

}  // namespace

std::vector<LogRow> train_loop(Trainer& t, const std::vector<Tensor<float>>& dataset, const Holdout& holdout,
                               std::int64_t run_until) {
  if (run_until < 0) run_until = t.state.k_max;
  if (run_until > t.state.k_max || run_until < t.state.k) {
    throw ContractError("train_loop: run_until " + std::to_string(run_until) + " outside [" +
                        std::to_string(t.state.k) + ", " + std::to_string(t.state.k_max) + "]");
  }
  const bool write = !t.cfg.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(t.cfg.out_dir);
    const auto path = std::filesystem::path(t.cfg.out_dir) / "metrics.csv";
    const bool fresh = t.state.k == 0 || !std::filesystem::exists(path);
    log.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open " + path.string() + " at iteration " + std::to_string(t.state.k));
    if (fresh) log << kLogHeader << '\n';
  }

  std::vector<LogRow> rows;
  while (t.state.k < run_until) {
    const Batch batch = sample_batch(dataset, t.cfg, t.state.k);
    StepLog losses;
    try {
      losses = train_step(t.gen, t.red, t.state, batch.images, batch.masks, t.cfg);
    } catch (const TrainingDiverged&) {
      if (write) save_checkpoint(checkpoint_path(t.cfg.out_dir, "diverged", t.state.k), snapshot(t.gen, &t.red, &t.state));
      throw;
    }
    const std::int64_t k = t.state.k;
    const bool last = k == t.state.k_max;
    if (k % t.cfg.eval_interval == 0 || last) {
      LogRow row{k, losses, {}};
      if (!holdout.images.empty()) row.eval = evaluate_holdout(t.gen, holdout);
      rows.push_back(row);
      if (write) {
        log << format_row(row) << '\n';
        log.flush();
        if (!log) throw std::runtime_error("failed writing metrics.csv at iteration " + std::to_string(k));
      }
    }
    if (write && (k % t.cfg.checkpoint_interval == 0 || last)) {
      const std::string path = checkpoint_path(t.cfg.out_dir, "ckpt", k);
      try {
        save_checkpoint(path, snapshot(t.gen, &t.red, &t.state));
      } catch (const std::exception& e) {
        throw std::runtime_error("iteration " + std::to_string(k) + ": " + e.what());
      }
    }
  }
  return rows;
}

#define PEPSI_INSTANTIATE_LOSSES(T)                                                                 \
  template Tensor<T> composite_output(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> composite_output(const Tensor<T>&, const Tensor<T>&, const Mask&);             \
  template Var<T> d_hinge_loss(Var<T>, Var<T>);                                                     \
  template Var<T> g_adv_loss(Var<T>);                                                               \
  template Var<T> g_loss(Var<T>, Var<T>, Var<T>, const LossWeights&);                               \
  template Var<T> coarse_loss(Var<T>, Var<T>);                                                      \
  template Var<T> total_loss(Var<T>, Var<T>, std::int64_t, std::int64_t, const LossWeights&);

PEPSI_INSTANTIATE_LOSSES(float)
PEPSI_INSTANTIATE_LOSSES(double)

}  // namespace pepsi
