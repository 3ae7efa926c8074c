#include "pepsi/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "pepsi/nets.hpp"
#include "pepsi/training.hpp"

namespace pepsi {

namespace {

using D = double;

Tensor<D> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<D> t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (D& v : t.data()) v = u(rng);
  return t;
}

// Values in [-1, 1] kept at least `gap` away from each kink in `kinks`.
Tensor<D> away_from(Shape s, std::mt19937_64& rng, std::vector<double> kinks, double gap = 0.05) {
  Tensor<D> t = random_tensor(s, rng, -1.5, 1.5);
  for (D& v : t.data())
    for (double k : kinks)
      if (std::abs(v - k) < gap) v = k + (v >= k ? gap : -gap);
  return t;
}

class Suite {
 public:
  explicit Suite(const GradSuiteOptions& opt) : opt_(opt), rng_(opt.seed) {}

  void input(const std::string& name, const ScalarFn& f, const Tensor<D>& x, GradCheckOptions o = {}) {
    record(name, grad_check(f, x, o));
  }

  void param(const std::string& name, const LossFn& loss, Parameter<D>& p, GradCheckOptions o = {}) {
    record(name, grad_check_param(loss, p, o));
  }

  void record(const std::string& name, const GradCheckResult& r) {
    cases_.push_back({name, r, r.max_rel_error < kGradCheckTolerance});
  }

  std::mt19937_64& rng() { return rng_; }
  const GradSuiteOptions& options() const { return opt_; }
  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  GradSuiteOptions opt_;
  std::mt19937_64 rng_;
  std::vector<GradCheckCase> cases_;
};

// A random linear functional turns any output into a scalar loss.
Var<D> project(Var<D> y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return weighted_sum(y, random_tensor(y.shape(), rng));
}

void primitives(Suite& s) {
  auto& rng = s.rng();
  const Tensor<D> x = random_tensor({2, 4, 7, 6}, rng);

  struct ConvCase {
    const char* name;
    ConvOptions opt;
    int k;
  };
  const ConvCase convs[] = {
      {"conv2d reflect 3x3", {}, 3},
      {"conv2d zero 5x5 stride 2", {2, 2, 1, Padding::kZero, 1}, 5},
      {"conv2d valid 3x3", {1, 1, 1, Padding::kNone, 1}, 3},
      {"conv2d dilation 2", {1, 1, 2, Padding::kReflect, 1}, 3},
      {"conv2d dilation 8 (fold)", {1, 1, 8, Padding::kReflect, 1}, 3},
      {"conv2d groups 2", {1, 1, 1, Padding::kReflect, 2}, 3},
      {"conv2d 1x1", {}, 1},
  };
  for (const ConvCase& c : convs) {
    const Tensor<D> w = random_tensor({c.k, c.k, 4 / c.opt.groups, 6}, rng);
    const Tensor<D> b = random_tensor({1, 1, 1, 6}, rng);
    const ConvOptions opt = c.opt;
    s.input(std::string(c.name) + " / input", [=](Graph<D>& g, Var<D> v) {
      return project(conv2d(v, g.constant(w), std::optional<Var<D>>(g.constant(b)), opt), 1);
    }, x);
    s.input(std::string(c.name) + " / weight", [=](Graph<D>& g, Var<D> v) {
      return project(conv2d(g.constant(x), v, std::optional<Var<D>>(g.constant(b)), opt), 2);
    }, w);
    s.input(std::string(c.name) + " / bias", [=](Graph<D>& g, Var<D> v) {
      return project(conv2d(g.constant(x), g.constant(w), std::optional<Var<D>>(v), opt), 3);
    }, b);
  }

  const Tensor<D> y = random_tensor(x.shape(), rng);
  s.input("add", [=](Graph<D>& g, Var<D> v) { return project(add(v, g.constant(y)), 4); }, x);
  s.input("sub", [=](Graph<D>& g, Var<D> v) { return project(sub(g.constant(y), v), 5); }, x);
  s.input("mul", [=](Graph<D>& g, Var<D> v) { return project(mul(v, g.constant(y)), 6); }, x);
  s.input("scale", [](Graph<D>&, Var<D> v) { return project(scale(v, 2.5), 7); }, x);
  s.input("add_scalar", [](Graph<D>&, Var<D> v) { return project(add_scalar(v, -0.3), 8); }, x);

  const Tensor<D> w = random_tensor({3, 3, 4, 5}, rng);
  const Tensor<D> gamma = random_tensor({1, 1, 4, 5}, rng);
  const Tensor<D> beta = random_tensor({1, 1, 4, 5}, rng);
  s.input("modulate_kernel / w", [=](Graph<D>& g, Var<D> v) {
    return project(modulate_kernel(v, g.constant(gamma), g.constant(beta)), 9);
  }, w);
  s.input("modulate_kernel / gamma", [=](Graph<D>& g, Var<D> v) {
    return project(modulate_kernel(g.constant(w), v, g.constant(beta)), 10);
  }, gamma);
  s.input("modulate_kernel / beta", [=](Graph<D>& g, Var<D> v) {
    return project(modulate_kernel(g.constant(w), g.constant(gamma), v), 11);
  }, beta);

  const std::pair<const char*, Activation> acts[] = {{"elu", Activation::kElu},
                                                     {"leaky_relu", Activation::kLeakyRelu},
                                                     {"tanh", Activation::kTanh},
                                                     {"clip", Activation::kClipUnit},
                                                     {"relu", Activation::kRelu}};
  const Tensor<D> xa = away_from(x.shape(), rng, {-1.0, 0.0, 1.0});
  for (const auto& [name, kind] : acts) {
    const Activation a = kind;
    s.input(std::string("activation ") + name, [=](Graph<D>&, Var<D> v) { return project(activation(v, a), 12); }, xa);
  }

  s.input("upsample_nearest2x", [](Graph<D>&, Var<D> v) { return project(upsample_nearest2x(v), 13); }, x);
  s.input("channel_shuffle", [](Graph<D>&, Var<D> v) { return project(channel_shuffle(v, 2), 14); }, x);
  const Tensor<D> tie_free = away_from(x.shape(), rng, {0.0});
  const Tensor<D> zeros(x.shape());
  s.input("l1_mean", [=](Graph<D>& g, Var<D> v) { return l1_mean(v, g.constant(zeros)); }, tie_free);
  s.input("mean", [](Graph<D>&, Var<D> v) { return scale(mean(activation(v, Activation::kTanh)), 10.0); }, x);
  s.input("sum", [](Graph<D>&, Var<D> v) { return sum(activation(v, Activation::kTanh)); }, x);
  s.input("scaled_softmax", [](Graph<D>&, Var<D> v) { return project(scaled_softmax(v, 3.0), 15); },
          random_tensor({1, 1, 1, 9}, rng));
  s.input("slice_batch", [](Graph<D>&, Var<D> v) { return project(slice_batch(v, 1, 2), 16); }, x);

  Tensor<D> m({2, 1, 7, 6});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i % 3 == 0) ? 1 : 0;
  s.input("mask_blend", [=](Graph<D>&, Var<D> v) { return project(mask_blend(v, y, m), 17); }, x);

  const Tensor<D> pw = random_tensor({1, 4, 7, 6}, rng);
  const Tensor<D> pb = random_tensor({1, 1, 7, 6}, rng);
  s.input("pixelwise_affine / x", [=](Graph<D>& g, Var<D> v) {
    return project(pixelwise_affine(v, g.constant(pw), g.constant(pb)), 18);
  }, x);
  s.input("pixelwise_affine / w", [=](Graph<D>& g, Var<D> v) {
    return project(pixelwise_affine(g.constant(x), v, g.constant(pb)), 19);
  }, pw);
  s.input("pixelwise_affine / b", [=](Graph<D>& g, Var<D> v) {
    return project(pixelwise_affine(g.constant(x), g.constant(pw), v), 20);
  }, pb);
}

void losses(Suite& s) {
  auto& rng = s.rng();
  const Tensor<D> real = away_from({2, 1, 2, 2}, rng, {1.0});
  const Tensor<D> fake = away_from({2, 1, 2, 2}, rng, {-1.0});
  s.input("d_hinge_loss / real", [=](Graph<D>& g, Var<D> v) { return d_hinge_loss(v, g.constant(fake)); }, real);
  s.input("d_hinge_loss / fake", [=](Graph<D>& g, Var<D> v) { return d_hinge_loss(g.constant(real), v); }, fake);
  s.input("g_adv_loss", [](Graph<D>&, Var<D> v) { return g_adv_loss(v); }, fake);
  const Tensor<D> target = random_tensor({2, 3, 4, 4}, rng);
  Tensor<D> inpaint = target;
  for (D& v : inpaint.data()) v += (std::uniform_int_distribution<int>(0, 1)(rng) ? 0.2 : -0.2);
  const LossWeights w;
  s.input("g_loss / inpaint", [=](Graph<D>& g, Var<D> v) {
    return g_loss(v, g.constant(target), g.constant(fake), w);
  }, inpaint);
  s.input("g_loss / scores", [=](Graph<D>& g, Var<D> v) {
    return g_loss(g.constant(inpaint), g.constant(target), v, w);
  }, fake);
  s.input("total_loss", [=](Graph<D>& g, Var<D> v) {
    const Var<D> lc = coarse_loss(v, g.constant(target));
    return total_loss(g_loss(v, g.constant(target), g.constant(fake), w), lc, 3, 10, w);
  }, inpaint);
}

void attention(Suite& s) {
  auto& rng = s.rng();
  Mask m(6, 6);
  for (int y = 1; y < 4; ++y)
    for (int x = 2; x < 5; ++x) m.set(y, x, true);
  Mask m2(6, 6);
  m2.set(0, 0, true);
  m2.set(5, 5, true);
  const std::vector<Mask> masks{m, m2};
  const Tensor<D> f = random_tensor({2, 3, 6, 6}, rng);
  for (CamMode mode : {CamMode::kCosine, CamMode::kEuclidean}) {
    s.input("cam_forward " + to_string(mode), [=](Graph<D>&, Var<D> v) {
      return project(cam_forward(v, std::span<const Mask>(masks), mode, 10.0), 21);
    }, f);
  }
}

void blocks(Suite& s) {
  auto& rng = s.rng();
  const int c = 8;
  for (int groups : {1, 2}) {
    ParamSet<D> ps;
    RateAdaptiveBank<D> bank;
    bank.groups = groups;
    bank.weight = &ps.add("w", random_tensor({3, 3, c / groups, c}, rng));
    DpuConfig cfg;
    cfg.rates = {1, 2};
    cfg.groups = groups;
    cfg.channels = c;
    for (int r : cfg.rates) {
      bank.modulators[r] = {&ps.add("gamma" + std::to_string(r), random_tensor({1, 1, c / groups, c}, rng, 0.5, 1.5)),
                            &ps.add("beta" + std::to_string(r), random_tensor({1, 1, c / groups, c}, rng, -0.1, 0.1))};
    }
    DpuUnit<D> unit;
    unit.rate_bias = &ps.add("rb", random_tensor({1, 1, 1, c}, rng));
    unit.pointwise = &ps.add("pw", random_tensor({1, 1, c / groups, c}, rng));
    unit.pointwise_bias = &ps.add("pb", random_tensor({1, 1, 1, c}, rng));
    const Tensor<D> x = random_tensor({1, c, 6, 6}, rng);
    const std::string tag = " g=" + std::to_string(groups);
    s.input("rate_adaptive_conv" + tag, [&, x](Graph<D>&, Var<D> v) {
      return project(rate_adaptive_conv(*v.graph, v, bank, 2, unit.rate_bias), 22);
    }, x);
    s.input("dpu_forward / input" + tag, [&](Graph<D>&, Var<D> v) {
      return project(dpu_forward(*v.graph, v, bank, 1, cfg, unit), 23);
    }, x);
    for (auto& p : ps) {
      s.param("dpu_forward / " + p->name + tag, [&, x](Graph<D>& g) {
        return project(dpu_forward(g, g.constant(x), bank, 1, cfg, unit), 24);
      }, *p);
    }
  }

  Discriminator<D> red(32, 32, 16, s.options().seed);
  const Tensor<D> img = random_tensor({2, 3, 32, 32}, rng);
  GradCheckOptions o;
  o.max_coordinates = 200;
  o.seed = s.options().seed;
  s.input("red / input", [&](Graph<D>& g, Var<D> v) { return project(red.forward(g, v, false, true), 25); }, img, o);
}

void networks(Suite& s) {
  auto& rng = s.rng();
  Mask hole(32, 32);
  for (int y = 8; y < 20; ++y)
    for (int x = 12; x < 26; ++x) hole.set(y, x, true);
  const std::vector<Mask> holes{hole};
  const Tensor<D> masks = stack_masks<D>(holes);
  const Tensor<D> images = random_tensor({1, 3, 32, 32}, rng);

  struct NetCase {
    Variant variant;
    CamMode mode;
  };
  for (NetCase c : {NetCase{Variant::kPepsi, CamMode::kCosine}, NetCase{Variant::kPepsi, CamMode::kEuclidean},
                    NetCase{Variant::kDietPepsi, CamMode::kEuclidean}}) {
    GeneratorConfig cfg;
    cfg.variant = c.variant;
    cfg.cam_mode = c.mode;
    cfg.width_divisor = 8;
    Generator<D> gen(cfg, s.options().seed);
    const LossFn loss = [&](Graph<D>& g) {
      const GenOutput<D> out = gen.forward(g, images, masks, GenMode::kTrain);
      return add(project(out.inpaint, 26), project(*out.coarse, 27));
    };
    GradCheckResult worst;
    std::uint64_t salt = 0;
    for (auto& p : gen.params()) {
      GradCheckOptions o;
      o.max_coordinates = s.options().coordinates_per_tensor;
      // Many outputs sit on the clip at init; a small step rarely crosses it.
      o.eps = 1e-6;
      o.seed = s.options().seed + salt++;
      const GradCheckResult r = grad_check_param(loss, *p, o);
      worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
      worst.coordinates += r.coordinates;
    }
    s.record("generator end-to-end " + to_string(c.variant) + " " + to_string(c.mode), worst);
  }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const GradSuiteOptions& opt) {
  Suite s(opt);
  primitives(s);
  losses(s);
  attention(s);
  blocks(s);
  if (opt.networks) networks(s);
  return s.take();
}

}  // namespace pepsi
