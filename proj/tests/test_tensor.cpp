#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pepsi/gradcheck.hpp"
#include "pepsi/optim.hpp"
#include "pepsi/spectral.hpp"

using namespace pepsi;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
  Tensor<float> t(Shape{2, 3, 4, 5}, 1.5f);
  CHECK(t.size() == 120);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  t.at(1, 2, 3, 4) = 7;
  CHECK(t[119] == 7);
  CHECK(t.plane(1, 2)[19] == 7);
  CHECK_THROWS_AS(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ContractError);
  CHECK_THROWS_AS(Tensor<float>(Shape{-1, 1, 1, 1}), ContractError);
  CHECK(t.cast<double>().at(1, 2, 3, 4) == 7.0);
  CHECK(t == t.reshaped(Shape{2, 3, 4, 5}));
  CHECK_NOTHROW(check_finite(t, "t"));
  t[0] = std::nanf("");
  CHECK_THROWS(check_finite(t, "t"));
}

TEST_CASE("graph backward accumulates shared uses") {
  Graph<double> g;
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 3.0));
  const Var<double> a = g.param(p);
  const Var<double> b = g.param(p);
  g.backward(sum(mul(a, b)));
  CHECK(p.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("untracked graph refuses backward") {
  Graph<double> g(false);
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 3.0));
  const Var<double> l = sum(g.param(p));
  CHECK_FALSE(g.requires_grad(l.id));
  CHECK_THROWS(g.backward(l));
}

TEST_CASE("backward requires a scalar") {
  Graph<double> g;
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
  CHECK_THROWS(g.backward(g.param(p)));
}

TEST_CASE("param set rejects duplicate names") {
  ParamSet<float> ps;
  ps.add("a", Tensor<float>(Shape{1, 1, 1, 2}));
  CHECK_THROWS(ps.add("a", Tensor<float>(Shape{1, 1, 1, 2})));
  CHECK(ps.numel() == 2);
}

TEST_CASE("reflect index mirrors without repeating the edge") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  // pad larger than the extent keeps mirroring
  CHECK(reflect_index(-4, 4) == 2);
  CHECK(reflect_index(9, 4) == 3);
  CHECK(reflect_index(3, 1) == 0);
  for (int n = 2; n < 7; ++n)
    for (int i = -20; i < 20; ++i) CHECK(reflect_index(i, n) == oracle::mirror(i, n));
}

TEST_CASE("conv2d matches the direct oracle") {
  struct Case {
    ConvOptions opt;
    int k, cin, cout, h, w;
  };
  const Case cases[] = {
      {{}, 3, 3, 4, 7, 6},
      {{}, 5, 2, 3, 6, 9},
      {{2, 2, 1, Padding::kZero, 1}, 5, 3, 4, 9, 8},
      {{2, 1, 1, Padding::kReflect, 1}, 3, 2, 2, 7, 7},
      {{1, 1, 1, Padding::kNone, 1}, 3, 2, 3, 6, 5},
      {{1, 1, 2, Padding::kReflect, 1}, 3, 2, 3, 8, 8},
      {{1, 1, 4, Padding::kReflect, 1}, 3, 2, 3, 4, 4},
      {{1, 1, 8, Padding::kReflect, 1}, 3, 2, 2, 4, 4},
      {{1, 1, 2, Padding::kZero, 1}, 3, 2, 3, 5, 5},
      {{1, 1, 1, Padding::kReflect, 2}, 3, 4, 6, 5, 5},
      {{1, 1, 1, Padding::kReflect, 4}, 1, 8, 8, 3, 3},
      {{}, 1, 3, 5, 4, 4},
  };
  std::uint64_t seed = 1;
  for (const Case& c : cases) {
    const Tensor<double> x = random_tensor({2, c.cin, c.h, c.w}, seed++);
    const Tensor<double> w = random_tensor({c.k, c.k, c.cin / c.opt.groups, c.cout}, seed++);
    const Tensor<double> b = random_tensor({1, 1, 1, c.cout}, seed++);
    Graph<double> g(false);
    const Var<double> y = conv2d(g.constant(x), g.constant(w), std::optional<Var<double>>(g.constant(b)), c.opt);
    const Tensor<double> ref = oracle::conv2d(x, w, &b, c.opt);
    REQUIRE(y.shape() == ref.shape());
    CHECK(max_abs_diff(y.value(), ref) < 1e-12);
  }
}

TEST_CASE("conv2d output extents and sizing errors") {
  CHECK(conv_output_extent(256, 5, 2, 1, Padding::kZero) == 128);
  CHECK(conv_output_extent(7, 3, 2, 1, Padding::kReflect) == 4);
  CHECK(conv_output_extent(7, 3, 1, 2, Padding::kNone) == 3);
  CHECK_THROWS_AS(conv_output_extent(3, 3, 1, 2, Padding::kNone), SizingError);
  Graph<double> g(false);
  const Var<double> x = g.constant(Tensor<double>(Shape{1, 1, 1, 5}));
  const Var<double> w = g.constant(Tensor<double>(Shape{3, 3, 1, 1}));
  CHECK_THROWS_AS(conv2d(x, w, std::optional<Var<double>>(), ConvOptions{}), SizingError);
  const Var<double> x2 = g.constant(Tensor<double>(Shape{1, 2, 4, 4}));
  CHECK_THROWS_AS(conv2d(x2, w, std::optional<Var<double>>(), ConvOptions{}), ContractError);
  const Var<double> even = g.constant(Tensor<double>(Shape{2, 2, 2, 1}));
  CHECK_THROWS_AS(conv2d(x2, even, std::optional<Var<double>>(), ConvOptions{}), ContractError);
}

TEST_CASE("channel shuffle permutation") {
  Tensor<double> x(Shape{1, 6, 1, 1});
  for (int c = 0; c < 6; ++c) x[static_cast<std::size_t>(c)] = c;
  Graph<double> g(false);
  const Tensor<double> y = channel_shuffle(g.constant(x), 2).value();
  const double expect[] = {0, 3, 1, 4, 2, 5};
  for (int c = 0; c < 6; ++c) CHECK(y[static_cast<std::size_t>(c)] == expect[c]);
  CHECK_THROWS(channel_shuffle(g.constant(x), 4));
}

TEST_CASE("upsample, softmax, slice, blend and affine values") {
  Graph<double> g(false);
  Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{1, 2});
  const Tensor<double> up = upsample_nearest2x(g.constant(x)).value();
  CHECK(up.shape() == Shape{1, 1, 2, 4});
  CHECK(up.at(0, 0, 1, 3) == 2);

  const std::vector<double> v{0.0, std::log(3.0)};
  const auto sm = scaled_softmax<double>(v, 1.0);
  CHECK(sm[0] == doctest::Approx(0.25));
  CHECK(sm[1] == doctest::Approx(0.75));
  const auto big = scaled_softmax<double>(std::vector<double>{1000, 1000}, 10.0);
  CHECK(big[0] == doctest::Approx(0.5));

  Tensor<double> batch(Shape{3, 1, 1, 1}, std::vector<double>{1, 2, 3});
  CHECK(slice_batch(g.constant(batch), 1, 3).value() == Tensor<double>(Shape{2, 1, 1, 1}, std::vector<double>{2, 3}));
  CHECK_THROWS(slice_batch(g.constant(batch), 2, 4));

  Tensor<double> gen(Shape{1, 2, 1, 2}, 5.0), orig(Shape{1, 2, 1, 2}, 1.0);
  Tensor<double> m(Shape{1, 1, 1, 2}, std::vector<double>{1, 0});
  const Tensor<double> b = mask_blend(g.constant(gen), orig, m).value();
  CHECK(b.at(0, 1, 0, 0) == 5);
  CHECK(b.at(0, 1, 0, 1) == 1);

  Tensor<double> fx(Shape{2, 2, 1, 1}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> fw(Shape{1, 2, 1, 1}, std::vector<double>{10, 100});
  Tensor<double> fb(Shape{1, 1, 1, 1}, 0.5);
  const Tensor<double> a = pixelwise_affine(g.constant(fx), g.constant(fw), g.constant(fb)).value();
  CHECK(a[0] == doctest::Approx(210.5));
  CHECK(a[1] == doctest::Approx(430.5));
}

TEST_CASE("activations") {
  Graph<double> g(false);
  Tensor<double> x(Shape{1, 1, 1, 4}, std::vector<double>{-2, -0.5, 0.5, 2});
  const Var<double> v = g.constant(x);
  const Tensor<double> elu = activation(v, Activation::kElu).value();
  CHECK(elu[0] == doctest::Approx(std::expm1(-2.0)));
  CHECK(elu[3] == 2);
  const Tensor<double> leaky = activation(v, Activation::kLeakyRelu).value();
  CHECK(leaky[0] == doctest::Approx(-0.4));
  const Tensor<double> clip = activation(v, Activation::kClipUnit).value();
  CHECK(clip[0] == -1);
  CHECK(clip[1] == -0.5);
  CHECK(clip[3] == 1);
  CHECK(activation(v, Activation::kRelu).value()[1] == 0);
}

TEST_CASE("modulate_kernel broadcasts over taps") {
  Graph<double> g(false);
  const Tensor<double> w = random_tensor({3, 3, 2, 2}, 5);
  const Tensor<double> gamma = random_tensor({1, 1, 2, 2}, 6);
  const Tensor<double> beta = random_tensor({1, 1, 2, 2}, 7);
  const Tensor<double> k = modulate_kernel(g.constant(w), g.constant(gamma), g.constant(beta)).value();
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx)
      for (int i = 0; i < 2; ++i)
        for (int o = 0; o < 2; ++o)
          CHECK(k.at(ky, kx, i, o) == doctest::Approx(gamma.at(0, 0, i, o) * w.at(ky, kx, i, o) + beta.at(0, 0, i, o)));
}

TEST_CASE("adam follows the bias-corrected update") {
  Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  AdamState<double> s(p.value.shape());
  AdamOptions opt;
  opt.lr = 0.1;
  double m = 0, v = 0, x = 1.0;
  const double grads[] = {0.5, -2.0, 0.25};
  for (int t = 1; t <= 3; ++t) {
    const double gr = grads[t - 1];
    p.grad[0] = gr;
    adam_step(p, s, opt);
    m = 0.5 * m + 0.5 * gr;
    v = 0.9 * v + 0.1 * gr * gr;
    const double mh = m / (1 - std::pow(0.5, t)), vh = v / (1 - std::pow(0.9, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-12));
  }
  CHECK(s.t == 3);
  opt.lr = -1;
  CHECK_THROWS(adam_step(p, s, opt));
}

TEST_CASE("spectral norm converges to the largest singular value") {
  // W viewed as 3 x 2: rows are output channels.
  Tensor<double> w(Shape{1, 1, 2, 3}, std::vector<double>{1, 0, 2, 0, 3, 1});
  // W^T W for W = [[1,0],[0,3],[2,1]] is [[5,2],[2,10]].
  const double tr = 15, det = 46;
  const double sigma = std::sqrt((tr + std::sqrt(tr * tr - 4 * det)) / 2);
  SpectralState<double> s = make_spectral_state<double>(3, 9);
  CHECK(spectral_sigma(w, s, 100) == doctest::Approx(sigma).epsilon(1e-9));
  Graph<double> g;
  Parameter<double> p("w", w);
  const Var<double> n = spectral_normalize(g.param(p), s, 1);
  SpectralState<double> s2 = s;
  CHECK(spectral_sigma(n.value(), s2, 100) == doctest::Approx(1.0).epsilon(1e-9));
  Tensor<double> zero(Shape{1, 1, 2, 3});
  CHECK(spectral_sigma(zero, s, 1) == kSigmaFloor);
}

TEST_CASE("gradient check guards") {
  Parameter<double> p("x", random_tensor({1, 1, 1, 3}, 3));
  GradCheckOptions o;
  o.eps = 1e-2;
  CHECK_THROWS(grad_check_param([&](Graph<double>& g) { return sum(g.param(p)); }, p, o));
  int calls = 0;
  o.eps = 1e-4;
  CHECK_THROWS(grad_check_param(
      [&](Graph<double>& g) { return scale(sum(g.param(p)), static_cast<double>(++calls)); }, p, o));
  const auto r = grad_check([](Graph<double>&, Var<double> v) { return sum(mul(v, v)); }, random_tensor({1, 1, 2, 2}, 4));
  CHECK(r.coordinates == 4);
  CHECK(r.max_rel_error < 1e-8);
}
