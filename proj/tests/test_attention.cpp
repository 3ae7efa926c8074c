#include <doctest.h>

#include <cmath>
#include <random>

#include "audits.hpp"
#include "oracles.hpp"
#include "pepsi/attention.hpp"

using namespace pepsi;

namespace {

Tensor<double> random_features(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Tensor<double> t(s);
  for (double& v : t.data()) v = n(rng);
  return t;
}

Mask box(int h, int w, int top, int left, int bh, int bw) {
  Mask m(h, w);
  for (int y = top; y < top + bh; ++y)
    for (int x = left; x < left + bw; ++x) m.set(y, x, true);
  return m;
}

PatchSet<double> background(std::vector<std::vector<double>> values) {
  PatchSet<double> s;
  for (auto& v : values) s.patches.push_back(Patch<double>{0, 0, std::move(v)});
  return s;
}

}  // namespace

TEST_CASE("truncated distance fixture: two patches score +-tanh(1)") {
  const std::vector<double> f{0, 0, 0};
  const auto bg = background({{1, 0, 0}, {0, 3, 0}});
  const auto s = truncated_distance_scores<double>(f, bg);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(-std::tanh(1.0)).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.7616).epsilon(1e-4));
}

TEST_CASE("truncated distance with equal distances stays finite") {
  const std::vector<double> f{0, 0};
  const auto s = truncated_distance_scores<double>(f, background({{1, 0}, {0, 1}}));
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.0);
}

TEST_CASE("cosine scores") {
  const std::vector<double> f{1, 2, 2};
  const auto s = cosine_scores<double>(f, background({{2, 4, 4}, {-1, -2, -2}, {0, 0, 0}, {2, -1, 0}}));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(-1.0));
  CHECK(s[2] == 0.0);
  CHECK(s[3] == doctest::Approx(0.0));
  const std::vector<double> zero{0, 0, 0};
  CHECK(cosine_scores<double>(zero, background({{1, 1, 1}}))[0] == 0.0);
}

TEST_CASE("attention weights are a softmax of lambda * score") {
  const std::vector<double> s{1.0, -1.0, 0.25};
  const auto w = attention_weights<double>(s, 10.0);
  double total = 0;
  for (double v : w) total += v;
  CHECK(total == doctest::Approx(1.0));
  CHECK(w[0] / w[1] == doctest::Approx(std::exp(20.0)));
}

TEST_CASE("patch split follows the centre pixel") {
  const Tensor<double> f = random_features({1, 2, 5, 5}, 1);
  const Mask m = box(5, 5, 1, 1, 2, 3);
  const auto [fg, bg] = split_patches(f, m);
  CHECK(fg.patches.size() == 6);
  CHECK(bg.patches.size() == 19);
  CHECK(fg.patches[0].values.size() == 18);
  // centre tap of channel 1
  CHECK(fg.patches[0].values[9 + 4] == f.at(0, 1, fg.patches[0].y, fg.patches[0].x));
  Mask all(5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) all.set(y, x, true);
  CHECK_THROWS(split_patches(f, all));
}

TEST_CASE("mask downsampling samples pixel centres") {
  const Mask m = box(32, 32, 8, 12, 12, 14);
  const Mask d = downsample_mask(m, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(d.at(y, x) == m.at(y * 8 + 4, x * 8 + 4));
  const Mask same = downsample_mask(m, 32, 32);
  CHECK(same == m);
}

TEST_CASE("cam_forward matches the triple-loop oracle on 8x8 fixtures") {
  CHECK(audit::cam_fixture_error() < 1e-12);
}

TEST_CASE("cam_forward float path agrees with the oracle") {
  const std::vector<Mask> masks{box(8, 8, 2, 1, 3, 5)};
  const Tensor<double> f = random_features({1, 4, 8, 8}, 77);
  Graph<float> g(false);
  const Tensor<float> got = cam_forward(g.constant(f.cast<float>()), std::span<const Mask>(masks), CamMode::kEuclidean, 10.0f).value();
  CHECK(max_abs_diff(got.cast<double>(), oracle::cam(f, masks, CamMode::kEuclidean, 10.0)) < 1e-5);
}

TEST_CASE("cam_forward passes background through and leaves hole-free samples intact") {
  const std::vector<Mask> masks{box(6, 6, 1, 1, 2, 2), Mask(6, 6)};
  const Tensor<double> f = random_features({2, 2, 6, 6}, 3);
  Graph<double> g;
  const Var<double> out = cam_forward(g.constant(f), std::span<const Mask>(masks), CamMode::kCosine, 10.0);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        CHECK(out.value().at(1, c, y, x) == f.at(1, c, y, x));
        if (!masks[0].at(y, x)) CHECK(out.value().at(0, c, y, x) == f.at(0, c, y, x));
      }
  CHECK(g.count_tag("cam") == 1);
}

TEST_CASE("cam_forward validates its masks") {
  const Tensor<double> f = random_features({2, 2, 6, 6}, 3);
  Graph<double> g(false);
  const std::vector<Mask> one{Mask(6, 6)};
  CHECK_THROWS(cam_forward(g.constant(f), std::span<const Mask>(one), CamMode::kCosine, 10.0));
  const std::vector<Mask> wrong{Mask(6, 6), Mask(5, 6)};
  CHECK_THROWS(cam_forward(g.constant(f), std::span<const Mask>(wrong), CamMode::kCosine, 10.0));
}
