#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pepsi/mask.hpp"

using namespace pepsi;

TEST_CASE("square mask from a box") {
  const Mask m = gen_square_mask(8, 8, Box{2, 3, 4, 4});
  CHECK(m.hole_count() == 16);
  CHECK(m.at(2, 3) == 1);
  CHECK(m.at(5, 6) == 1);
  CHECK(m.at(6, 6) == 0);
  CHECK(m.at(2, 2) == 0);
  CHECK_THROWS(gen_square_mask(8, 8, Box{6, 0, 4, 4}));
  CHECK(gen_square_mask(8, 8, Box{0, 0, 0, 4}).hole_count() == 0);
  CHECK_THROWS(gen_square_mask(8, 8, Box{-1, 0, 2, 2}));
}

TEST_CASE("random square side stays within a quarter to a half of the extent") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Mask m = gen_square_mask(32, 32, rng);
    const std::size_t n = m.hole_count();
    CHECK(n >= 8 * 8);
    CHECK(n <= 16 * 16);
  }
}

TEST_CASE("free-form hole fraction lands in [0.05, 0.50] for 1000 seeds at 256x256") {
  const FreeFormParams p = FreeFormParams::defaults(256, 256);
  int inside = 0;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const double f = gen_freeform_mask(p, rng).hole_fraction();
    inside += (f >= 0.05 && f <= 0.50) ? 1 : 0;
    total += f;
  }
  CHECK(inside == 1000);
  CHECK(total / 1000 > 0.1);
}

TEST_CASE("free-form generation is deterministic per seed") {
  const FreeFormParams p = FreeFormParams::defaults(64, 64);
  std::mt19937_64 a(11), b(11), c(12);
  const Mask ma = gen_freeform_mask(p, a);
  CHECK(ma == gen_freeform_mask(p, b));
  CHECK_FALSE(ma == gen_freeform_mask(p, c));
}

TEST_CASE("rasterization matches the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    const FreeFormParams p = FreeFormParams::defaults(48, 40);
    const std::vector<Stroke> strokes = sample_strokes(p, rng);
    CHECK(rasterize_strokes(strokes, 48, 40) == oracle::rasterize(strokes, 48, 40));
  }
}

TEST_CASE("stroke sampling respects the parameter ranges") {
  const FreeFormParams p = FreeFormParams::defaults(256, 256);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto strokes = sample_strokes(p, rng);
    CHECK(static_cast<int>(strokes.size()) >= p.min_strokes);
    CHECK(static_cast<int>(strokes.size()) <= p.max_strokes);
    for (const Stroke& s : strokes) {
      CHECK(s.brush_width >= p.min_brush);
      CHECK(s.brush_width <= p.max_brush);
      CHECK(static_cast<int>(s.vertices.size()) <= p.max_vertices);
      for (const auto& [x, y] : s.vertices) {
        CHECK(x >= 0);
        CHECK(x <= 256);
        CHECK(y >= 0);
        CHECK(y <= 256);
      }
    }
  }
}

TEST_CASE("single-vertex stroke is a disk") {
  const std::vector<Stroke> s{Stroke{{{5.0, 5.0}}, 4.0}};
  const Mask m = rasterize_strokes(s, 10, 10);
  CHECK(m.at(4, 4) == 1);
  CHECK(m.at(5, 5) == 1);
  CHECK(m.at(9, 9) == 0);
  CHECK(m == oracle::rasterize(s, 10, 10));
}

TEST_CASE("free-form parameter validation") {
  FreeFormParams p = FreeFormParams::defaults(64, 64);
  CHECK_NOTHROW(p.validate());
  p.max_brush = 32;
  CHECK_THROWS(p.validate());
  p = FreeFormParams::defaults(64, 64);
  p.min_strokes = 6;
  CHECK_THROWS(p.validate());
}

TEST_CASE("mask tensors and network input") {
  Mask a(2, 2), b(2, 2);
  a.set(0, 1, true);
  b.set(1, 0, true);
  const std::vector<Mask> ms{a, b};
  const Tensor<float> t = stack_masks<float>(ms);
  CHECK(t.shape() == Shape{2, 1, 2, 2});
  CHECK(mask_from_tensor(t, 1) == b);
  CHECK(mask_tensor<float>(a).at(0, 0, 0, 1) == 1.0f);

  Tensor<float> img(Shape{2, 3, 2, 2}, 0.5f);
  const Tensor<float> in = compose_input(img, t);
  CHECK(in.shape() == Shape{2, 4, 2, 2});
  CHECK(in.at(0, 0, 0, 1) == 0.0f);
  CHECK(in.at(0, 2, 0, 0) == 0.5f);
  CHECK(in.at(0, 3, 0, 1) == 1.0f);
  CHECK(in.at(1, 3, 0, 1) == 0.0f);
  img[0] = 1.5f;
  CHECK_THROWS(compose_input(img, t));
  CHECK_THROWS(compose_input(Tensor<float>(Shape{1, 3, 2, 2}), t));
}
