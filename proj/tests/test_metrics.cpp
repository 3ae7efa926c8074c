#include <doctest.h>

#include <random>

#include "audits.hpp"
#include "oracles.hpp"
#include "pepsi/metrics.hpp"

using namespace pepsi;

TEST_CASE("psnr") {
  std::mt19937_64 rng(1);
  const Tensor<double> x = audit::uniform({1, 3, 16, 16}, rng, 0, 1);
  CHECK(psnr(x, x) == kPsnrCap);
  Tensor<double> y = x;
  for (double& v : y.data()) v += 0.1;
  CHECK(psnr(y, x) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(x, y) == psnr(y, x));

  // Error only inside the hole: the local score is the harsher one.
  const Mask m = gen_square_mask(16, 16, Box{4, 4, 6, 6});
  Tensor<double> z = x;
  for (int c = 0; c < 3; ++c)
    for (int r = 4; r < 10; ++r)
      for (int q = 4; q < 10; ++q) z.at(0, c, r, q) += 0.2;
  CHECK(psnr(z, x, &m) < psnr(z, x));
  CHECK(psnr(z, x, &m) == doctest::Approx(oracle::psnr(z, x, &m)).epsilon(1e-12));
  Mask full(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int q = 0; q < 16; ++q) full.set(r, q, true);
  CHECK(psnr(z, x, &full) == doctest::Approx(psnr(z, x)).epsilon(1e-12));
  const Mask empty(16, 16);
  CHECK_THROWS(psnr(z, x, &empty));
  CHECK_THROWS(psnr(z, Tensor<double>(Shape{1, 3, 8, 8})));
}

TEST_CASE("ssim") {
  std::mt19937_64 rng(2);
  const Tensor<double> x = audit::uniform({1, 3, 16, 16}, rng, 0.2, 0.8);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));

  Tensor<double> checker(Shape{1, 3, 16, 16}), inverse(Shape{1, 3, 16, 16});
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 16; ++r)
      for (int q = 0; q < 16; ++q) {
        checker.at(0, c, r, q) = (r + q) % 2;
        inverse.at(0, c, r, q) = 1 - (r + q) % 2;
      }
  CHECK(ssim(checker, inverse) < 0);

  Tensor<double> y = x, shifted = x, shifted_y = x;
  std::normal_distribution<double> noise(0, 0.05);
  for (double& v : y.data()) v += noise(rng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    shifted[i] = x[i] + 0.05;
    shifted_y[i] = y[i] + 0.05;
  }
  CHECK(std::abs(ssim(shifted_y, shifted) - ssim(y, x)) < 1e-4);
  CHECK(ssim(y, x) == doctest::Approx(ssim(x, y)).epsilon(1e-12));
  CHECK(ssim(y, x) == doctest::Approx(oracle::ssim(y, x)).epsilon(1e-6));
  CHECK(ssim(y, x) < 1);
  CHECK_THROWS_AS(ssim(Tensor<double>(Shape{1, 3, 10, 16}), Tensor<double>(Shape{1, 3, 10, 16})), SizingError);
}

TEST_CASE("evaluate scores in signed units") {
  std::mt19937_64 rng(3);
  const Tensor<float> ref = audit::uniform({1, 3, 16, 16}, rng).cast<float>();
  const Mask m = gen_square_mask(16, 16, Box{0, 0, 8, 8});
  Tensor<float> out = ref;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 8; ++r)
      for (int q = 0; q < 8; ++q) out.at(0, c, r, q) += 0.2f;
  const EvalReport e = evaluate(out, ref, m);
  CHECK(e.hole_pixels == 64);
  CHECK(e.total_pixels == 256);
  CHECK(e.l1_local == doctest::Approx(0.2).epsilon(1e-5));
  CHECK(e.psnr_local == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(e.psnr_global > e.psnr_local);
  CHECK(evaluate(ref, ref, m).psnr_local == kPsnrCap);
}
