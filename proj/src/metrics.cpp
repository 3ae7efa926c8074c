#include "pepsi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pepsi {

namespace {

template <typename T>
void check_pair(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.shape().n != 1) throw ContractError(std::string(what) + ": expected a single image, got " + to_string(a.shape()));
}

template <typename T>
std::vector<double> luma(const Tensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> out(plane, 0.0);
  for (int c = 0; c < s.c; ++c) {
    const T* p = x.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) out[i] += p[i];
  }
  for (double& v : out) v /= s.c;
  return out;
}

std::vector<double> gaussian_window() {
  std::vector<double> g(kSsimWindow);
  double total = 0;
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    g[i] = std::exp(-double((i - r) * (i - r)) / (2 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < k; ++i) acc += g[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < k; ++i) acc += g[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> to_unit_range(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] + T(1)) / T(2);
  return out;
}

template <typename T>
double psnr(const Tensor<T>& result, const Tensor<T>& reference, const Mask* region) {
  check_pair(result, reference, "psnr");
  const Shape s = result.shape();
  if (region && (region->height() != s.h || region->width() != s.w)) {
    throw ContractError("psnr: region is " + std::to_string(region->height()) + "x" + std::to_string(region->width()) +
                        ", image is " + to_string(s));
  }
  if (region && region->hole_count() == 0) throw ContractError("psnr: empty region");
  double acc = 0;
  std::size_t count = 0;
  for (int c = 0; c < s.c; ++c) {
    const T* a = result.plane(0, c);
    const T* b = reference.plane(0, c);
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        if (region && !region->at(y, x)) continue;
        const double d = static_cast<double>(a[y * s.w + x]) - b[y * s.w + x];
        acc += d * d;
        ++count;
      }
  }
  const double mse = acc / static_cast<double>(count);
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <typename T>
double ssim(const Tensor<T>& result, const Tensor<T>& reference) {
  check_pair(result, reference, "ssim");
  const Shape s = result.shape();
  if (s.h < kSsimWindow || s.w < kSsimWindow) {
    throw SizingError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) + " smaller than the " +
                      std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  const std::vector<double> a = luma(result), b = luma(reference);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const std::vector<double> g = gaussian_window();
  const auto mu_a = filter_valid(a, s.h, s.w, g), mu_b = filter_valid(b, s.h, s.w, g);
  const auto e_aa = filter_valid(aa, s.h, s.w, g), e_bb = filter_valid(bb, s.h, s.w, g),
             e_ab = filter_valid(ab, s.h, s.w, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + kSsimC1) * (2 * cov + kSsimC2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1) * (va + vb + kSsimC2));
  }
  return total / static_cast<double>(mu_a.size());
}

template <typename T>
EvalReport evaluate(const Tensor<T>& result, const Tensor<T>& reference, const Mask& mask) {
  check_pair(result, reference, "evaluate");
  const Tensor<T> a = to_unit_range(result), b = to_unit_range(reference);
  EvalReport r;
  r.psnr_global = psnr(a, b);
  r.psnr_local = psnr(a, b, &mask);
  r.ssim = ssim(a, b);
  const Shape s = result.shape();
  double acc = 0;
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (mask.at(y, x)) acc += std::abs(static_cast<double>(result.at(0, c, y, x)) - reference.at(0, c, y, x));
  r.hole_pixels = mask.hole_count();
  r.total_pixels = static_cast<std::size_t>(s.h) * s.w;
  r.l1_local = acc / (static_cast<double>(r.hole_pixels) * s.c);
  return r;
}

#define PEPSI_INSTANTIATE_METRICS(T)                                         \
  template Tensor<T> to_unit_range(const Tensor<T>&);                        \
  template double psnr(const Tensor<T>&, const Tensor<T>&, const Mask*);     \
  template double ssim(const Tensor<T>&, const Tensor<T>&);                  \
  template EvalReport evaluate(const Tensor<T>&, const Tensor<T>&, const Mask&);

PEPSI_INSTANTIATE_METRICS(float)
PEPSI_INSTANTIATE_METRICS(double)

}  // namespace pepsi
