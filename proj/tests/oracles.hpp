// Slow reference implementations written straight from the definitions;
// they share no code with the library beyond the data types.
#pragma once

#include <cmath>
#include <vector>

#include "pepsi/attention.hpp"
#include "pepsi/mask.hpp"
#include "pepsi/ops.hpp"

namespace oracle {

using pepsi::Mask;
using pepsi::Shape;
using pepsi::Tensor;

inline int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// Direct seven-loop convolution.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                             const pepsi::ConvOptions& opt) {
  const Shape xs = x.shape(), ws = w.shape();
  const int k = ws.n, cin_g = ws.h, cout = ws.w, groups = opt.groups, cout_g = cout / groups;
  const int span = opt.dilation * (k - 1) + 1;
  int ho, wo, pt = 0, pl = 0;
  if (opt.padding == pepsi::Padding::kNone) {
    ho = (xs.h - span) / opt.stride_h + 1;
    wo = (xs.w - span) / opt.stride_w + 1;
  } else {
    ho = (xs.h + opt.stride_h - 1) / opt.stride_h;
    wo = (xs.w + opt.stride_w - 1) / opt.stride_w;
    pt = std::max(0, (ho - 1) * opt.stride_h + span - xs.h) / 2;
    pl = std::max(0, (wo - 1) * opt.stride_w + span - xs.w) / 2;
  }
  Tensor<double> out(Shape{xs.n, cout, ho, wo});
  for (int n = 0; n < xs.n; ++n)
    for (int oc = 0; oc < cout; ++oc) {
      const int grp = oc / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(oc)] : 0.0;
          for (int ic = 0; ic < cin_g; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                int iy = oy * opt.stride_h - pt + ky * opt.dilation;
                int ix = ox * opt.stride_w - pl + kx * opt.dilation;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) {
                  if (opt.padding != pepsi::Padding::kReflect) continue;
                  iy = mirror(iy, xs.h);
                  ix = mirror(ix, xs.w);
                }
                acc += x.at(n, grp * cin_g + ic, iy, ix) * w.at(ky, kx, ic, oc);
              }
          out.at(n, oc, oy, ox) = acc;
        }
    }
  return out;
}

/// Contextual attention by triple loop: for every hole pixel, over every
/// foreground patch covering it, over every background patch.
inline Tensor<double> cam(const Tensor<double>& f, const std::vector<Mask>& masks, pepsi::CamMode mode,
                          double lambda) {
  const Shape s = f.shape();
  Tensor<double> out = f;
  auto patch = [&](int n, int cy, int cx) {
    std::vector<double> v;
    for (int c = 0; c < s.c; ++c)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) v.push_back(f.at(n, c, mirror(cy + dy, s.h), mirror(cx + dx, s.w)));
    return v;
  };
  for (int n = 0; n < s.n; ++n) {
    const Mask& m = masks[static_cast<std::size_t>(n)];
    std::vector<std::vector<double>> bg;
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x)
        if (!m.at(y, x)) bg.push_back(patch(n, y, x));
    // Rebuilt patch for each foreground centre.
    std::vector<std::vector<double>> rebuilt(static_cast<std::size_t>(s.h * s.w));
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        if (!m.at(y, x)) continue;
        const std::vector<double> fp = patch(n, y, x);
        std::vector<double> score(bg.size());
        if (mode == pepsi::CamMode::kCosine) {
          double nf = 0;
          for (double v : fp) nf += v * v;
          for (std::size_t j = 0; j < bg.size(); ++j) {
            double dot = 0, nb = 0;
            for (std::size_t e = 0; e < fp.size(); ++e) {
              dot += fp[e] * bg[j][e];
              nb += bg[j][e] * bg[j][e];
            }
            score[j] = (nf == 0 || nb == 0) ? 0.0 : dot / std::sqrt(nf * nb);
          }
        } else {
          std::vector<double> d(bg.size());
          double mu = 0;
          for (std::size_t j = 0; j < bg.size(); ++j) {
            double acc = 0;
            for (std::size_t e = 0; e < fp.size(); ++e) acc += (fp[e] - bg[j][e]) * (fp[e] - bg[j][e]);
            d[j] = std::sqrt(acc);
            mu += d[j];
          }
          mu /= static_cast<double>(bg.size());
          double var = 0;
          for (double v : d) var += (v - mu) * (v - mu);
          const double sigma = std::max(std::sqrt(var / static_cast<double>(bg.size())), 1e-8);
          for (std::size_t j = 0; j < bg.size(); ++j) score[j] = std::tanh(-(d[j] - mu) / sigma);
        }
        double top = -1e300, z = 0;
        for (double v : score) top = std::max(top, lambda * v);
        std::vector<double> wts(bg.size());
        for (std::size_t j = 0; j < bg.size(); ++j) z += wts[j] = std::exp(lambda * score[j] - top);
        std::vector<double> r(fp.size(), 0.0);
        for (std::size_t j = 0; j < bg.size(); ++j)
          for (std::size_t e = 0; e < fp.size(); ++e) r[e] += wts[j] / z * bg[j][e];
        rebuilt[static_cast<std::size_t>(y * s.w + x)] = r;
      }
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < s.c; ++c) {
          double acc = 0;
          int count = 0;
          for (int cy = 0; cy < s.h; ++cy)
            for (int cx = 0; cx < s.w; ++cx) {
              if (!m.at(cy, cx)) continue;
              for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                  if (mirror(cy + dy, s.h) != y || mirror(cx + dx, s.w) != x) continue;
                  acc += rebuilt[static_cast<std::size_t>(cy * s.w + cx)][static_cast<std::size_t>(c * 9 + (dy + 1) * 3 + dx + 1)];
                  ++count;
                }
            }
          out.at(n, c, y, x) = acc / count;
        }
      }
  }
  return out;
}

/// Pixel centre (integer coordinates) within brush/2 of any stroke segment.
inline Mask rasterize(const std::vector<pepsi::Stroke>& strokes, int h, int w) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = x, py = y;
      bool hit = false;
      for (const auto& s : strokes) {
        const double r = s.brush_width / 2;
        const auto& v = s.vertices;
        if (v.size() == 1) hit |= std::hypot(px - v[0].first, py - v[0].second) <= r;
        for (std::size_t i = 0; i + 1 < v.size() && !hit; ++i) {
          const double ax = v[i].first, ay = v[i].second, bx = v[i + 1].first, by = v[i + 1].second;
          const double len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
          double t = len2 > 0 ? ((px - ax) * (bx - ax) + (py - ay) * (by - ay)) / len2 : 0.0;
          t = std::min(1.0, std::max(0.0, t));
          hit |= std::hypot(px - (ax + t * (bx - ax)), py - (ay + t * (by - ay))) <= r;
        }
        if (hit) break;
      }
      m.set(y, x, hit);
    }
  return m;
}

/// Inputs in [0, 1].
inline double psnr(const Tensor<double>& a, const Tensor<double>& b, const Mask* region) {
  double acc = 0;
  long count = 0;
  const Shape s = a.shape();
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        if (region && !region->at(y, x)) continue;
        const double d = a.at(0, c, y, x) - b.at(0, c, y, x);
        acc += d * d;
        ++count;
      }
  if (acc == 0) return 99.0;
  return std::min(99.0, -10 * std::log10(acc / count));
}

/// Direct 2-D 11x11 windows, no separability.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b) {
  const Shape s = a.shape();
  auto luma = [&](const Tensor<double>& t, int y, int x) {
    double v = 0;
    for (int c = 0; c < s.c; ++c) v += t.at(0, c, y, x);
    return v / s.c;
  };
  double g[11][11], gs = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int windows = 0;
  for (int y0 = 0; y0 + 11 <= s.h; ++y0)
    for (int x0 = 0; x0 + 11 <= s.w; ++x0) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i][j] / gs * luma(a, y0 + i, x0 + j);
          mb += g[i][j] / gs * luma(b, y0 + i, x0 + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = luma(a, y0 + i, x0 + j) - ma, db = luma(b, y0 + i, x0 + j) - mb;
          va += g[i][j] / gs * da * da;
          vb += g[i][j] / gs * db * db;
          cov += g[i][j] / gs * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / windows;
}

}  // namespace oracle
