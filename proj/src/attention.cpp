#include "pepsi/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pepsi/ops.hpp"

namespace pepsi {

namespace {

constexpr double kZeroNorm = 1e-12;

// Flat source offsets (within one sample) of the 3x3xC patch centred at (y, x).
std::vector<std::size_t> patch_sources(int c_count, int h, int w, int y, int x) {
  std::vector<std::size_t> src(static_cast<std::size_t>(c_count) * 9);
  std::size_t e = 0;
  for (int c = 0; c < c_count; ++c)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int sy = reflect_index(y + dy, h);
        const int sx = reflect_index(x + dx, w);
        src[e++] = (static_cast<std::size_t>(c) * h + sy) * w + sx;
      }
  return src;
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename T>
double norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
double distance(std::span<const T> a, std::span<const T> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Attention state of one batch sample, kept for the backward sweep.
template <typename T>
struct SampleCam {
  int n = 0;
  std::vector<std::vector<std::size_t>> fg_src;  // per fg patch: flat offsets
  std::vector<std::vector<std::size_t>> bg_src;
  std::vector<std::vector<T>> fg;                 // patch values
  std::vector<std::vector<T>> bg;
  std::vector<std::vector<T>> scores;             // [fg][bg]
  std::vector<std::vector<T>> weights;            // [fg][bg]
  std::vector<std::size_t> hole_pixels;           // flat (y * w + x) of fg pixels
  std::vector<int> coverage;                      // per hole pixel in plane (size h * w)
};

Mask checked_mask(std::span<const Mask> masks, int n, const Shape& s) {
  if (masks.size() != static_cast<std::size_t>(s.n)) {
    throw ContractError("cam: " + std::to_string(masks.size()) + " masks for a batch of " + std::to_string(s.n));
  }
  const Mask& m = masks[static_cast<std::size_t>(n)];
  if (m.height() != s.h || m.width() != s.w) {
    throw ContractError("cam: mask " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                        " does not match features " + to_string(s));
  }
  return m;
}

}  // namespace

template <typename T>
std::pair<PatchSet<T>, PatchSet<T>> split_patches(const Tensor<T>& features, const Mask& mask_small, int n) {
  const Shape s = features.shape();
  if (mask_small.height() != s.h || mask_small.width() != s.w) {
    throw ContractError("split_patches: mask extents do not match features " + to_string(s));
  }
  PatchSet<T> fg{PatchRole::kForeground, {}};
  PatchSet<T> bg{PatchRole::kBackground, {}};
  const T* base = features.plane(n, 0);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      Patch<T> p{y, x, {}};
      const auto src = patch_sources(s.c, s.h, s.w, y, x);
      p.values.resize(src.size());
      for (std::size_t e = 0; e < src.size(); ++e) p.values[e] = base[src[e]];
      (mask_small.at(y, x) ? fg : bg).patches.push_back(std::move(p));
    }
  if (bg.patches.empty() && !fg.patches.empty()) {
    throw ContractError("split_patches: background patch set is empty");
  }
  return {std::move(fg), std::move(bg)};
}

template <typename T>
std::vector<T> cosine_scores(std::span<const T> f, const PatchSet<T>& background) {
  std::vector<T> out(background.patches.size(), T(0));
  const double nf = norm(f);
  if (nf < kZeroNorm) return out;
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::span<const T> b = background.patches[j].values;
    const double nb = norm(b);
    if (nb < kZeroNorm) continue;
    out[j] = static_cast<T>(dot(f, b) / (nf * nb));
  }
  return out;
}

template <typename T>
std::vector<T> truncated_distance_scores(std::span<const T> f, const PatchSet<T>& background) {
  const std::size_t m = background.patches.size();
  std::vector<double> d(m);
  double mean = 0;
  for (std::size_t j = 0; j < m; ++j) {
    d[j] = distance(f, std::span<const T>(background.patches[j].values));
    mean += d[j];
  }
  mean /= static_cast<double>(std::max<std::size_t>(m, 1));
  double var = 0;
  for (double e : d) var += (e - mean) * (e - mean);
  const double sigma = std::max(std::sqrt(var / static_cast<double>(std::max<std::size_t>(m, 1))), kDistanceSigmaFloor);
  std::vector<T> out(m);
  for (std::size_t j = 0; j < m; ++j) out[j] = static_cast<T>(std::tanh(-(d[j] - mean) / sigma));
  return out;
}

template <typename T>
std::vector<T> attention_weights(std::span<const T> scores, T lambda) {
  return scaled_softmax(scores, lambda);
}

Mask downsample_mask(const Mask& m, int h, int w) {
  if (h < 1 || w < 1) throw ContractError("downsample_mask: empty target");
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(m.height() - 1, static_cast<int>((y + 0.5) * m.height() / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(m.width() - 1, static_cast<int>((x + 0.5) * m.width() / w));
      out.set(y, x, m.at(sy, sx) != 0);
    }
  }
  return out;
}

template <typename T>
Var<T> cam_forward(Var<T> features, std::span<const Mask> masks_small, CamMode mode, T lambda) {
  const Shape s = features.shape();
  const Tensor<T>& fv = features.value();
  Tensor<T> out = fv;
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  auto samples = std::make_shared<std::vector<SampleCam<T>>>();

  for (int n = 0; n < s.n; ++n) {
    const Mask mask = checked_mask(masks_small, n, s);
    auto [fg, bg] = split_patches(fv, mask, n);
    if (fg.patches.empty()) continue;

    SampleCam<T> sc;
    sc.n = n;
    for (const auto& p : fg.patches) {
      sc.fg_src.push_back(patch_sources(s.c, s.h, s.w, p.y, p.x));
      sc.fg.push_back(p.values);
    }
    for (const auto& p : bg.patches) {
      sc.bg_src.push_back(patch_sources(s.c, s.h, s.w, p.y, p.x));
      sc.bg.push_back(p.values);
    }
    const std::size_t dim = sc.fg.front().size();
    const std::size_t nb = sc.bg.size();

    std::vector<T> acc(static_cast<std::size_t>(s.c) * plane, T(0));
    sc.coverage.assign(plane, 0);
    for (std::size_t i = 0; i < sc.fg.size(); ++i) {
      std::span<const T> f = sc.fg[i];
      sc.scores.push_back(mode == CamMode::kCosine ? cosine_scores(f, bg) : truncated_distance_scores(f, bg));
      sc.weights.push_back(attention_weights<T>(sc.scores.back(), lambda));
      const auto& wts = sc.weights.back();
      std::vector<T> rebuilt(dim, T(0));
      for (std::size_t j = 0; j < nb; ++j) {
        const T wj = wts[j];
        const T* b = sc.bg[j].data();
        for (std::size_t e = 0; e < dim; ++e) rebuilt[e] += wj * b[e];
      }
      for (std::size_t e = 0; e < dim; ++e) acc[sc.fg_src[i][e]] += rebuilt[e];
      // one coverage count per (patch, tap), shared across channels
      for (std::size_t e = 0; e < 9; ++e) ++sc.coverage[sc.fg_src[i][e]];
    }
    T* o = out.plane(n, 0);
    for (std::size_t px = 0; px < plane; ++px) {
      if (!mask.bits()[px]) continue;
      sc.hole_pixels.push_back(px);
      const T inv = T(1) / static_cast<T>(sc.coverage[px]);
      for (int c = 0; c < s.c; ++c) {
        const std::size_t k = static_cast<std::size_t>(c) * plane + px;
        o[k] = acc[k] * inv;
      }
    }
    samples->push_back(std::move(sc));
  }

  const std::size_t ix = features.id;
  Var<T> result = features.graph->record(std::move(out), {ix}, [ix, s, plane, samples, mode, lambda](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(ix);
    std::vector<char> hole(plane);
    std::size_t next = 0;
    for (int n = 0; n < s.n; ++n) {
      const SampleCam<T>* sc = (next < samples->size() && (*samples)[next].n == n) ? &(*samples)[next++] : nullptr;
      std::fill(hole.begin(), hole.end(), 0);
      if (sc) for (std::size_t px : sc->hole_pixels) hole[px] = 1;
      const T* gop = go.plane(n, 0);
      T* gxp = gx.plane(n, 0);
      for (int c = 0; c < s.c; ++c)
        for (std::size_t px = 0; px < plane; ++px) {
          const std::size_t k = static_cast<std::size_t>(c) * plane + px;
          if (!hole[px]) gxp[k] += gop[k];
        }
      if (!sc) continue;

      const std::size_t nf = sc->fg.size(), nb = sc->bg.size(), dim = sc->fg.front().size();
      std::vector<T> gacc(static_cast<std::size_t>(s.c) * plane, T(0));
      for (std::size_t px : sc->hole_pixels) {
        const T inv = T(1) / static_cast<T>(sc->coverage[px]);
        for (int c = 0; c < s.c; ++c) {
          const std::size_t k = static_cast<std::size_t>(c) * plane + px;
          gacc[k] = gop[k] * inv;
        }
      }
      std::vector<std::vector<T>> gfg(nf, std::vector<T>(dim, T(0)));
      std::vector<std::vector<T>> gbg(nb, std::vector<T>(dim, T(0)));
      std::vector<double> gw(nb), gs(nb);
      std::vector<T> grebuilt(dim);
      for (std::size_t i = 0; i < nf; ++i) {
        for (std::size_t e = 0; e < dim; ++e) grebuilt[e] = gacc[sc->fg_src[i][e]];
        const auto& wts = sc->weights[i];
        const auto& sco = sc->scores[i];
        double wgw = 0;
        for (std::size_t j = 0; j < nb; ++j) {
          gw[j] = dot<T>(grebuilt, sc->bg[j]);
          wgw += wts[j] * gw[j];
          T* gb = gbg[j].data();
          for (std::size_t e = 0; e < dim; ++e) gb[e] += wts[j] * grebuilt[e];
        }
        for (std::size_t j = 0; j < nb; ++j) gs[j] = lambda * wts[j] * (gw[j] - wgw);

        std::span<const T> f = sc->fg[i];
        T* gf = gfg[i].data();
        if (mode == CamMode::kCosine) {
          const double nfv = norm(f);
          if (nfv < kZeroNorm) continue;
          for (std::size_t j = 0; j < nb; ++j) {
            std::span<const T> b = sc->bg[j];
            const double nbv = norm(b);
            if (nbv < kZeroNorm || gs[j] == 0.0) continue;
            const double sj = sco[j];
            T* gb = gbg[j].data();
            for (std::size_t e = 0; e < dim; ++e) {
              const double fh = f[e] / nfv, bh = b[e] / nbv;
              gf[e] += static_cast<T>(gs[j] * (bh - sj * fh) / nfv);
              gb[e] += static_cast<T>(gs[j] * (fh - sj * bh) / nbv);
            }
          }
        } else {
          std::vector<double> d(nb), z(nb), gz(nb);
          double mu = 0;
          for (std::size_t j = 0; j < nb; ++j) {
            d[j] = distance(f, std::span<const T>(sc->bg[j]));
            mu += d[j];
          }
          mu /= static_cast<double>(nb);
          double var = 0;
          for (double e : d) var += (e - mu) * (e - mu);
          const double sigma_raw = std::sqrt(var / static_cast<double>(nb));
          const double sigma = std::max(sigma_raw, kDistanceSigmaFloor);
          double mean_gz = 0, mean_gzz = 0;
          for (std::size_t j = 0; j < nb; ++j) {
            z[j] = (d[j] - mu) / sigma;
            const double t = std::tanh(-z[j]);
            gz[j] = -gs[j] * (1.0 - t * t);
            mean_gz += gz[j];
            mean_gzz += gz[j] * z[j];
          }
          mean_gz /= static_cast<double>(nb);
          mean_gzz /= static_cast<double>(nb);
          const bool floored = !(sigma_raw > kDistanceSigmaFloor);
          for (std::size_t j = 0; j < nb; ++j) {
            const double gd = (gz[j] - mean_gz - (floored ? 0.0 : z[j] * mean_gzz)) / sigma;
            if (d[j] <= 0.0 || gd == 0.0) continue;
            const T* b = sc->bg[j].data();
            T* gb = gbg[j].data();
            for (std::size_t e = 0; e < dim; ++e) {
              const double u = (static_cast<double>(f[e]) - b[e]) / d[j];
              gf[e] += static_cast<T>(gd * u);
              gb[e] -= static_cast<T>(gd * u);
            }
          }
        }
      }
      for (std::size_t i = 0; i < nf; ++i)
        for (std::size_t e = 0; e < dim; ++e) gxp[sc->fg_src[i][e]] += gfg[i][e];
      for (std::size_t j = 0; j < nb; ++j)
        for (std::size_t e = 0; e < dim; ++e) gxp[sc->bg_src[j][e]] += gbg[j][e];
    }
  });
  features.graph->set_tag(result.id, "cam");
  return result;
}

#define PEPSI_INSTANTIATE_CAM(T)                                                                         \
  template std::pair<PatchSet<T>, PatchSet<T>> split_patches(const Tensor<T>&, const Mask&, int);        \
  template std::vector<T> cosine_scores(std::span<const T>, const PatchSet<T>&);                         \
  template std::vector<T> truncated_distance_scores(std::span<const T>, const PatchSet<T>&);             \
  template std::vector<T> attention_weights(std::span<const T>, T);                                      \
  template Var<T> cam_forward(Var<T>, std::span<const Mask>, CamMode, T);

PEPSI_INSTANTIATE_CAM(float)
PEPSI_INSTANTIATE_CAM(double)

}  // namespace pepsi
