#include "pepsi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pepsi {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ContractError(std::string(op) + ": shape " + to_string(a) + " vs " + to_string(b));
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// out[M x N] += a[M x K] * b[K x N]
template <typename T>
void gemm_nn(int m, int n, int k, const T* __restrict a, const T* __restrict b, T* __restrict out) {
  for (int i = 0; i < m; ++i) {
    T* __restrict row = out + static_cast<std::size_t>(i) * n;
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int r = 0; r < k; ++r) {
      const T av = arow[r];
      if (av == T(0)) continue;
      const T* __restrict brow = b + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// out[M x K] += a[M x N] * b[K x N]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* __restrict a, const T* __restrict b, T* __restrict out) {
  for (int i = 0; i < m; ++i) {
    const T* __restrict arow = a + static_cast<std::size_t>(i) * n;
    T* orow = out + static_cast<std::size_t>(i) * k;
    for (int r = 0; r < k; ++r) {
      const T* __restrict brow = b + static_cast<std::size_t>(r) * n;
      T acc = 0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      orow[r] += acc;
    }
  }
}

// out[K x N] += a[M x K]^T * b[M x N]
template <typename T>
void gemm_tn(int m, int n, int k, const T* __restrict a, const T* __restrict b, T* __restrict out) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    const T* __restrict brow = b + static_cast<std::size_t>(i) * n;
    for (int r = 0; r < k; ++r) {
      const T av = arow[r];
      if (av == T(0)) continue;
      T* __restrict orow = out + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

struct ConvGeometry {
  int k = 0, cin = 0, cout = 0, groups = 1, cin_g = 0, cout_g = 0;
  int h = 0, w = 0, ho = 0, wo = 0;
  bool direct = false;        // 1x1, stride 1: the input plane is its own column matrix
  std::vector<int> row_src;   // [ky * ho + oy] -> source row or -1
  std::vector<int> col_src;   // [kx * wo + ox] -> source col or -1

  int rows() const { return cin_g * k * k; }
  int pixels() const { return ho * wo; }
};

std::vector<int> source_indices(int in, int out, int k, int stride, int dilation, Padding padding,
                                const char* axis) {
  int pad_before = 0;
  if (padding != Padding::kNone) {
    const int total = std::max((out - 1) * stride + dilation * (k - 1) + 1 - in, 0);
    pad_before = total / 2;
    if (padding == Padding::kReflect && total > 0 && in < 2) {
      throw SizingError(std::string("conv2d: reflect padding needs at least 2 samples along ") + axis +
                        ", got " + std::to_string(in));
    }
  }
  std::vector<int> src(static_cast<std::size_t>(k) * out);
  for (int t = 0; t < k; ++t) {
    for (int o = 0; o < out; ++o) {
      int i = o * stride - pad_before + t * dilation;
      if (i < 0 || i >= in) {
        i = padding == Padding::kReflect ? reflect_index(i, in) : -1;
      }
      src[static_cast<std::size_t>(t) * out + o] = i;
    }
  }
  return src;
}

ConvGeometry make_geometry(const Shape& xs, const Shape& ws, const ConvOptions& opt) {
  ConvGeometry g;
  if (ws.n != ws.c || ws.n % 2 == 0) {
    throw ContractError("conv2d: kernel must be square with odd extent, got " + to_string(ws));
  }
  if (opt.groups < 1 || opt.stride_h < 1 || opt.stride_w < 1 || opt.dilation < 1) {
    throw ContractError("conv2d: stride, dilation and groups must be positive");
  }
  g.k = ws.n;
  g.groups = opt.groups;
  g.cin_g = ws.h;
  g.cout = ws.w;
  g.cin = g.cin_g * g.groups;
  if (xs.c != g.cin) {
    throw ContractError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                        std::to_string(g.cin));
  }
  if (g.cout % g.groups != 0) throw ContractError("conv2d: output channels not divisible by groups");
  g.cout_g = g.cout / g.groups;
  g.h = xs.h;
  g.w = xs.w;
  g.ho = conv_output_extent(xs.h, g.k, opt.stride_h, opt.dilation, opt.padding);
  g.wo = conv_output_extent(xs.w, g.k, opt.stride_w, opt.dilation, opt.padding);
  g.row_src = source_indices(g.h, g.ho, g.k, opt.stride_h, opt.dilation, opt.padding, "height");
  g.col_src = source_indices(g.w, g.wo, g.k, opt.stride_w, opt.dilation, opt.padding, "width");
  g.direct = g.k == 1 && opt.stride_h == 1 && opt.stride_w == 1 && g.ho == g.h && g.wo == g.w;
  return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const int p = g.pixels();
  for (int ci = 0; ci < g.cin_g; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        const int* cols = g.col_src.data() + static_cast<std::size_t>(kx) * g.wo;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int sy = g.row_src[static_cast<std::size_t>(ky) * g.ho + oy];
          T* drow = dst + static_cast<std::size_t>(oy) * g.wo;
          if (sy < 0) {
            std::fill(drow, drow + g.wo, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int sx = cols[ox];
            drow[ox] = sx < 0 ? T(0) : srow[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* gx) {
  const int p = g.pixels();
  for (int ci = 0; ci < g.cin_g; ++ci) {
    T* plane = gx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = col + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * p;
        const int* cols = g.col_src.data() + static_cast<std::size_t>(kx) * g.wo;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int sy = g.row_src[static_cast<std::size_t>(ky) * g.ho + oy];
          if (sy < 0) continue;
          T* drow = plane + static_cast<std::size_t>(sy) * g.w;
          const T* srow = src + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int sx = cols[ox];
            if (sx >= 0) drow[sx] += srow[ox];
          }
        }
      }
    }
  }
}

// HWIO kernel -> per-group row-major [cout][cin_g * k * k].
template <typename T>
std::vector<T> kernel_to_rows(const ConvGeometry& g, const Tensor<T>& w) {
  std::vector<T> rows(static_cast<std::size_t>(g.cout) * g.rows());
  const int r_n = g.rows();
  for (int ky = 0; ky < g.k; ++ky) {
    for (int kx = 0; kx < g.k; ++kx) {
      for (int ci = 0; ci < g.cin_g; ++ci) {
        const T* src = w.ptr() + static_cast<std::size_t>((ky * g.k + kx) * g.cin_g + ci) * g.cout;
        const int r = (ci * g.k + ky) * g.k + kx;
        for (int oc = 0; oc < g.cout; ++oc) rows[static_cast<std::size_t>(oc) * r_n + r] = src[oc];
      }
    }
  }
  return rows;
}

template <typename T>
void rows_to_kernel_acc(const ConvGeometry& g, const std::vector<T>& rows, Tensor<T>& gw) {
  const int r_n = g.rows();
  for (int ky = 0; ky < g.k; ++ky) {
    for (int kx = 0; kx < g.k; ++kx) {
      for (int ci = 0; ci < g.cin_g; ++ci) {
        T* dst = gw.ptr() + static_cast<std::size_t>((ky * g.k + kx) * g.cin_g + ci) * g.cout;
        const int r = (ci * g.k + ky) * g.k + kx;
        for (int oc = 0; oc < g.cout; ++oc) dst[oc] += rows[static_cast<std::size_t>(oc) * r_n + r];
      }
    }
  }
}

template <typename T>
T activate(Activation kind, T v) {
  switch (kind) {
    case Activation::kElu: return v > T(0) ? v : std::expm1(v);
    case Activation::kLeakyRelu: return v > T(0) ? v : static_cast<T>(kLeakySlope) * v;
    case Activation::kTanh: return std::tanh(v);
    case Activation::kClipUnit: return std::clamp(v, T(-1), T(1));
    case Activation::kRelu: return v > T(0) ? v : T(0);
  }
  return v;
}

// Derivative expressed through input v and output y.
template <typename T>
T activate_grad(Activation kind, T v, T y) {
  switch (kind) {
    case Activation::kElu: return v > T(0) ? T(1) : y + T(1);
    case Activation::kLeakyRelu: return v > T(0) ? T(1) : static_cast<T>(kLeakySlope);
    case Activation::kTanh: return T(1) - y * y;
    case Activation::kClipUnit: return (v >= T(-1) && v <= T(1)) ? T(1) : T(0);
    case Activation::kRelu: return v > T(0) ? T(1) : T(0);
  }
  return T(1);
}

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <typename T>
Var<T> binary(Var<T> a, Var<T> b, const char* op, T sa, T sb, bool product) {
  require_same_shape(a.shape(), b.shape(), op);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = product ? av[i] * bv[i] : sa * av[i] + sb * bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(std::move(out), {ia, ib}, [ia, ib, sa, sb, product](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor<T>& ga = g.grad(ia);
      const Tensor<T>& bv = g.value(ib);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += product ? go[i] * bv[i] : sa * go[i];
    }
    if (g.requires_grad(ib)) {
      Tensor<T>& gb = g.grad(ib);
      const Tensor<T>& av = g.value(ia);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += product ? go[i] * av[i] : sb * go[i];
    }
  });
}

}  // namespace

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int conv_output_extent(int in, int k, int stride, int dilation, Padding padding) {
  if (in <= 0) throw SizingError("conv2d: empty spatial extent");
  if (padding == Padding::kNone) {
    const int span = dilation * (k - 1) + 1;
    if (in < span) {
      throw SizingError("conv2d: extent " + std::to_string(in) + " smaller than dilated kernel span " +
                        std::to_string(span));
    }
    return (in - span) / stride + 1;
  }
  return (in + stride - 1) / stride;
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> bias, const ConvOptions& opt) {
  const Shape xs = x.shape();
  const ConvGeometry geo = make_geometry(xs, w.shape(), opt);
  if (bias && bias->shape().numel() != static_cast<std::size_t>(geo.cout)) {
    throw ContractError("conv2d: bias has " + std::to_string(bias->shape().numel()) + " elements, expected " +
                        std::to_string(geo.cout));
  }
  const Tensor<T>& xv = x.value();
  const std::vector<T> wrows = kernel_to_rows(geo, w.value());
  Tensor<T> out(Shape{xs.n, geo.cout, geo.ho, geo.wo});
  const int p = geo.pixels();
  const int r_n = geo.rows();
  std::vector<T> col(geo.direct ? 0 : static_cast<std::size_t>(r_n) * p);

  for (int n = 0; n < xs.n; ++n) {
    for (int grp = 0; grp < geo.groups; ++grp) {
      const T* xin = xv.plane(n, grp * geo.cin_g);
      const T* cm = xin;
      if (!geo.direct) {
        im2col(geo, xin, col.data());
        cm = col.data();
      }
      T* o = out.plane(n, grp * geo.cout_g);
      if (bias) {
        const Tensor<T>& bv = bias->value();
        for (int oc = 0; oc < geo.cout_g; ++oc) {
          std::fill(o + static_cast<std::size_t>(oc) * p, o + static_cast<std::size_t>(oc + 1) * p,
                    bv[static_cast<std::size_t>(grp * geo.cout_g + oc)]);
        }
      }
      gemm_nn(geo.cout_g, p, r_n, wrows.data() + static_cast<std::size_t>(grp) * geo.cout_g * r_n, cm, o);
    }
  }

  std::vector<std::size_t> parents{x.id, w.id};
  if (bias) parents.push_back(bias->id);
  const std::size_t ix = x.id, iw = w.id;
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return x.graph->record(std::move(out), std::move(parents), [geo, ix, iw, ib](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& xv = g.value(ix);
    const int p = geo.pixels();
    const int r_n = geo.rows();
    const int batch = xv.shape().n;
    if (ib && g.requires_grad(*ib)) {
      Tensor<T>& gb = g.grad(*ib);
      for (int n = 0; n < batch; ++n) {
        for (int oc = 0; oc < geo.cout; ++oc) {
          const T* row = go.plane(n, oc);
          T acc = 0;
          for (int i = 0; i < p; ++i) acc += row[i];
          gb[static_cast<std::size_t>(oc)] += acc;
        }
      }
    }
    const bool need_w = g.requires_grad(iw);
    const bool need_x = g.requires_grad(ix);
    if (!need_w && !need_x) return;
    const std::vector<T> wrows = kernel_to_rows(geo, g.value(iw));
    std::vector<T> gw_rows(need_w ? wrows.size() : 0, T(0));
    std::vector<T> col(geo.direct ? 0 : static_cast<std::size_t>(r_n) * p);
    std::vector<T> gcol(need_x && !geo.direct ? static_cast<std::size_t>(r_n) * p : 0);
    for (int n = 0; n < batch; ++n) {
      for (int grp = 0; grp < geo.groups; ++grp) {
        const T* gout = go.plane(n, grp * geo.cout_g);
        const T* wg = wrows.data() + static_cast<std::size_t>(grp) * geo.cout_g * r_n;
        if (need_w) {
          const T* xin = xv.plane(n, grp * geo.cin_g);
          const T* cm = xin;
          if (!geo.direct) {
            im2col(geo, xin, col.data());
            cm = col.data();
          }
          gemm_nt(geo.cout_g, p, r_n, gout, cm, gw_rows.data() + static_cast<std::size_t>(grp) * geo.cout_g * r_n);
        }
        if (need_x) {
          Tensor<T>& gx = g.grad(ix);
          T* gxin = gx.plane(n, grp * geo.cin_g);
          if (geo.direct) {
            gemm_tn(geo.cout_g, p, r_n, wg, gout, gxin);
          } else {
            std::fill(gcol.begin(), gcol.end(), T(0));
            gemm_tn(geo.cout_g, p, r_n, wg, gout, gcol.data());
            col2im(geo, gcol.data(), gxin);
          }
        }
      }
    }
    if (need_w) rows_to_kernel_acc(geo, gw_rows, g.grad(iw));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, "add", T(1), T(1), false);
}
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, "sub", T(1), T(-1), false);
}
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, "mul", T(1), T(1), true);
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v *= factor;
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia, factor](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& ga = g.grad(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += factor * go[i];
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T offset) {
  Tensor<T> out = a.value();
  for (T& v : out.data()) v += offset;
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia](Graph<T>& g, std::size_t self) {
    accumulate(g.grad(ia), g.grad(self));
  });
}

template <typename T>
Var<T> modulate_kernel(Var<T> w, Var<T> gamma, Var<T> beta) {
  const Shape ws = w.shape();
  const Shape ms{1, 1, ws.h, ws.w};
  if (gamma.shape() != ms || beta.shape() != ms) {
    throw ContractError("modulate_kernel: modulators must be " + to_string(ms) + ", got " +
                        to_string(gamma.shape()) + " / " + to_string(beta.shape()));
  }
  const std::size_t taps = static_cast<std::size_t>(ws.n) * ws.c;
  const std::size_t inner = ms.numel();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> out(ws);
  for (std::size_t t = 0; t < taps; ++t) {
    for (std::size_t j = 0; j < inner; ++j) out[t * inner + j] = gv[j] * wv[t * inner + j] + bv[j];
  }
  const std::size_t iw = w.id, ig = gamma.id, ibeta = beta.id;
  return w.graph->record(std::move(out), {iw, ig, ibeta}, [iw, ig, ibeta, taps, inner](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    if (g.requires_grad(iw)) {
      Tensor<T>& gw = g.grad(iw);
      const Tensor<T>& gv = g.value(ig);
      for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t j = 0; j < inner; ++j) gw[t * inner + j] += gv[j] * go[t * inner + j];
    }
    if (g.requires_grad(ig)) {
      Tensor<T>& gg = g.grad(ig);
      const Tensor<T>& wv = g.value(iw);
      for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t j = 0; j < inner; ++j) gg[j] += wv[t * inner + j] * go[t * inner + j];
    }
    if (g.requires_grad(ibeta)) {
      Tensor<T>& gb = g.grad(ibeta);
      for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t j = 0; j < inner; ++j) gb[j] += go[t * inner + j];
    }
  });
}

template <typename T>
Var<T> activation(Var<T> x, Activation kind) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = activate(kind, xv[i]);
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, kind](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& xv = g.value(ix);
    const Tensor<T>& yv = g.value(self);
    Tensor<T>& gx = g.grad(ix);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * activate_grad(kind, xv[i], yv[i]);
  });
}

template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) throw ContractError("upsample_nearest2x: empty input");
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < 2 * s.h; ++y)
        for (int xx = 0; xx < 2 * s.w; ++xx) dst[y * 2 * s.w + xx] = src[(y / 2) * s.w + xx / 2];
    }
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, s](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(ix);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* src = go.plane(n, c);
        T* dst = gx.plane(n, c);
        for (int y = 0; y < 2 * s.h; ++y)
          for (int xx = 0; xx < 2 * s.w; ++xx) dst[(y / 2) * s.w + xx / 2] += src[y * 2 * s.w + xx];
      }
  });
}

template <typename T>
Var<T> channel_shuffle(Var<T> x, int groups) {
  const Shape s = x.shape();
  if (groups < 1 || s.c % groups != 0) {
    throw ContractError("channel_shuffle: " + std::to_string(s.c) + " channels not divisible by " +
                        std::to_string(groups) + " groups");
  }
  const int per = s.c / groups;
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  // out channel i * groups + j <- in channel j * per + i
  auto src_channel = [groups, per](int out_c) { return (out_c % groups) * per + out_c / groups; };
  const Tensor<T>& xv = x.value();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) std::copy_n(xv.plane(n, src_channel(c)), plane, out.plane(n, c));
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, s, plane, src_channel](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gx = g.grad(ix);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* src = go.plane(n, c);
        T* dst = gx.plane(n, src_channel(c));
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  });
}

template <typename T>
Var<T> l1_mean(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "l1_mean");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.empty()) throw ContractError("l1_mean: empty input");
  T acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  const T inv = T(1) / static_cast<T>(av.size());
  const std::size_t ia = a.id, ib = b.id;
  return a.graph->record(Tensor<T>(Shape{1, 1, 1, 1}, acc * inv), {ia, ib}, [ia, ib, inv](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0] * inv;
    const Tensor<T>& av = g.value(ia);
    const Tensor<T>& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor<T>& ga = g.grad(ia);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += go * sign(av[i] - bv[i]);
    }
    if (g.requires_grad(ib)) {
      Tensor<T>& gb = g.grad(ib);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= go * sign(av[i] - bv[i]);
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const std::size_t ix = x.id;
  return x.graph->record(Tensor<T>(Shape{1, 1, 1, 1}, acc), {ix}, [ix](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    for (T& v : g.grad(ix).data()) v += go;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  if (x.value().empty()) throw ContractError("mean: empty input");
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> weighted_sum(Var<T> x, const Tensor<T>& weights) {
  require_same_shape(x.shape(), weights.shape(), "weighted_sum");
  const Tensor<T>& xv = x.value();
  T acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * weights[i];
  const std::size_t ix = x.id;
  return x.graph->record(Tensor<T>(Shape{1, 1, 1, 1}, acc), {ix}, [ix, weights](Graph<T>& g, std::size_t self) {
    const T go = g.grad(self)[0];
    Tensor<T>& gx = g.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go * weights[i];
  });
}

template <typename T>
std::vector<T> scaled_softmax(std::span<const T> v, T lambda) {
  if (v.empty()) throw ContractError("scaled_softmax: empty vector");
  T top = lambda * v[0];
  for (T e : v) top = std::max(top, lambda * e);
  std::vector<T> out(v.size());
  T total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(lambda * v[i] - top);
    total += out[i];
  }
  for (T& e : out) e /= total;
  return out;
}

template <typename T>
Var<T> scaled_softmax(Var<T> v, T lambda) {
  const Tensor<T>& vv = v.value();
  Tensor<T> out(vv.shape(), scaled_softmax<T>(vv.data(), lambda));
  const std::size_t iv = v.id;
  return v.graph->record(std::move(out), {iv}, [iv, lambda](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& y = g.value(self);
    T dot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += go[i] * y[i];
    Tensor<T>& gv = g.grad(iv);
    for (std::size_t i = 0; i < y.size(); ++i) gv[i] += lambda * y[i] * (go[i] - dot);
  });
}

template <typename T>
Var<T> slice_batch(Var<T> x, int begin, int end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.n || begin >= end) {
    throw ContractError("slice_batch: range [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") outside batch of " + std::to_string(s.n));
  }
  const std::size_t per = static_cast<std::size_t>(s.c) * s.h * s.w;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{end - begin, s.c, s.h, s.w},
                std::vector<T>(xv.ptr() + begin * per, xv.ptr() + end * per));
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, begin, per](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    T* dst = g.grad(ix).ptr() + begin * per;
    for (std::size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
  });
}

template <typename T>
Var<T> mask_blend(Var<T> generated, const Tensor<T>& original, const Tensor<T>& mask) {
  const Shape s = generated.shape();
  require_same_shape(s, original.shape(), "mask_blend");
  if (mask.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw ContractError("mask_blend: mask shape " + to_string(mask.shape()) + " does not match image " + to_string(s));
  }
  const Tensor<T>& gv = generated.value();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const T m = mask.at(n, 0, y, x);
          out.at(n, c, y, x) = m * gv.at(n, c, y, x) + (T(1) - m) * original.at(n, c, y, x);
        }
  const std::size_t ig = generated.id;
  return generated.graph->record(std::move(out), {ig}, [ig, s, mask](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    Tensor<T>& gg = g.grad(ig);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) gg.at(n, c, y, x) += mask.at(n, 0, y, x) * go.at(n, c, y, x);
  });
}

template <typename T>
Var<T> pixelwise_affine(Var<T> x, Var<T> w, Var<T> b) {
  const Shape s = x.shape();
  if (w.shape() != Shape{1, s.c, s.h, s.w} || b.shape() != Shape{1, 1, s.h, s.w}) {
    throw ContractError("pixelwise_affine: weights " + to_string(w.shape()) + " / bias " + to_string(b.shape()) +
                        " do not match features " + to_string(s));
  }
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    T* o = out.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) o[i] = bv[i];
    for (int c = 0; c < s.c; ++c) {
      const T* xp = xv.plane(n, c);
      const T* wp = wv.plane(0, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] += wp[i] * xp[i];
    }
  }
  const std::size_t ix = x.id, iw = w.id, ib = b.id;
  return x.graph->record(std::move(out), {ix, iw, ib}, [ix, iw, ib, s, plane](Graph<T>& g, std::size_t self) {
    const Tensor<T>& go = g.grad(self);
    const Tensor<T>& xv = g.value(ix);
    const Tensor<T>& wv = g.value(iw);
    for (int n = 0; n < s.n; ++n) {
      const T* gp = go.plane(n, 0);
      if (g.requires_grad(ib)) {
        T* gb = g.grad(ib).ptr();
        for (std::size_t i = 0; i < plane; ++i) gb[i] += gp[i];
      }
      for (int c = 0; c < s.c; ++c) {
        if (g.requires_grad(iw)) {
          T* gw = g.grad(iw).plane(0, c);
          const T* xp = xv.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) gw[i] += gp[i] * xp[i];
        }
        if (g.requires_grad(ix)) {
          T* gx = g.grad(ix).plane(n, c);
          const T* wp = wv.plane(0, c);
          for (std::size_t i = 0; i < plane; ++i) gx[i] += gp[i] * wp[i];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) {
    throw ContractError("concat_batch: " + to_string(sa) + " vs " + to_string(sb));
  }
  std::vector<T> data(a.storage());
  data.insert(data.end(), b.storage().begin(), b.storage().end());
  return Tensor<T>(Shape{sa.n + sb.n, sa.c, sa.h, sa.w}, std::move(data));
}

#define PEPSI_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, const ConvOptions&);              \
  template Var<T> add(Var<T>, Var<T>);                                                            \
  template Var<T> sub(Var<T>, Var<T>);                                                            \
  template Var<T> mul(Var<T>, Var<T>);                                                            \
  template Var<T> scale(Var<T>, T);                                                               \
  template Var<T> add_scalar(Var<T>, T);                                                          \
  template Var<T> modulate_kernel(Var<T>, Var<T>, Var<T>);                                        \
  template Var<T> activation(Var<T>, Activation);                                                 \
  template Var<T> upsample_nearest2x(Var<T>);                                                     \
  template Var<T> channel_shuffle(Var<T>, int);                                                   \
  template Var<T> l1_mean(Var<T>, Var<T>);                                                        \
  template Var<T> mean(Var<T>);                                                                   \
  template Var<T> sum(Var<T>);                                                                    \
  template Var<T> weighted_sum(Var<T>, const Tensor<T>&);                                         \
  template Var<T> scaled_softmax(Var<T>, T);                                                      \
  template std::vector<T> scaled_softmax(std::span<const T>, T);                                  \
  template Var<T> slice_batch(Var<T>, int, int);                                                  \
  template Var<T> mask_blend(Var<T>, const Tensor<T>&, const Tensor<T>&);                         \
  template Var<T> pixelwise_affine(Var<T>, Var<T>, Var<T>);                                       \
  template Tensor<T> concat_batch(const Tensor<T>&, const Tensor<T>&);

PEPSI_INSTANTIATE_OPS(float)
PEPSI_INSTANTIATE_OPS(double)

}  // namespace pepsi
