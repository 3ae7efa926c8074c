#include "pepsi/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pepsi {

Mask::Mask(int height, int width) : h_(height), w_(width) {
  if (height < 1 || width < 1) throw ContractError("mask extents must be positive");
  bits_.assign(static_cast<std::size_t>(height) * width, 0);
}

std::size_t Mask::hole_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double Mask::hole_fraction() const {
  return bits_.empty() ? 0.0 : static_cast<double>(hole_count()) / static_cast<double>(bits_.size());
}

Mask gen_square_mask(int h, int w, const Box& box) {
  if (box.top < 0 || box.left < 0 || box.height < 0 || box.width < 0 || box.top + box.height > h ||
      box.left + box.width > w) {
    throw ContractError("square mask box (" + std::to_string(box.top) + "," + std::to_string(box.left) + "," +
                        std::to_string(box.height) + "," + std::to_string(box.width) + ") does not fit " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  Mask m(h, w);
  for (int y = box.top; y < box.top + box.height; ++y)
    for (int x = box.left; x < box.left + box.width; ++x) m.set(y, x, true);
  return m;
}

Mask gen_square_mask(int h, int w, std::mt19937_64& rng) {
  const int base = std::min(h, w);
  const int lo = std::max(1, base / 4);
  const int hi = std::max(lo, base / 2);
  const int side = std::uniform_int_distribution<int>(lo, hi)(rng);
  const int top = std::uniform_int_distribution<int>(0, h - side)(rng);
  const int left = std::uniform_int_distribution<int>(0, w - side)(rng);
  return gen_square_mask(h, w, Box{top, left, side, side});
}

FreeFormParams FreeFormParams::defaults(int h, int w) {
  FreeFormParams p;
  const double s = std::min(h, w) / 256.0;
  p.height = h;
  p.width = w;
  p.min_brush *= s;
  p.max_brush *= s;
  p.max_segment_length *= s;
  return p;
}

void FreeFormParams::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("free-form params: " + what); };
  if (height < 1 || width < 1) fail("canvas must be non-empty");
  if (min_strokes < 0 || max_strokes < min_strokes) fail("stroke count range is empty");
  if (max_vertices < 1) fail("max_vertices must be >= 1");
  if (!(min_brush > 0.0) || max_brush < min_brush) fail("brush width range is empty");
  if (!(max_brush < std::min(height, width) / 2.0)) fail("max brush width must be below min(H, W) / 2");
  if (max_angle_step < 0.0) fail("max_angle_step must be non-negative");
  if (!(max_segment_length > 0.0)) fail("max_segment_length must be positive");
}

std::vector<Stroke> sample_strokes(const FreeFormParams& p, std::mt19937_64& rng) {
  p.validate();
  using Real = std::uniform_real_distribution<double>;
  const int strokes = std::uniform_int_distribution<int>(p.min_strokes, p.max_strokes)(rng);
  // Walks use between half and all of the vertex budget, with segments of
  // at least half the maximum length.
  const int min_vertices = std::max(1, (p.max_vertices + 1) / 2);
  std::vector<Stroke> out;
  out.reserve(static_cast<std::size_t>(strokes));
  for (int s = 0; s < strokes; ++s) {
    Stroke st;
    st.brush_width = Real(p.min_brush, p.max_brush)(rng);
    const int vertices = std::uniform_int_distribution<int>(min_vertices, p.max_vertices)(rng);
    double x = Real(0.0, p.width - 1.0)(rng);
    double y = Real(0.0, p.height - 1.0)(rng);
    double angle = Real(0.0, 2.0 * std::numbers::pi)(rng);
    st.vertices.emplace_back(x, y);
    for (int v = 1; v < vertices; ++v) {
      angle += Real(-p.max_angle_step, p.max_angle_step)(rng);
      const double len = Real(0.5 * p.max_segment_length, p.max_segment_length)(rng);
      x = std::clamp(x + len * std::cos(angle), 0.0, p.width - 1.0);
      y = std::clamp(y + len * std::sin(angle), 0.0, p.height - 1.0);
      st.vertices.emplace_back(x, y);
    }
    out.push_back(std::move(st));
  }
  return out;
}

namespace {

double segment_distance_sq(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len_sq = dx * dx + dy * dy;
  double t = 0.0;
  if (len_sq > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len_sq, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return cx * cx + cy * cy;
}

void stamp_segment(Mask& m, double ax, double ay, double bx, double by, double radius) {
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - radius)));
  const int x1 = std::min(m.width() - 1, static_cast<int>(std::ceil(std::max(ax, bx) + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - radius)));
  const int y1 = std::min(m.height() - 1, static_cast<int>(std::ceil(std::max(ay, by) + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (segment_distance_sq(x, y, ax, ay, bx, by) <= r2) m.set(y, x, true);
}

}  // namespace

Mask rasterize_strokes(std::span<const Stroke> strokes, int h, int w) {
  Mask m(h, w);
  for (const Stroke& st : strokes) {
    const double r = st.brush_width / 2.0;
    const auto& v = st.vertices;
    if (v.size() == 1) stamp_segment(m, v[0].first, v[0].second, v[0].first, v[0].second, r);
    for (std::size_t i = 1; i < v.size(); ++i) stamp_segment(m, v[i - 1].first, v[i - 1].second, v[i].first, v[i].second, r);
  }
  return m;
}

Mask gen_freeform_mask(const FreeFormParams& p, std::mt19937_64& rng) {
  const std::vector<Stroke> strokes = sample_strokes(p, rng);
  return rasterize_strokes(strokes, p.height, p.width);
}

template <typename T>
Tensor<T> mask_tensor(const Mask& m) {
  Tensor<T> t(Shape{1, 1, m.height(), m.width()});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(m.bits()[i]);
  return t;
}

template <typename T>
Tensor<T> stack_masks(std::span<const Mask> masks) {
  if (masks.empty()) throw ContractError("stack_masks: no masks");
  const int h = masks[0].height(), w = masks[0].width();
  Tensor<T> t(Shape{static_cast<int>(masks.size()), 1, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    if (masks[n].height() != h || masks[n].width() != w) throw ContractError("stack_masks: extents differ");
    T* dst = t.plane(static_cast<int>(n), 0);
    for (std::size_t i = 0; i < masks[n].bits().size(); ++i) dst[i] = static_cast<T>(masks[n].bits()[i]);
  }
  return t;
}

template <typename T>
Mask mask_from_tensor(const Tensor<T>& t, int n) {
  const Shape s = t.shape();
  if (s.c != 1 || n < 0 || n >= s.n) throw ContractError("mask_from_tensor: expected (N, 1, H, W), got " + to_string(s));
  Mask m(s.h, s.w);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) m.set(y, x, t.at(n, 0, y, x) > T(0.5));
  return m;
}

template <typename T>
Tensor<T> compose_input(const Tensor<T>& image, const Tensor<T>& mask) {
  const Shape s = image.shape();
  if (s.c != 3) throw ContractError("compose_input: image must have 3 channels, got " + to_string(s));
  if (mask.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw ContractError("compose_input: mask " + to_string(mask.shape()) + " does not match image " + to_string(s));
  }
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!(image[i] >= T(-1) && image[i] <= T(1))) {
      throw ContractError("compose_input: image value outside [-1, 1] at flat index " + std::to_string(i));
    }
  }
  Tensor<T> out(Shape{s.n, 4, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* m = mask.plane(n, 0);
    for (int c = 0; c < 3; ++c) {
      const T* src = image.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = m[i] > T(0.5) ? T(0) : src[i];
    }
    std::copy_n(m, plane, out.plane(n, 3));
  }
  return out;
}

template Tensor<float> mask_tensor(const Mask&);
template Tensor<double> mask_tensor(const Mask&);
template Tensor<float> stack_masks(std::span<const Mask>);
template Tensor<double> stack_masks(std::span<const Mask>);
template Mask mask_from_tensor(const Tensor<float>&, int);
template Mask mask_from_tensor(const Tensor<double>&, int);
template Tensor<float> compose_input(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> compose_input(const Tensor<double>&, const Tensor<double>&);

}  // namespace pepsi
