#include "pepsi/nets.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pepsi {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPepsi: return "pepsi";
    case Variant::kDietPepsi: return "diet_pepsi";
    case Variant::kRed: return "red";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "pepsi") return Variant::kPepsi;
  if (s == "diet_pepsi" || s == "diet") return Variant::kDietPepsi;
  if (s == "red") return Variant::kRed;
  throw ContractError("unknown variant '" + s + "' (expected pepsi, diet_pepsi or red)");
}

std::string to_string(CamMode m) { return m == CamMode::kCosine ? "cosine" : "euclidean"; }

CamMode parse_cam_mode(const std::string& s) {
  if (s == "cosine") return CamMode::kCosine;
  if (s == "euclidean") return CamMode::kEuclidean;
  throw ContractError("unknown cam mode '" + s + "' (expected cosine or euclidean)");
}

void DpuConfig::validate() const {
  if (rates.empty()) throw ContractError("dpu: at least one rate required");
  std::set<int> seen;
  for (int r : rates) {
    if (r < 1) throw ContractError("dpu: dilation rates must be positive");
    if (!seen.insert(r).second) throw ContractError("dpu: rate " + std::to_string(r) + " listed twice");
  }
  if (groups != 1 && groups != 2 && groups != 4) throw ContractError("dpu: groups must be 1, 2 or 4");
  if (channels < 1 || channels % groups != 0) {
    throw ContractError("dpu: " + std::to_string(channels) + " channels not divisible by " + std::to_string(groups) +
                        " groups");
  }
}

int GeneratorConfig::bottleneck_channels() const { return std::max(1, kEncoderWidths[5] / width_divisor); }

void GeneratorConfig::validate() const {
  if (variant == Variant::kRed) throw ContractError("generator config cannot use the red variant");
  if (width_divisor < 1) throw ContractError("width_divisor must be >= 1");
  if (!(cam_lambda > 0.0)) throw ContractError("cam_lambda must be positive");
  for (int r : dilated_rates)
    if (r < 1) throw ContractError("dilated rates must be positive");
  if (variant == Variant::kDietPepsi) dpu.validate();
}

template <typename T>
Var<T> ConvLayer<T>::apply(Graph<T>& g, Var<T> x) const {
  std::optional<Var<T>> b;
  if (bias) b = g.param(*bias);
  return conv2d(x, g.param(*weight), b, options);
}

template <typename T>
std::vector<int> RateAdaptiveBank<T>::rates() const {
  std::vector<int> out;
  for (const auto& [r, mod] : modulators) out.push_back(r);
  return out;
}

template <typename T>
Var<T> rate_adaptive_conv(Graph<T>& g, Var<T> x, const RateAdaptiveBank<T>& bank, int rate, const Parameter<T>* bias) {
  auto it = bank.modulators.find(rate);
  if (it == bank.modulators.end()) throw ContractError("rate_adaptive_conv: rate " + std::to_string(rate) + " not in bank");
  const Var<T> kernel =
      modulate_kernel(g.param(*bank.weight), g.param(*it->second.first), g.param(*it->second.second));
  std::optional<Var<T>> b;
  if (bias) b = g.param(*const_cast<Parameter<T>*>(bias));
  ConvOptions opt;
  opt.dilation = rate;
  opt.groups = bank.groups;
  return conv2d(x, kernel, b, opt);
}

template <typename T>
Var<T> dpu_forward(Graph<T>& g, Var<T> x, const RateAdaptiveBank<T>& bank, int unit_index, const DpuConfig& cfg,
                   const DpuUnit<T>& unit) {
  if (unit_index < 0 || unit_index >= cfg.count()) {
    throw ContractError("dpu_forward: unit " + std::to_string(unit_index) + " out of range");
  }
  if (x.shape().c != cfg.channels) {
    throw ContractError("dpu_forward: input has " + std::to_string(x.shape().c) + " channels, expected " +
                        std::to_string(cfg.channels));
  }
  Var<T> y = rate_adaptive_conv(g, x, bank, cfg.rates[static_cast<std::size_t>(unit_index)], unit.rate_bias);
  y = activation(y, Activation::kElu);
  if (cfg.groups > 1) y = channel_shuffle(y, cfg.groups);
  std::optional<Var<T>> pb;
  if (unit.pointwise_bias) pb = g.param(*unit.pointwise_bias);
  ConvOptions opt;
  opt.groups = cfg.groups;
  y = conv2d(y, g.param(*unit.pointwise), pb, opt);
  return add(x, y);
}

namespace {

template <typename T>
Tensor<T> he_normal(Shape s, int fan_in, std::mt19937_64& rng) {
  Tensor<T> t(s);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (T& v : t.data()) v = static_cast<T>(normal(rng));
  return t;
}

}  // namespace

template <typename T>
Parameter<T>& Generator<T>::add_kernel(const std::string& name, int k, int cin, int cout, std::mt19937_64& rng) {
  return params_.add(name, he_normal<T>(Shape{k, k, cin, cout}, k * k * cin, rng));
}

template <typename T>
Parameter<T>& Generator<T>::add_bias(const std::string& name, int cout) {
  return params_.add(name, Tensor<T>(Shape{1, 1, 1, cout}));
}

template <typename T>
ConvLayer<T> Generator<T>::make_conv(const std::string& name, int k, int cin, int cout, ConvOptions opt,
                                     std::mt19937_64& rng) {
  ConvLayer<T> layer;
  layer.weight = &add_kernel(name + ".w", k, cin / opt.groups, cout, rng);
  layer.bias = &add_bias(name + ".b", cout);
  layer.options = opt;
  return layer;
}

template <typename T>
Generator<T>::Generator(GeneratorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.dpu.channels = cfg_.bottleneck_channels();
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto width = [&](int base) { return std::max(1, base / cfg_.width_divisor); };

  int cin = kInputChannels;
  for (int i = 0; i < 6; ++i) {
    ConvOptions opt;
    opt.stride_h = opt.stride_w = kEncoderStrides[i];
    const int cout = width(kEncoderWidths[i]);
    encoder_prefix_.push_back(make_conv("enc.conv" + std::to_string(i + 1), i == 0 ? 5 : 3, cin, cout, opt, rng));
    cin = cout;
  }
  const int c = cin;
  if (cfg_.variant == Variant::kPepsi) {
    for (std::size_t i = 0; i < cfg_.dilated_rates.size(); ++i) {
      ConvOptions opt;
      opt.dilation = cfg_.dilated_rates[i];
      dilated_.push_back(make_conv("enc.dil" + std::to_string(i + 1), 3, c, c, opt, rng));
    }
  } else {
    const int g = cfg_.dpu.groups;
    bank_.groups = g;
    bank_.weight = &add_kernel("enc.bank.w", 3, c / g, c, rng);
    for (int r : cfg_.dpu.rates) {
      auto& gamma = params_.add("enc.bank.gamma.d" + std::to_string(r), Tensor<T>(Shape{1, 1, c / g, c}, T(1)));
      auto& beta = params_.add("enc.bank.beta.d" + std::to_string(r), Tensor<T>(Shape{1, 1, c / g, c}, T(0)));
      bank_.modulators[r] = {&gamma, &beta};
    }
    for (int i = 0; i < cfg_.dpu.count(); ++i) {
      const std::string base = "enc.dpu" + std::to_string(i);
      DpuUnit<T> unit;
      unit.rate_bias = &add_bias(base + ".ra.b", c);
      unit.pointwise = &add_kernel(base + ".pw.w", 1, c / g, c, rng);
      unit.pointwise_bias = &add_bias(base + ".pw.b", c);
      units_.push_back(unit);
    }
  }

  cin = c;
  int idx = 1;
  for (int base : kDecoderWidths) {
    const int cout = width(base);
    for (int rep = 0; rep < 2; ++rep) {
      decoder_.push_back(make_conv("dec.conv" + std::to_string(idx++), 3, cin, cout, ConvOptions{}, rng));
      cin = cout;
    }
  }
  decoder_.push_back(make_conv("dec.conv" + std::to_string(idx), 3, cin, 3, ConvOptions{}, rng));
}

template <typename T>
Var<T> Generator<T>::encode(Graph<T>& g, Var<T> input) {
  const Shape s = input.shape();
  if (s.c != kInputChannels) {
    throw ContractError("encoder: expected " + std::to_string(kInputChannels) + " input channels, got " + to_string(s));
  }
  if (s.h % 8 != 0 || s.w % 8 != 0) {
    throw ContractError("encoder: input extents must be divisible by 8, got " + to_string(s));
  }
  ++passes.encoder;
  Var<T> x = input;
  for (const auto& layer : encoder_prefix_) x = activation(layer.apply(g, x), Activation::kElu);
  return context_block(g, x);
}

template <typename T>
Var<T> Generator<T>::context_block(Graph<T>& g, Var<T> x) {
  if (cfg_.variant == Variant::kPepsi) {
    for (const auto& layer : dilated_) x = activation(layer.apply(g, x), Activation::kElu);
  } else {
    for (int i = 0; i < cfg_.dpu.count(); ++i) x = dpu_forward(g, x, bank_, i, cfg_.dpu, units_[static_cast<std::size_t>(i)]);
  }
  return x;
}

template <typename T>
Var<T> Generator<T>::decode(Graph<T>& g, Var<T> features) {
  if (features.shape().c != cfg_.bottleneck_channels()) {
    throw ContractError("decoder: expected " + std::to_string(cfg_.bottleneck_channels()) + " channels, got " +
                        to_string(features.shape()));
  }
  ++passes.decoder;
  Var<T> x = features;
  for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) {
    x = activation(decoder_[i].apply(g, x), Activation::kElu);
    if (i % 2 == 1 && i + 2 < decoder_.size()) x = upsample_nearest2x(x);
  }
  return activation(decoder_.back().apply(g, x), Activation::kClipUnit);
}

template <typename T>
GenOutput<T> Generator<T>::forward(Graph<T>& g, const Tensor<T>& images, const Tensor<T>& masks, GenMode mode,
                                   bool coarse_path) {
  const Var<T> features = encode(g, g.constant(compose_input(images, masks)));
  const Shape fs = features.shape();
  std::vector<Mask> small;
  small.reserve(static_cast<std::size_t>(fs.n));
  for (int n = 0; n < fs.n; ++n) small.push_back(downsample_mask(mask_from_tensor(masks, n), fs.h, fs.w));

  GenOutput<T> out;
  if (mode == GenMode::kTrain && coarse_path) out.coarse = decode(g, features);
  const Var<T> attended = cam_forward(features, small, cfg_.cam_mode, static_cast<T>(cfg_.cam_lambda));
  out.inpaint = decode(g, attended);
  return out;
}

template <typename T>
int Discriminator<T>::grid_extent(int in) {
  int s = in;
  for (int i = 0; i < 6; ++i) {
    if (s > 1 && s % 2 != 0) {
      throw SizingError("red: extent " + std::to_string(in) + " does not halve to an integer grid (odd " +
                        std::to_string(s) + " at layer " + std::to_string(i + 1) + ")");
    }
    s = (s + 1) / 2;
  }
  return s;
}

template <typename T>
Discriminator<T>::Discriminator(int height, int width, int width_divisor, std::uint64_t seed)
    : height_(height), width_(width), width_divisor_(width_divisor) {
  if (height < 1 || width < 1) throw ContractError("red: empty input extent");
  if (width_divisor < 1) throw ContractError("red: width_divisor must be >= 1");
  grid_h_ = grid_extent(height);
  grid_w_ = grid_extent(width);
  std::mt19937_64 rng(seed);
  int cin = 3;
  for (int i = 0; i < 6; ++i) {
    const int cout = std::max(1, kRedWidths[i] / width_divisor);
    const std::string name = "red.conv" + std::to_string(i + 1);
    ConvLayer<T> layer;
    layer.weight = &params_.add(name + ".w", he_normal<T>(Shape{5, 5, cin, cout}, 25 * cin, rng));
    layer.bias = &params_.add(name + ".b", Tensor<T>(Shape{1, 1, 1, cout}));
    layer.options.stride_h = layer.options.stride_w = 2;
    layer.options.padding = Padding::kZero;
    convs_.push_back(layer);
    spectral_.emplace_back(name + ".w", make_spectral_state<T>(cout, rng()));
    cin = cout;
  }
  fc_weight_ = &params_.add("red.fc.w", he_normal<T>(Shape{1, cin, grid_h_, grid_w_}, cin, rng));
  fc_bias_ = &params_.add("red.fc.b", Tensor<T>(Shape{1, 1, grid_h_, grid_w_}));
}

template <typename T>
Var<T> Discriminator<T>::forward(Graph<T>& g, Var<T> images, bool update_spectral, bool frozen) {
  const Shape s = images.shape();
  if (s.c != 3 || s.h != height_ || s.w != width_) {
    throw ContractError("red: expected (N, 3, " + std::to_string(height_) + ", " + std::to_string(width_) + "), got " +
                        to_string(s));
  }
  auto bind = [&](Parameter<T>& p) { return frozen ? g.constant(p.value) : g.param(p); };
  Var<T> x = images;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Var<T> w = spectral_normalize(bind(*convs_[i].weight), spectral_[i].second, update_spectral ? 1 : 0);
    x = conv2d(x, w, std::optional<Var<T>>(bind(*convs_[i].bias)), convs_[i].options);
    x = activation(x, Activation::kLeakyRelu);
  }
  // Each cell's regressor is a 1 x C matrix: its spectral norm is its L2 norm.
  const Tensor<T>& fw = fc_weight_->value;
  const Shape fs = fw.shape();
  Tensor<T> inv(fs);
  const std::size_t plane = static_cast<std::size_t>(fs.h) * fs.w;
  for (std::size_t px = 0; px < plane; ++px) {
    double acc = 0;
    for (int c = 0; c < fs.c; ++c) acc += static_cast<double>(fw.plane(0, c)[px]) * fw.plane(0, c)[px];
    const T scale_px = static_cast<T>(1.0 / std::max(std::sqrt(acc), kSigmaFloor));
    for (int c = 0; c < fs.c; ++c) inv.plane(0, c)[px] = scale_px;
  }
  const Var<T> w = mul(bind(*fc_weight_), g.constant(std::move(inv)));
  return pixelwise_affine(x, w, bind(*fc_bias_));
}

template <typename T>
ParamCount count_params(const ParamSet<T>& params, bool include_bias) {
  ParamCount out;
  auto starts = [](const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; };
  for (const auto& p : params) {
    const std::string& name = p->name;
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    if (is_bias && !include_bias) continue;
    const std::size_t n = p->value.size();
    out.per_tensor.emplace_back(name, n);
    out.total += n;
    if (starts(name, "enc.")) out.subtotals["encoder"] += n;
    if (starts(name, "dec.")) out.subtotals["decoder"] += n;
    if (starts(name, "red.")) out.subtotals["red"] += n;
    if (starts(name, "enc.dil")) out.subtotals["dilated_stack"] += n;
    if (starts(name, "enc.bank") || starts(name, "enc.dpu")) out.subtotals["dpu_stack"] += n;
  }
  return out;
}

#define PEPSI_INSTANTIATE_NETS(T)                                                                               \
  template struct ConvLayer<T>;                                                                                 \
  template struct RateAdaptiveBank<T>;                                                                          \
  template Var<T> rate_adaptive_conv(Graph<T>&, Var<T>, const RateAdaptiveBank<T>&, int, const Parameter<T>*); \
  template Var<T> dpu_forward(Graph<T>&, Var<T>, const RateAdaptiveBank<T>&, int, const DpuConfig&,             \
                              const DpuUnit<T>&);                                                               \
  template class Generator<T>;                                                                                  \
  template class Discriminator<T>;                                                                              \
  template ParamCount count_params(const ParamSet<T>&, bool);

PEPSI_INSTANTIATE_NETS(float)
PEPSI_INSTANTIATE_NETS(double)

}  // namespace pepsi
