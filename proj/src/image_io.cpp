#include "pepsi/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace pepsi {

namespace {

class HeaderScanner {
 public:
  explicit HeaderScanner(std::span<const std::uint8_t> b) : b_(b) {}

  // Skips whitespace and comments, then reads a decimal integer.
  int number(const char* field) {
    skip();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) {
      throw ImageFormatError(std::string("malformed header: expected ") + field + " at offset " + std::to_string(pos_));
    }
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1 << 24) throw ImageFormatError(std::string("malformed header: ") + field + " too large");
    }
    return static_cast<int>(v);
  }

  std::size_t end_of_header() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw ImageFormatError("malformed header: missing whitespace before pixel data");
    }
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 2;
};

}  // namespace

Raster decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw ImageFormatError("malformed header: expected P6 or P5 magic");
  }
  Raster r;
  r.channels = bytes[1] == '6' ? 3 : 1;
  HeaderScanner h(bytes);
  r.width = h.number("width");
  r.height = h.number("height");
  const int maxval = h.number("maxval");
  if (maxval != 255) throw ImageFormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (r.width < 1 || r.height < 1) throw ImageFormatError("malformed header: empty image");
  const std::size_t start = h.end_of_header();
  const std::size_t need = static_cast<std::size_t>(r.width) * r.height * r.channels;
  if (bytes.size() < start + need) {
    throw ImageFormatError("truncated payload: " + std::to_string(bytes.size() - start) + " of " +
                           std::to_string(need) + " bytes");
  }
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                  bytes.begin() + static_cast<std::ptrdiff_t>(start + need));
  return r;
}

std::vector<std::uint8_t> encode_pnm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ContractError("encode_pnm: channels must be 1 or 3");
  if (r.pixels.size() != static_cast<std::size_t>(r.width) * r.height * r.channels) {
    throw ContractError("encode_pnm: pixel buffer does not match the extents");
  }
  const std::string head = std::string(r.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(r.width) + " " +
                           std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  return out;
}

float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

std::uint8_t unit_to_byte(float v) {
  const float scaled = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

Tensor<float> raster_to_tensor(const Raster& r) {
  Tensor<float> t(Shape{1, r.channels, r.height, r.width});
  const std::size_t plane = static_cast<std::size_t>(r.width) * r.height;
  for (int c = 0; c < r.channels; ++c) {
    float* dst = t.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = byte_to_unit(r.pixels[i * r.channels + c]);
  }
  return t;
}

Raster tensor_to_raster(const Tensor<float>& t) {
  const Shape s = t.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ContractError("tensor_to_raster: expected (1, 1|3, H, W), got " + to_string(s));
  Raster r{s.w, s.h, s.c, std::vector<std::uint8_t>(t.size())};
  const std::size_t plane = static_cast<std::size_t>(s.w) * s.h;
  for (int c = 0; c < s.c; ++c) {
    const float* src = t.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) r.pixels[i * s.c + c] = unit_to_byte(src[i]);
  }
  return r;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

Tensor<float> read_image(const std::string& path) {
  const Raster r = [&] {
    try {
      return decode_pnm(read_file(path));
    } catch (const ImageFormatError& e) {
      throw ImageFormatError(path + ": " + e.what());
    }
  }();
  if (r.channels != 3) throw ImageFormatError(path + ": expected a color (P6) image");
  return raster_to_tensor(r);
}

void write_image(const std::string& path, const Tensor<float>& image) {
  write_file(path, encode_pnm(tensor_to_raster(image)));
}

Mask read_mask(const std::string& path) {
  Raster r;
  try {
    r = decode_pnm(read_file(path));
  } catch (const ImageFormatError& e) {
    throw ImageFormatError(path + ": " + e.what());
  }
  if (r.channels != 1) throw ImageFormatError(path + ": expected a grayscale (P5) mask");
  Mask m(r.height, r.width);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) m.set(y, x, r.pixels[static_cast<std::size_t>(y) * r.width + x] >= 128);
  return m;
}

void write_mask(const std::string& path, const Mask& mask) {
  Raster r{mask.width(), mask.height(), 1, std::vector<std::uint8_t>(static_cast<std::size_t>(mask.width()) * mask.height())};
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) r.pixels[static_cast<std::size_t>(y) * mask.width() + x] = mask.at(y, x) ? 255 : 0;
  write_file(path, encode_pnm(r));
}

}  // namespace pepsi
