#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pepsi/mask.hpp"
#include "pepsi/tensor.hpp"

namespace pepsi {

struct ImageFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raw 8-bit raster from a binary PPM (P6, 3 channels) or PGM (P5, 1 channel).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

Raster decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Raster& r);

/// 0..255 -> [-1, 1] and back (rounded, clamped).
float byte_to_unit(std::uint8_t v);
std::uint8_t unit_to_byte(float v);

Tensor<float> raster_to_tensor(const Raster& r);
Raster tensor_to_raster(const Tensor<float>& t);

/// (1, 3, H, W) in [-1, 1].
Tensor<float> read_image(const std::string& path);
void write_image(const std::string& path, const Tensor<float>& image);

/// PGM mask: values >= 128 are holes; written as 0 / 255.
Mask read_mask(const std::string& path);
void write_mask(const std::string& path, const Mask& mask);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace pepsi
