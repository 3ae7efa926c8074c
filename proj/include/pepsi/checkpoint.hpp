#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pepsi/nets.hpp"

namespace pepsi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointHeader {
  Variant variant = Variant::kPepsi;
  int width_divisor = 1;
  CamMode cam_mode = CamMode::kEuclidean;
  std::optional<DpuConfig> dpu;  // diet only

  friend bool operator==(const CheckpointHeader&, const CheckpointHeader&) = default;
};

/// Named float tensors plus u64 counters (Adam step counts, k, bit patterns of
/// double hyperparameters).
struct CheckpointData {
  CheckpointHeader header;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::vector<std::pair<std::string, std::uint64_t>> counters;

  const Tensor<float>& tensor(const std::string& name) const;
  std::uint64_t counter(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

struct TrainState;

/// Generator weights under "gen.", RED weights under "red.", optimizer and
/// spectral state under "state.".
CheckpointData snapshot(const Generator<float>& gen, const Discriminator<float>* red, const TrainState* state);

/// Rejects a header that does not match `gen`'s configuration.
void restore(const CheckpointData& data, Generator<float>& gen, Discriminator<float>* red, TrainState* state);

/// Generator configuration recorded in a header.
GeneratorConfig generator_config(const CheckpointHeader& h);

}  // namespace pepsi
