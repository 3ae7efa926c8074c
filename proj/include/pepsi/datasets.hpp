#pragma once

#include <vector>

#include "pepsi/training.hpp"

namespace pepsi {

struct Datasets {
  std::vector<Tensor<float>> train;
  Holdout holdout;
};

/// With an empty data_dir: `synth_count` training and `holdout_count`
/// evaluation images of `synth_pattern`, drawn from disjoint seeds. Otherwise
/// the last `holdout_count` images of the directory are held out.
Datasets load_datasets(const TrainConfig& cfg);

}  // namespace pepsi
