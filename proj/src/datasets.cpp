#include "pepsi/datasets.hpp"

#include "pepsi/synth.hpp"

namespace pepsi {

Datasets load_datasets(const TrainConfig& cfg) {
  Datasets d;
  std::vector<Tensor<float>> held;
  if (cfg.data_dir.empty()) {
    SyntheticSpec spec;
    spec.pattern = parse_pattern(cfg.synth_pattern);
    spec.size = cfg.image_size;
    spec.count = cfg.synth_count;
    spec.seed = cfg.seed;
    d.train = synth_images(spec);
    spec.count = cfg.holdout_count;
    spec.seed = cfg.seed + 0x100000001ULL;
    held = synth_images(spec);
  } else {
    std::vector<Tensor<float>> all = load_image_dir(cfg.data_dir);
    if (all.size() <= static_cast<std::size_t>(cfg.holdout_count)) {
      throw ContractError("data_dir '" + cfg.data_dir + "' has " + std::to_string(all.size()) +
                          " images, not enough for a holdout of " + std::to_string(cfg.holdout_count));
    }
    held.assign(all.end() - cfg.holdout_count, all.end());
    all.resize(all.size() - static_cast<std::size_t>(cfg.holdout_count));
    d.train = std::move(all);
  }
  d.holdout = make_holdout(std::move(held), cfg);
  return d;
}

}  // namespace pepsi
