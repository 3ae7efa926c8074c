#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "pepsi/training.hpp"

namespace pepsi {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values are errors naming the line.
TrainConfig parse_config(const std::string& text);
/// Every key in a fixed order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

/// Applies one `key`, `value` pair (used by parse_config and CLI overrides).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace pepsi
