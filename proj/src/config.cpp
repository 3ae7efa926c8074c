#include "pepsi/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace pepsi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean (true/false)");
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

#define PEPSI_NUM_FIELD(name, member, type)                                                       \
  Field {                                                                                         \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },                          \
        [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<type>(k, v); } \
  }
#define PEPSI_REAL_FIELD(name, member)                                                            \
  Field {                                                                                         \
    name, [](const TrainConfig& c) { return format_double(c.member); },                           \
        [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<double>(k, v); } \
  }
#define PEPSI_STR_FIELD(name, member)                                                              \
  Field {                                                                                          \
    name, [](const TrainConfig& c) { return c.member; },                                           \
        [](TrainConfig& c, const std::string&, const std::string& v) { c.member = v; }             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"variant", [](const TrainConfig& c) { return to_string(c.gen.variant); },
            [](TrainConfig& c, const std::string& k, const std::string& v) {
              try {
                c.gen.variant = parse_variant(v);
              } catch (const ContractError& e) {
                throw ConfigError(k + ": " + e.what());
              }
            }},
      Field{"cam_mode", [](const TrainConfig& c) { return to_string(c.gen.cam_mode); },
            [](TrainConfig& c, const std::string& k, const std::string& v) {
              try {
                c.gen.cam_mode = parse_cam_mode(v);
              } catch (const ContractError& e) {
                throw ConfigError(k + ": " + e.what());
              }
            }},
      PEPSI_REAL_FIELD("cam_lambda", gen.cam_lambda),
      PEPSI_NUM_FIELD("width_divisor", gen.width_divisor, int),
      Field{"dpu_rates", [](const TrainConfig& c) { return format_int_list(c.gen.dpu.rates); },
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.gen.dpu.rates = parse_int_list(k, v); }},
      PEPSI_NUM_FIELD("groups", gen.dpu.groups, int),
      Field{"coarse_path", [](const TrainConfig& c) { return std::string(c.coarse_path ? "true" : "false"); },
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.coarse_path = parse_bool(k, v); }},
      PEPSI_REAL_FIELD("lambda_i", weights.lambda_i),
      PEPSI_REAL_FIELD("lambda_adv", weights.lambda_adv),
      PEPSI_REAL_FIELD("lambda_c", weights.lambda_c),
      PEPSI_REAL_FIELD("lr_g", lr_g),
      PEPSI_REAL_FIELD("lr_d", lr_d),
      PEPSI_REAL_FIELD("beta1", beta1),
      PEPSI_REAL_FIELD("beta2", beta2),
      PEPSI_NUM_FIELD("batch_size", batch_size, int),
      PEPSI_NUM_FIELD("k_max", k_max, std::int64_t),
      PEPSI_NUM_FIELD("image_size", image_size, int),
      PEPSI_NUM_FIELD("seed", seed, std::uint64_t),
      PEPSI_STR_FIELD("data_dir", data_dir),
      PEPSI_STR_FIELD("synth_pattern", synth_pattern),
      PEPSI_NUM_FIELD("synth_count", synth_count, int),
      PEPSI_NUM_FIELD("holdout_count", holdout_count, int),
      PEPSI_STR_FIELD("mask_mode", mask_mode),
      PEPSI_NUM_FIELD("checkpoint_interval", checkpoint_interval, std::int64_t),
      PEPSI_NUM_FIELD("eval_interval", eval_interval, std::int64_t),
      PEPSI_STR_FIELD("out_dir", out_dir),
      PEPSI_STR_FIELD("resume", resume),
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace pepsi
