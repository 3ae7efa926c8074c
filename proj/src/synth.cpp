#include "pepsi/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "pepsi/image_io.hpp"

namespace pepsi {

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::kStripes: return "stripes";
    case Pattern::kChecker: return "checker";
    case Pattern::kGradientBlobs: return "gradient-blobs";
  }
  return "?";
}

Pattern parse_pattern(const std::string& s) {
  if (s == "stripes") return Pattern::kStripes;
  if (s == "checker") return Pattern::kChecker;
  if (s == "gradient-blobs") return Pattern::kGradientBlobs;
  throw ContractError("unknown pattern '" + s + "' (expected stripes, checker or gradient-blobs)");
}

void SyntheticSpec::validate() const {
  if (size < 16) throw ContractError("synthetic size must be >= 16 so the period range [4, size/4] is non-empty");
  if (count < 0) throw ContractError("synthetic count must be >= 0");
}

namespace {

using Color = std::array<float, 3>;

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  return {u(rng), u(rng), u(rng)};
}

void paint(Tensor<float>& t, int y, int x, const Color& a, const Color& b, double mix) {
  for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<float>(a[c] + (b[c] - a[c]) * mix);
}

}  // namespace

Tensor<float> synth_image(const SyntheticSpec& spec, int index) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), 0x53594eu};
  std::mt19937_64 rng(seq);
  const int s = spec.size;
  Tensor<float> t(Shape{1, 3, s, s});
  std::uniform_int_distribution<int> period_dist(4, s / 4);

  switch (spec.pattern) {
    case Pattern::kStripes: {
      const int period = period_dist(rng);
      const bool horizontal = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      const int phase = std::uniform_int_distribution<int>(0, period - 1)(rng);
      const Color a = random_color(rng), b = random_color(rng);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const int i = horizontal ? y : x;
          const double mix = 0.5 + 0.5 * std::cos(2 * std::numbers::pi * (i + phase) / period);
          paint(t, y, x, a, b, mix);
        }
      break;
    }
    case Pattern::kChecker: {
      const int period = period_dist(rng);
      const int py = std::uniform_int_distribution<int>(0, period - 1)(rng);
      const int px = std::uniform_int_distribution<int>(0, period - 1)(rng);
      const Color a = random_color(rng), b = random_color(rng);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const int cell = (2 * (y + py) / period + 2 * (x + px) / period) % 2;
          paint(t, y, x, a, b, cell);
        }
      break;
    }
    case Pattern::kGradientBlobs: {
      const int blobs = std::uniform_int_distribution<int>(2, 5)(rng);
      std::uniform_real_distribution<double> pos(0, s), radius(s / 8.0, s / 3.0), amp(-1, 1);
      std::vector<std::array<double, 6>> bumps;  // cy, cx, r, amplitude per channel
      for (int i = 0; i < blobs; ++i) bumps.push_back({pos(rng), pos(rng), radius(rng), amp(rng), amp(rng), amp(rng)});
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          for (int c = 0; c < 3; ++c) {
            double v = 0;
            for (const auto& b : bumps) {
              const double d2 = (y + 0.5 - b[0]) * (y + 0.5 - b[0]) + (x + 0.5 - b[1]) * (x + 0.5 - b[1]);
              v += b[3 + c] * std::exp(-d2 / (2 * b[2] * b[2]));
            }
            t.at(0, c, y, x) = static_cast<float>(std::clamp(v, -1.0, 1.0));
          }
      break;
    }
  }
  return t;
}

std::vector<Tensor<float>> synth_images(const SyntheticSpec& spec) {
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<std::size_t>(std::max(spec.count, 0)));
  for (int i = 0; i < spec.count; ++i) out.push_back(synth_image(spec, i));
  return out;
}

namespace {

std::string image_name(int i) {
  std::ostringstream os;
  os << "img_" << std::setw(5) << std::setfill('0') << i << ".ppm";
  return os.str();
}

}  // namespace

void write_synthetic(const SyntheticSpec& spec, const std::string& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(std::filesystem::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in '" + dir + "'");
  manifest << "# pattern=" << to_string(spec.pattern) << " size=" << spec.size << " count=" << spec.count
           << " seed=" << spec.seed << '\n';
  for (int i = 0; i < spec.count; ++i) {
    const std::string name = image_name(i);
    write_image((std::filesystem::path(dir) / name).string(), synth_image(spec, i));
    manifest << name << '\n';
  }
  if (!manifest) throw std::runtime_error("failed writing manifest in '" + dir + "'");
}

std::vector<Tensor<float>> load_image_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  std::vector<std::string> names;
  const fs::path manifest = fs::path(dir) / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      names.push_back(line);
    }
  } else {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
  }
  std::vector<Tensor<float>> out;
  for (const auto& n : names) out.push_back(read_image((fs::path(dir) / n).string()));
  return out;
}

}  // namespace pepsi
