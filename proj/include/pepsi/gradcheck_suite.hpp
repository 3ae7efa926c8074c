#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pepsi/gradcheck.hpp"

namespace pepsi {

inline constexpr double kGradCheckTolerance = 1e-3;

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 7;
  /// Include the tiny end-to-end generators (the slow part).
  bool networks = true;
  /// Coordinates sampled per parameter tensor in the network checks.
  std::size_t coordinates_per_tensor = 6;
};

/// 64-bit central-difference checks of every differentiable primitive, the
/// losses, CAM in both modes, RED with respect to its input, and tiny
/// PEPSI / Diet-PEPSI generators (widths / 8, 32x32) in both CAM modes.
std::vector<GradCheckCase> run_gradcheck_suite(const GradSuiteOptions& opt = {});

}  // namespace pepsi
