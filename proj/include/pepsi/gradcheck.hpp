#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "pepsi/graph.hpp"

namespace pepsi {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double eps = 1e-4;
  /// Check at most this many coordinates (0 = all), drawn with `seed`.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

using ScalarFn = std::function<Var<double>(Graph<double>&, Var<double>)>;
using LossFn = std::function<Var<double>(Graph<double>&)>;

/// Backprop gradient of f at x against central differences; reports
/// max |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& opt = {});

/// Same, for a parameter that `loss` binds through Graph::param. The
/// parameter value is restored afterwards.
GradCheckResult grad_check_param(const LossFn& loss, Parameter<double>& p, const GradCheckOptions& opt = {});

}  // namespace pepsi
