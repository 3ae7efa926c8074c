#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "pepsi/graph.hpp"

namespace pepsi {

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(const Shape& s) : m(s), v(s) {}
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `p` from `p.grad`.
template <typename T>
void adam_step(Parameter<T>& p, AdamState<T>& s, const AdamOptions& opt);

/// Adam over a whole ParamSet; moments are keyed by parameter name.
template <typename T>
class Adam {
 public:
  void step(ParamSet<T>& params, const AdamOptions& opt);

  std::map<std::string, AdamState<T>>& states() { return states_; }
  const std::map<std::string, AdamState<T>>& states() const { return states_; }

 private:
  std::map<std::string, AdamState<T>> states_;
};

}  // namespace pepsi
