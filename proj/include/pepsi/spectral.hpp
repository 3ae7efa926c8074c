#pragma once

#include <cstdint>
#include <vector>

#include "pepsi/graph.hpp"

namespace pepsi {

/// Left singular-vector estimate for one weight matrix (unit norm).
template <typename T>
struct SpectralState {
  std::vector<T> u;
};

inline constexpr double kSigmaFloor = 1e-12;

/// Random unit vector of length `rows`.
template <typename T>
SpectralState<T> make_spectral_state(int rows, std::uint64_t seed);

/// Largest-singular-value estimate of `w` viewed as a (C_out, k*k*C_in)
/// matrix. Runs `iters` power iterations on `s.u` first (0 = estimate
/// from the stored vector only). Floored at kSigmaFloor.
template <typename T>
double spectral_sigma(const Tensor<T>& w, SpectralState<T>& s, int iters);

/// w / sigma with sigma treated as a constant in backprop.
template <typename T>
Var<T> spectral_normalize(Var<T> w, SpectralState<T>& s, int power_iters);

}  // namespace pepsi
