#include "pepsi/spectral.hpp"

#include <cmath>
#include <random>

#include "pepsi/ops.hpp"

namespace pepsi {

namespace {

// Kernel (k, k, C_in, C_out) is stored as [r][oc]; the matrix is W[oc][r].
template <typename T>
std::vector<double> mat_t_vec(const Tensor<T>& w, const std::vector<T>& u) {
  const std::size_t rows = static_cast<std::size_t>(w.shape().w);
  const std::size_t cols = w.size() / rows;
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < cols; ++r) {
    const T* src = w.ptr() + r * rows;
    double acc = 0;
    for (std::size_t oc = 0; oc < rows; ++oc) acc += static_cast<double>(src[oc]) * u[oc];
    out[r] = acc;
  }
  return out;
}

template <typename T>
std::vector<double> mat_vec(const Tensor<T>& w, const std::vector<double>& v) {
  const std::size_t rows = static_cast<std::size_t>(w.shape().w);
  const std::size_t cols = w.size() / rows;
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < cols; ++r) {
    const T* src = w.ptr() + r * rows;
    for (std::size_t oc = 0; oc < rows; ++oc) out[oc] += static_cast<double>(src[oc]) * v[r];
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double acc = 0;
  for (double e : v) acc += e * e;
  return std::sqrt(acc);
}

}  // namespace

template <typename T>
SpectralState<T> make_spectral_state(int rows, std::uint64_t seed) {
  if (rows < 1) throw ContractError("spectral state needs at least one row");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(rows));
  for (double& e : u) e = normal(rng);
  double n = norm(u);
  if (n == 0.0) {
    u.assign(u.size(), 0.0);
    u[0] = n = 1.0;
  }
  SpectralState<T> s;
  s.u.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) s.u[i] = static_cast<T>(u[i] / n);
  return s;
}

template <typename T>
double spectral_sigma(const Tensor<T>& w, SpectralState<T>& s, int iters) {
  if (s.u.size() != static_cast<std::size_t>(w.shape().w)) {
    throw ContractError("spectral_sigma: state length " + std::to_string(s.u.size()) + " does not match " +
                        std::to_string(w.shape().w) + " output channels");
  }
  for (int it = 0; it < iters; ++it) {
    std::vector<double> v = mat_t_vec(w, s.u);
    const double nv = norm(v);
    if (nv < kSigmaFloor) break;
    for (double& e : v) e /= nv;
    std::vector<double> u = mat_vec(w, v);
    const double nu = norm(u);
    if (nu < kSigmaFloor) break;
    for (std::size_t i = 0; i < u.size(); ++i) s.u[i] = static_cast<T>(u[i] / nu);
  }
  return std::max(norm(mat_t_vec(w, s.u)), kSigmaFloor);
}

template <typename T>
Var<T> spectral_normalize(Var<T> w, SpectralState<T>& s, int power_iters) {
  const double sigma = spectral_sigma(w.value(), s, power_iters);
  return scale(w, static_cast<T>(1.0 / sigma));
}

template SpectralState<float> make_spectral_state(int, std::uint64_t);
template SpectralState<double> make_spectral_state(int, std::uint64_t);
template double spectral_sigma(const Tensor<float>&, SpectralState<float>&, int);
template double spectral_sigma(const Tensor<double>&, SpectralState<double>&, int);
template Var<float> spectral_normalize(Var<float>, SpectralState<float>&, int);
template Var<double> spectral_normalize(Var<double>, SpectralState<double>&, int);

}  // namespace pepsi
