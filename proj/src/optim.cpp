#include "pepsi/optim.hpp"

#include <cmath>

namespace pepsi {

template <typename T>
void adam_step(Parameter<T>& p, AdamState<T>& s, const AdamOptions& opt) {
  if (s.m.shape() != p.value.shape() || s.v.shape() != p.value.shape()) {
    throw ContractError("adam_step: state of shape " + to_string(s.m.shape()) + " does not track parameter '" +
                        p.name + "' of shape " + to_string(p.value.shape()));
  }
  if (!(opt.lr >= 0.0)) throw ContractError("adam_step: negative learning rate");
  s.t += 1;
  const double b1 = opt.beta1, b2 = opt.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
  T* pv = p.value.ptr();
  const T* g = p.grad.ptr();
  T* m = s.m.ptr();
  T* v = s.v.ptr();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double gi = g[i];
    m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * gi);
    v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * gi * gi);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    pv[i] = static_cast<T>(pv[i] - opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
  }
}

template <typename T>
void Adam<T>::step(ParamSet<T>& params, const AdamOptions& opt) {
  for (auto& p : params) {
    auto it = states_.find(p->name);
    if (it == states_.end()) it = states_.emplace(p->name, AdamState<T>(p->value.shape())).first;
    adam_step(*p, it->second, opt);
  }
}

template void adam_step(Parameter<float>&, AdamState<float>&, const AdamOptions&);
template void adam_step(Parameter<double>&, AdamState<double>&, const AdamOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace pepsi
