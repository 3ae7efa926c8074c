#include "pepsi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pepsi {

namespace {

double evaluate(const LossFn& loss) {
  Graph<double> g(false);
  const Var<double> out = loss(g);
  if (out.value().size() != 1) throw ContractError("grad_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check_param(const LossFn& loss, Parameter<double>& p, const GradCheckOptions& opt) {
  if (opt.eps < 1e-6 || opt.eps > 1e-3) throw ContractError("grad_check: eps must lie in [1e-6, 1e-3]");
  if (evaluate(loss) != evaluate(loss)) throw ContractError("grad_check: function is not deterministic");

  p.zero_grad();
  {
    Graph<double> g(true);
    g.backward(loss(g));
  }
  const Tensor<double> analytic = p.grad;

  std::vector<std::size_t> coords(p.value.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opt.max_coordinates != 0 && coords.size() > opt.max_coordinates) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (std::size_t i : coords) {
    const double orig = p.value[i];
    p.value[i] = orig + opt.eps;
    const double up = evaluate(loss);
    p.value[i] = orig - opt.eps;
    const double down = evaluate(loss);
    p.value[i] = orig;
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  result.coordinates = coords.size();
  p.zero_grad();
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& opt) {
  Parameter<double> p("x", x);
  return grad_check_param([&](Graph<double>& g) { return f(g, g.param(p)); }, p, opt);
}

}  // namespace pepsi
