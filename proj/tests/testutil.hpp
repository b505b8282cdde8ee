#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "panofc/optim.hpp"
#include "panofc/random.hpp"
#include "panofc/tensor.hpp"

namespace testutil {

// Fills a tensor with uniform values in [lo, hi].
inline void fill_uniform(panofc::Tensor& t, panofc::Rng& rng, double lo, double hi) {
  for (double& v : t.values()) v = rng.uniform(lo, hi);
}

inline panofc::Tensor random_tensor(panofc::Shape shape, panofc::Rng& rng, double lo,
                                    double hi, bool requires_grad = false) {
  panofc::Tensor t(std::move(shape), 0.0, requires_grad);
  fill_uniform(t, rng, lo, hi);
  return t;
}

// Maximum relative error between analytic gradients and central finite
// differences (step h) across every element of every parameter in the
// store.  `forward` must be a pure function of the store's parameters
// returning a scalar loss.
inline double max_grad_rel_err(panofc::ParamStore& store,
                               const std::function<panofc::Tensor()>& forward,
                               double h = 1e-5) {
  store.zero_grad();
  panofc::Tensor loss = forward();
  loss.backward();
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, t] : store.tensors()) analytic[name] = t.grad();
  double worst = 0.0;
  for (auto& [name, t] : store.tensors()) {
    auto& vals = t.values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = forward().value();
      vals[i] = orig - h;
      const double dn = forward().value();
      vals[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double a = analytic[name][i];
      const double rel = std::fabs(a - fd) / (std::fabs(a) + 1e-8);
      if (rel > worst) worst = rel;
    }
  }
  store.zero_grad();
  return worst;
}

}  // namespace testutil
