#pragma once

// Central finite-difference oracle for reverse-mode gradients. Test-only:
// the forward function is re-evaluated around perturbed parameters, fully
// independent of the backward implementation it checks.

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "maes/autodiff.hpp"

namespace maes::testing {

// Builds a scalar loss on the given tape from the store's current values.
using LossBuilder = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckResult {
  bool ok = true;
  double max_abs_diff = 0.0;
  std::string worst;  // "param[i]: analytic=..., fd=..."
};

inline double eval_loss(const LossBuilder& build, ParameterStore& store) {
  Tape tp(/*recording=*/false);
  return build(tp, store).value()[0];
}

// |analytic - fd| <= max(abs_floor, rel_tol * max(|analytic|, |fd|))
inline GradCheckResult check_gradients(const LossBuilder& build, ParameterStore& store,
                                       double step = 1e-5, double rel_tol = 1e-4,
                                       double abs_floor = 1e-7) {
  Tape tp;
  const Var loss = build(tp, store);
  tp.backward(loss, store);

  std::vector<Tensor> analytic;
  analytic.reserve(store.count());
  for (const auto& e : store.entries()) analytic.push_back(e.grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < store.entries().size(); ++k) {
    auto& e = store.entries()[k];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + step;
      const double up = eval_loss(build, store);
      e.value[i] = saved - step;
      const double down = eval_loss(build, store);
      e.value[i] = saved;

      const double fd = (up - down) / (2.0 * step);
      const double ad = analytic[k][i];
      const double diff = std::abs(ad - fd);
      const double bound = std::max(abs_floor, rel_tol * std::max(std::abs(ad), std::abs(fd)));
      if (diff > result.max_abs_diff) {
        result.max_abs_diff = diff;
        result.worst = e.name + "[" + std::to_string(i) + "]: analytic=" + std::to_string(ad) +
                       " fd=" + std::to_string(fd);
      }
      if (diff > bound) result.ok = false;
    }
  }
  return result;
}

inline Tensor random_tensor(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return Tensor::vector(std::move(v));
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

inline Tensor random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = dist(rng);
    s += x;
  }
  for (double& x : v) x /= s;
  return Tensor::vector(std::move(v));
}

}  // namespace maes::testing
