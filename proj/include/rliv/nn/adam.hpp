#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rliv/error.hpp"
#include "rliv/nn/tensor.hpp"

namespace rliv::nn {

template <class T>
struct AdamState {
  std::vector<Mat<T>> first;
  std::vector<Mat<T>> second;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;

  explicit AdamState(std::span<Mat<T>* const> params) {
    for (const auto* p : params) {
      first.emplace_back(Mat<T>::Zero(p->rows(), p->cols()));
      second.emplace_back(Mat<T>::Zero(p->rows(), p->cols()));
    }
  }
};

/// One bias-corrected Adam update, in place. Increments state.step.
template <class T>
void adam_step(std::span<Mat<T>* const> params, const GradBundle<T>& grads, AdamState<T>& state,
               double lr) {
  require_congruent(params, grads, "adam_step");
  if (state.first.size() != params.size() || state.second.size() != params.size())
    throw ConfigError("adam_step: optimizer state does not match parameters");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(lr / (1.0 - std::pow(state.beta1, t)));
  const T bc2_sqrt = static_cast<T>(std::sqrt(1.0 - std::pow(state.beta2, t)));
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& v = state.second[i];
    const auto& g = grads.tensors[i];
    if (m.rows() != g.rows() || m.cols() != g.cols())
      throw ConfigError("adam_step: moment shape mismatch");
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    // theta -= lr * m_hat / (sqrt(v_hat) + eps)
    params[i]->array() -= step_size * m.array() / (v.array().sqrt() / bc2_sqrt + eps);
  }
}

}  // namespace rliv::nn
