#pragma once

#include <span>

#include "rliv/error.hpp"
#include "rliv/nn/tensor.hpp"

namespace rliv::nn {

/// target <- tau * online + (1 - tau) * target, elementwise.
template <class T>
void soft_update(std::span<Mat<T>* const> target, std::span<Mat<T>* const> online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    if (tau == 0.0) return;  // frozen targets
    throw ValidationError("soft_update: tau must be in (0, 1]");
  }
  if (target.size() != online.size()) throw ConfigError("soft_update: tensor count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->rows() != online[i]->rows() || target[i]->cols() != online[i]->cols())
      throw ConfigError("soft_update: shape mismatch");
  }
  if (tau == 1.0) {
    for (std::size_t i = 0; i < target.size(); ++i) *target[i] = *online[i];
    return;
  }
  const T a = static_cast<T>(tau);
  const T b = static_cast<T>(1.0 - tau);
  for (std::size_t i = 0; i < target.size(); ++i) *target[i] = a * *online[i] + b * *target[i];
}

template <class T>
void hard_update(std::span<Mat<T>* const> target, std::span<Mat<T>* const> online) {
  soft_update<T>(target, online, 1.0);
}

}  // namespace rliv::nn
