#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rliv/error.hpp"

namespace rliv::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Gradient storage mirroring a parameter list, tensor for tensor.
template <class T>
struct GradBundle {
  std::vector<Mat<T>> tensors;

  GradBundle() = default;

  explicit GradBundle(std::span<Mat<T>* const> params) {
    tensors.reserve(params.size());
    for (const auto* p : params) tensors.emplace_back(Mat<T>::Zero(p->rows(), p->cols()));
  }

  std::size_t size() const { return tensors.size(); }

  void zero() {
    for (auto& t : tensors) t.setZero();
  }

  std::span<Mat<T>> slice(std::size_t offset, std::size_t count) {
    return std::span<Mat<T>>(tensors).subspan(offset, count);
  }

  T squared_norm() const {
    T s = 0;
    for (const auto& t : tensors) s += t.squaredNorm();
    return s;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.allFinite()) return false;
    return true;
  }

  void scale(T c) {
    for (auto& t : tensors) t *= c;
  }
};

template <class T>
void require_congruent(std::span<Mat<T>* const> params, const GradBundle<T>& grads,
                       const char* what) {
  if (params.size() != grads.size())
    throw ConfigError(std::string(what) + ": parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads.tensors[i].rows() ||
        params[i]->cols() != grads.tensors[i].cols())
      throw ConfigError(std::string(what) + ": shape mismatch at tensor " + std::to_string(i));
  }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
T clip_global_norm(GradBundle<T>& grads, T max_norm) {
  const T norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > T(0)) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace rliv::nn
