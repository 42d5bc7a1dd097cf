#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rliv/error.hpp"
#include "rliv/nn/tensor.hpp"
#include "rliv/rng.hpp"

namespace rliv::nn {

enum class Activation { relu, identity, sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

template <class T>
struct DenseLayer {
  Mat<T> weight;  // out x in
  Mat<T> bias;    // out x 1
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Activation record of one batched forward pass. Column b is sample b.
template <class T>
struct DenseCache {
  const void* owner = nullptr;
  std::vector<Mat<T>> inputs;  // input of each layer
  std::vector<Mat<T>> outputs;  // post-activation output of each layer
};

/// Glorot-uniform weight bound for a layer.
inline double glorot_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <class T>
void fill_uniform(Mat<T>& m, double limit, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.uniform(-limit, limit));
}

/// Multilayer perceptron with fixed topology. Hidden layers use `hidden_act`,
/// the last layer uses `output_act`.
template <class T>
class DenseNetwork {
 public:
  DenseNetwork() = default;

  DenseNetwork(Eigen::Index in_dim, const std::vector<int>& hidden, Eigen::Index out_dim,
               Rng& rng, Activation hidden_act = Activation::relu,
               Activation output_act = Activation::identity) {
    if (in_dim <= 0 || out_dim <= 0) throw ConfigError("DenseNetwork: dimensions must be positive");
    Eigen::Index prev = in_dim;
    auto add = [&](Eigen::Index out, Activation act) {
      if (out <= 0) throw ConfigError("DenseNetwork: hidden dimension must be positive");
      DenseLayer<T> layer;
      layer.weight.resize(out, prev);
      fill_uniform(layer.weight, glorot_limit(prev, out), rng);
      layer.bias = Mat<T>::Zero(out, 1);
      layer.activation = act;
      layers_.push_back(std::move(layer));
      prev = out;
    };
    for (int h : hidden) add(h, hidden_act);
    add(out_dim, output_act);
  }

  /// Builds a network from explicit layers; dimensions must chain.
  explicit DenseNetwork(std::vector<DenseLayer<T>> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("DenseNetwork: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.rows() != l.out_dim() || l.bias.cols() != 1)
        throw ConfigError("DenseNetwork: bias shape mismatch at layer " + std::to_string(i));
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
        throw ConfigError("DenseNetwork: layer dimensions do not chain at layer " +
                          std::to_string(i));
    }
  }

  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }

  /// Two tensors (weight, bias) per layer, in layer order.
  std::size_t num_tensors() const { return 2 * layers_.size(); }

  void append_params(std::vector<Mat<T>*>& out) {
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }

  std::vector<Mat<T>*> params() {
    std::vector<Mat<T>*> out;
    append_params(out);
    return out;
  }

  Mat<T> forward(const Mat<T>& x) const {
    check_input(x);
    Mat<T> a = x;
    for (const auto& l : layers_) a = activate(affine(l, a), l.activation);
    return a;
  }

  Mat<T> forward(const Mat<T>& x, DenseCache<T>& cache) const {
    check_input(x);
    cache.owner = this;
    cache.inputs.resize(layers_.size());
    cache.outputs.resize(layers_.size());
    const Mat<T>* a = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      cache.inputs[i] = *a;
      cache.outputs[i] = activate(affine(layers_[i], *a), layers_[i].activation);
      a = &cache.outputs[i];
    }
    return cache.outputs.back();
  }

  /// Accumulates parameter gradients into `grads` (weight, bias per layer) and
  /// returns the gradient with respect to the input batch.
  Mat<T> backward(const Mat<T>& grad_y, const DenseCache<T>& cache, std::span<Mat<T>> grads) const {
    if (cache.owner != this || cache.inputs.size() != layers_.size())
      throw ContractError("DenseNetwork::backward: cache was not produced by this network");
    if (grads.size() != num_tensors())
      throw ConfigError("DenseNetwork::backward: gradient bundle has wrong tensor count");
    const Eigen::Index batch = cache.inputs.front().cols();
    if (grad_y.rows() != out_dim() || grad_y.cols() != batch)
      throw ContractError("DenseNetwork::backward: upstream gradient does not match cache");
    Mat<T> delta = grad_y;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      const Mat<T>& y = cache.outputs[k];
      switch (l.activation) {
        case Activation::identity: break;
        case Activation::relu: delta = (y.array() > T(0)).select(delta, T(0)); break;
        case Activation::sigmoid: delta = delta.cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())); break;
      }
      grads[2 * k].noalias() += delta * cache.inputs[k].transpose();
      grads[2 * k + 1].noalias() += delta.rowwise().sum();
      Mat<T> next = l.weight.transpose() * delta;
      delta = std::move(next);
    }
    return delta;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  void check_input(const Mat<T>& x) const {
    if (layers_.empty()) throw ConfigError("DenseNetwork: empty network");
    if (x.rows() != in_dim())
      throw ConfigError("DenseNetwork: input has " + std::to_string(x.rows()) +
                        " rows, expected " + std::to_string(in_dim()));
  }

  static Mat<T> affine(const DenseLayer<T>& l, const Mat<T>& a) {
    Mat<T> z = l.weight * a;
    z.colwise() += l.bias.col(0);
    return z;
  }

  static Mat<T> activate(Mat<T> z, Activation act) {
    switch (act) {
      case Activation::identity: return z;
      case Activation::relu: return z.cwiseMax(T(0));
      case Activation::sigmoid: return (T(1) / (T(1) + (-z.array()).exp())).matrix();
    }
    return z;
  }

  std::vector<DenseLayer<T>> layers_;
};

/// Smallest |pre-activation| over all relu units for batch `x`. Finite
/// difference probes reject inputs that sit too close to a kink.
template <class T>
T min_abs_relu_preactivation(const DenseNetwork<T>& net, const Mat<T>& x) {
  T best = std::numeric_limits<T>::infinity();
  Mat<T> a = x;
  for (const auto& l : net.layers()) {
    Mat<T> z = l.weight * a;
    z.colwise() += l.bias.col(0);
    if (l.activation == Activation::relu) best = std::min(best, z.cwiseAbs().minCoeff());
    switch (l.activation) {
      case Activation::identity: a = z; break;
      case Activation::relu: a = z.cwiseMax(T(0)); break;
      case Activation::sigmoid: a = (T(1) / (T(1) + (-z.array()).exp())).matrix(); break;
    }
  }
  return best;
}

}  // namespace rliv::nn
