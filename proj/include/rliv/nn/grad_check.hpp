#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "rliv/error.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/tensor.hpp"
#include "rliv/rng.hpp"

namespace rliv::nn {

/// Relative error used by every gradient check in the repo.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic) + std::abs(numeric), 1e-6});
}

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates probed per tensor; <= 0 probes every coordinate.
  int coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Compares `analytic` against central differences of `loss` with respect to
/// `params`. `loss` must read the current parameter values each call.
/// Returns the maximum relative error over the probed coordinates.
inline double grad_check(std::span<Mat<double>* const> params, const std::function<double()>& loss,
                         const GradBundle<double>& analytic, const GradCheckOptions& opt = {}) {
  if (!(opt.eps > 1e-7 && opt.eps < 1e-3)) throw ValidationError("grad_check: eps out of range");
  require_congruent(params, analytic, "grad_check");
  Rng rng(opt.seed);
  double worst = 0.0;
  auto probe = [&](Mat<double>& p, const Mat<double>& g, Eigen::Index i) {
    double& x = p.data()[i];
    const double saved = x;
    x = saved + opt.eps;
    const double up = loss();
    x = saved - opt.eps;
    const double down = loss();
    x = saved;
    const double numeric = (up - down) / (2.0 * opt.eps);
    worst = std::max(worst, relative_error(g.data()[i], numeric));
  };
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat<double>& p = *params[t];
    const Eigen::Index n = p.size();
    if (opt.coords_per_tensor <= 0 || opt.coords_per_tensor >= n) {
      for (Eigen::Index i = 0; i < n; ++i) probe(p, analytic.tensors[t], i);
    } else {
      for (int k = 0; k < opt.coords_per_tensor; ++k)
        probe(p, analytic.tensors[t], static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
    }
  }
  return worst;
}

/// Gradient check of a single network on input batch `x`, using the scalar
/// loss sum(weights .* net(x)) with fixed random weights. Also checks the
/// input gradient.
inline double grad_check(DenseNetwork<double>& net, const Mat<double>& x, double eps = 1e-5,
                         std::uint64_t seed = 0) {
  Rng rng(derive_seed(seed, "grad_check.weights"));
  Mat<double> w(net.out_dim(), x.cols());
  fill_uniform(w, 1.0, rng);
  auto params = net.params();
  GradBundle<double> grads(params);
  DenseCache<double> cache;
  net.forward(x, cache);
  const Mat<double> grad_x = net.backward(w, cache, std::span<Mat<double>>(grads.tensors));

  Mat<double> input = x;
  auto loss = [&] { return net.forward(input).cwiseProduct(w).sum(); };
  GradCheckOptions opt;
  opt.eps = eps;
  opt.seed = seed;
  double worst = grad_check(params, loss, grads, opt);

  std::vector<Mat<double>*> in_params{&input};
  GradBundle<double> in_grads;
  in_grads.tensors.push_back(grad_x);
  worst = std::max(worst, grad_check(in_params, loss, in_grads, opt));
  return worst;
}

}  // namespace rliv::nn
