#pragma once

#include <cmath>

#include "rliv/error.hpp"

namespace rliv::nn {

struct LossValue {
  double value = 0.0;
  double grad = 0.0;  // d value / d prediction
};

/// Huber loss of pred against target: quadratic inside |e| <= delta, linear outside.
inline LossValue huber(double pred, double target, double delta = 1.0) {
  if (!std::isfinite(pred) || !std::isfinite(target)) throw NumericError("huber: non-finite input");
  if (!(delta > 0.0)) throw ValidationError("huber: delta must be positive");
  const double e = pred - target;
  const double a = std::abs(e);
  if (a <= delta) return {0.5 * e * e, e};
  return {delta * (a - 0.5 * delta), e > 0 ? delta : -delta};
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// Binary cross entropy on a logit, in log-sum-exp form:
/// max(x, 0) - x*y + log(1 + exp(-|x|)).
inline LossValue bce(double logit, int label) {
  if (!std::isfinite(logit)) throw NumericError("bce: non-finite logit");
  if (label != 0 && label != 1) throw ValidationError("bce: label must be 0 or 1");
  const double value = std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
  return {value, sigmoid(logit) - label};
}

}  // namespace rliv::nn
