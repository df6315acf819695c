#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ergcbf/errors.hpp"

namespace ergcbf {

/// Value of the soft minimum together with its normalized weights.
///
/// The weights are the partial derivatives of the value with respect to each
/// input term, so callers assemble gradients by weighting per-term gradients
/// with them instead of re-exponentiating.
struct SoftminResult {
  double value = 0.0;
  Eigen::VectorXd weights;
};

/// Soft minimum  -(1/beta) log(sum_i exp(-beta s_i)).
///
/// All exponentials are taken after shifting by min(s), so the largest term is
/// exactly exp(0) = 1 and the sum lies in [1, n]. This never overflows, and
/// the value satisfies min(s) - log(n)/beta <= value <= min(s).
inline SoftminResult softmin(std::span<const double> values, double beta) {
  detail::require(!values.empty(), "softmin: empty input");
  detail::require(beta > 0.0 && std::isfinite(beta), "softmin: beta must be positive and finite");
  for (double v : values) detail::require(std::isfinite(v), "softmin: non-finite input");

  const double shift = *std::min_element(values.begin(), values.end());
  SoftminResult out;
  out.weights.resize(static_cast<Eigen::Index>(values.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double e = std::exp(-beta * (values[i] - shift));
    out.weights[static_cast<Eigen::Index>(i)] = e;
    sum += e;
  }
  out.weights /= sum;
  out.value = shift - std::log(sum) / beta;
  return out;
}

inline SoftminResult softmin(std::initializer_list<double> values, double beta) {
  return softmin(std::span<const double>(values.begin(), values.size()), beta);
}

inline SoftminResult softmin(const Eigen::VectorXd& values, double beta) {
  return softmin(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), beta);
}

}  // namespace ergcbf
