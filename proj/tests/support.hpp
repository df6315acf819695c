#pragma once

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "ergcbf/flagship.hpp"

namespace ergcbf::testing {

inline const Scenario& flagship() {
  static const Scenario sc = flagship_scenario();
  return sc;
}

inline const ArmModel& arm() { return flagship().problem.model; }
inline const SafetyProblem& problem() { return flagship().problem; }

inline VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  VectorXd vector(Eigen::Index n, double lo, double hi) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// central differences, kept separate from the library's own harness
inline VectorXd central_diff(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

// (f(x(t+h)) - f(x(t-h))) / 2h along the constant-g flow started at x(t-h); also returns x(t)
struct FlowDifference {
  double derivative;
  JointState center;
};

inline FlowDifference flow_central_diff(const std::function<double(const JointState&)>& f,
                                        const AugmentedState& before, double h, const Scenario& sc) {
  const AugmentedState mid = rk4_step(before, h, sc, ReferenceMode::constant);
  const AugmentedState after = rk4_step(mid, h, sc, ReferenceMode::constant);
  return {(f(after.x) - f(before.x)) / (2 * h), mid.x};
}

inline double rel_err(const VectorXd& a, const VectorXd& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

}  // namespace ergcbf::testing
