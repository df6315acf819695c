#pragma once

#include <stdexcept>
#include <string>

namespace ergcbf {

/// Precondition on an argument was not met (empty input, NaN, size mismatch).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested operation is not implemented for this model (e.g. dynamics for n != 2).
class UnsupportedModel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalSingularity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sampled arm point coincides with the obstacle center; the distance gradient is undefined.
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The trajectory left the safe set {H >= -tolerance}.
class SafetyBreach : public std::runtime_error {
 public:
  SafetyBreach(const std::string& what, double h_value)
      : std::runtime_error(what), h_value_(h_value) {}
  double h_value() const noexcept { return h_value_; }

 private:
  double h_value_;
};

/// Bad or missing scenario configuration. `key()` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

namespace detail {
inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}
}  // namespace detail

}  // namespace ergcbf
