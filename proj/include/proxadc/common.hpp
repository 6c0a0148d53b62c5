#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace proxadc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Failure categories surfaced by the library. Tests and the CLI dispatch on
/// the code; the message carries instance-specific detail.
enum class ErrorCode {
  DimensionMismatch,
  NotPsd,
  NumericalBreakdown,
  OutOfDomain,
  Unsupported,
  InnerInfeasible,
  BadOffset,
  AtOrigin,
  MarginEmpty,
  MasterInfeasible,
  StallNoProgress,
  NotTerminated,
  GenerationRejected,
  InvalidArgument,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

/// Closed interval on the extended real line, endpoints possibly +-inf.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double t, double tol = 0.0) const { return t >= lo - tol && t <= hi + tol; }
  Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }

  /// Element of the interval with smallest absolute value (deterministic
  /// subgradient selection).
  double min_norm_element() const {
    if (lo <= 0.0 && hi >= 0.0) return 0.0;
    return lo > 0.0 ? lo : hi;
  }
  double clamp(double t) const { return t < lo ? lo : (t > hi ? hi : t); }
};

inline bool interval_eq(const Interval& a, const Interval& b, double tol) {
  auto end_eq = [tol](double x, double y) {
    if (std::isinf(x) || std::isinf(y)) return x == y;
    return std::abs(x - y) <= tol;
  };
  return end_eq(a.lo, b.lo) && end_eq(a.hi, b.hi);
}

}  // namespace proxadc
