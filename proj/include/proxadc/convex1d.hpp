#pragma once

#include "proxadc/common.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace proxadc {

/// Univariate proper lsc convex function, one of a closed set of kinds so
/// that values, subgradient intervals, and the monotone decomposition are
/// exact. Kinds:
///   Affine(a, b)        a*t + b
///   AbsDev(nu)          |nu - t|
///   HingeUp(nu)         max(0, t - nu)
///   HingeDown(nu)       max(0, nu - t)
///   DeadZone(nu, s)     max(0, |nu - t| - s), s >= 0
///   IndicatorLeq(r)     0 on (-inf, r], +inf beyond
///   MaxAffine(pieces)   max_j (a_j*t + b_j)
class UnivariateConvex {
 public:
  enum class Kind { Affine, AbsDev, HingeUp, HingeDown, DeadZone, IndicatorLeq, MaxAffine };

  static UnivariateConvex affine(double slope, double intercept) {
    return UnivariateConvex(Kind::Affine, slope, intercept);
  }
  static UnivariateConvex abs_dev(double nu) { return UnivariateConvex(Kind::AbsDev, nu, 0); }
  static UnivariateConvex hinge_up(double nu) { return UnivariateConvex(Kind::HingeUp, nu, 0); }
  static UnivariateConvex hinge_down(double nu) {
    return UnivariateConvex(Kind::HingeDown, nu, 0);
  }
  static UnivariateConvex dead_zone(double nu, double s) {
    require(s >= 0, ErrorCode::InvalidArgument, "DeadZone requires s >= 0");
    return UnivariateConvex(Kind::DeadZone, nu, s);
  }
  static UnivariateConvex indicator_leq(double r) {
    return UnivariateConvex(Kind::IndicatorLeq, r, 0);
  }
  static UnivariateConvex zero() { return affine(0.0, 0.0); }
  static UnivariateConvex max_affine(std::vector<std::pair<double, double>> pieces) {
    require(!pieces.empty(), ErrorCode::InvalidArgument, "MaxAffine needs at least one piece");
    UnivariateConvex f(Kind::MaxAffine, 0, 0);
    f.pieces_ = std::move(pieces);
    return f;
  }

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const std::vector<std::pair<double, double>>& pieces() const { return pieces_; }

  /// Domain as an interval; only IndicatorLeq restricts it.
  Interval domain() const {
    if (kind_ == Kind::IndicatorLeq) return {-kInf, a_};
    return {-kInf, kInf};
  }

  double value(double t) const {
    switch (kind_) {
      case Kind::Affine: return a_ * t + b_;
      case Kind::AbsDev: return std::abs(a_ - t);
      case Kind::HingeUp: return std::max(0.0, t - a_);
      case Kind::HingeDown: return std::max(0.0, a_ - t);
      case Kind::DeadZone: return std::max(0.0, std::abs(a_ - t) - b_);
      case Kind::IndicatorLeq: return t <= a_ ? 0.0 : kInf;
      case Kind::MaxAffine: {
        double v = -kInf;
        for (const auto& [s, c] : pieces_) v = std::max(v, s * t + c);
        return v;
      }
    }
    return kNaN;
  }

  /// Closed interval of subgradients at t; throws OutOfDomain outside dom.
  Interval subgrad_interval(double t) const {
    switch (kind_) {
      case Kind::Affine: return {a_, a_};
      case Kind::AbsDev:
        if (t < a_) return {-1, -1};
        if (t > a_) return {1, 1};
        return {-1, 1};
      case Kind::HingeUp:
        if (t < a_) return {0, 0};
        if (t > a_) return {1, 1};
        return {0, 1};
      case Kind::HingeDown:
        if (t < a_) return {-1, -1};
        if (t > a_) return {0, 0};
        return {-1, 0};
      case Kind::DeadZone: {
        if (b_ == 0.0) return abs_dev(a_).subgrad_interval(t);
        double lo = a_ - b_, hi = a_ + b_;
        if (t < lo) return {-1, -1};
        if (t == lo) return {-1, 0};
        if (t < hi) return {0, 0};
        if (t == hi) return {0, 1};
        return {1, 1};
      }
      case Kind::IndicatorLeq:
        if (t > a_) fail(ErrorCode::OutOfDomain, "t outside dom of IndicatorLeq");
        if (t == a_) return {0, kInf};
        return {0, 0};
      case Kind::MaxAffine: {
        double v = value(t);
        double lo = kInf, hi = -kInf;
        for (const auto& [s, c] : pieces_) {
          if (s * t + c >= v - 1e-12 * std::max(1.0, std::abs(v))) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
          }
        }
        return {lo, hi};
      }
    }
    return {kNaN, kNaN};
  }

  bool nondecreasing() const {
    switch (kind_) {
      case Kind::Affine: return a_ >= 0;
      case Kind::HingeUp:
      case Kind::IndicatorLeq: return true;
      case Kind::HingeDown: return false;
      case Kind::AbsDev:
      case Kind::DeadZone: return false;
      case Kind::MaxAffine:
        return std::all_of(pieces_.begin(), pieces_.end(),
                           [](const auto& p) { return p.first >= 0; });
    }
    return false;
  }

  bool nonincreasing() const {
    switch (kind_) {
      case Kind::Affine: return a_ <= 0;
      case Kind::HingeDown: return true;
      case Kind::HingeUp: return false;
      case Kind::IndicatorLeq: return false;
      case Kind::AbsDev:
      case Kind::DeadZone: return false;
      case Kind::MaxAffine:
        return std::all_of(pieces_.begin(), pieces_.end(),
                           [](const auto& p) { return p.first <= 0; });
    }
    return false;
  }

  bool is_zero() const { return kind_ == Kind::Affine && a_ == 0.0 && b_ == 0.0; }

  /// Affine pieces (slope, intercept) whose max equals the function; empty
  /// for IndicatorLeq (not representable as a finite max).
  std::vector<std::pair<double, double>> affine_pieces() const {
    switch (kind_) {
      case Kind::Affine: return {{a_, b_}};
      case Kind::AbsDev: return {{-1, a_}, {1, -a_}};
      case Kind::HingeUp: return {{0, 0}, {1, -a_}};
      case Kind::HingeDown: return {{0, 0}, {-1, a_}};
      case Kind::DeadZone: return {{0, 0}, {1, -(a_ + b_)}, {-1, a_ - b_}};
      case Kind::MaxAffine: return pieces_;
      case Kind::IndicatorLeq: return {};
    }
    return {};
  }

 private:
  UnivariateConvex(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}

  Kind kind_;
  double a_;
  double b_;
  std::vector<std::pair<double, double>> pieces_;
};

/// Monotone decomposition phi = up + down with up nondecreasing and down
/// nonincreasing, both convex.
struct MonotoneSplit {
  UnivariateConvex up = UnivariateConvex::zero();
  UnivariateConvex down = UnivariateConvex::zero();
  bool has_split_point = false;
  double split_point = 0.0;  // leftmost minimizer when the minimum is attained

  bool has_down() const { return !down.is_zero(); }
};

/// Leftmost minimizer of a MaxAffine with mixed slopes: the largest
/// intersection point below which only negative-slope pieces dominate.
namespace detail {
inline double max_affine_leftmost_min(const UnivariateConvex& phi) {
  // Scan candidate breakpoints (pairwise intersections); the minimizer of a
  // piecewise affine convex function is at a breakpoint where the
  // subgradient interval first contains 0.
  const auto& pieces = phi.pieces();
  std::vector<double> candidates;
  for (size_t i = 0; i < pieces.size(); ++i)
    for (size_t j = i + 1; j < pieces.size(); ++j) {
      double da = pieces[i].first - pieces[j].first;
      if (da != 0.0) candidates.push_back((pieces[j].second - pieces[i].second) / da);
    }
  std::sort(candidates.begin(), candidates.end());
  for (double t : candidates) {
    Interval g = phi.subgrad_interval(t);
    if (g.lo <= 0.0 && g.hi >= 0.0) return t;
  }
  fail(ErrorCode::Unsupported, "MaxAffine has no attained minimum");
}
}  // namespace detail

/// Monotone decomposition: identity (phi, 0) / (0, phi) for monotone phi,
/// otherwise the split at the leftmost minimizer z*:
///   up(t)   = phi(z*) for t <= z*, phi(t) for t > z*
///   down(t) = phi(t) - phi(z*) for t <= z*, 0 for t > z*.
inline MonotoneSplit monotone_split(const UnivariateConvex& phi) {
  using K = UnivariateConvex::Kind;
  if (phi.nondecreasing()) return {phi, UnivariateConvex::zero()};
  if (phi.nonincreasing()) return {UnivariateConvex::zero(), phi};

  switch (phi.kind()) {
    case K::AbsDev:
      return {UnivariateConvex::hinge_up(phi.a()), UnivariateConvex::hinge_down(phi.a()), true,
              phi.a()};
    case K::DeadZone:
      return {UnivariateConvex::hinge_up(phi.a() + phi.b()),
              UnivariateConvex::hinge_down(phi.a() - phi.b()), true, phi.a() - phi.b()};
    case K::MaxAffine: {
      double zs = detail::max_affine_leftmost_min(phi);
      double fmin = phi.value(zs);
      std::vector<std::pair<double, double>> up_pieces = {{0.0, fmin}};
      std::vector<std::pair<double, double>> down_pieces = {{0.0, 0.0}};
      for (const auto& [s, c] : phi.pieces()) {
        if (s > 0) up_pieces.emplace_back(s, c);
        if (s < 0) down_pieces.emplace_back(s, c - fmin);
      }
      return {UnivariateConvex::max_affine(std::move(up_pieces)),
              UnivariateConvex::max_affine(std::move(down_pieces)), true, zs};
    }
    default:
      fail(ErrorCode::Unsupported, "no monotone split for this kind");
  }
}

/// True iff the subdifferential of phi at t equals the Minkowski sum of the
/// split parts' subdifferentials, within 1e-12 on finite endpoints.
inline bool subgrad_additivity_check(const UnivariateConvex& phi, double t) {
  if (!phi.domain().contains(t) || t == phi.domain().hi)
    fail(ErrorCode::OutOfDomain, "t not in int(dom phi)");
  MonotoneSplit sp = monotone_split(phi);
  Interval sum = sp.up.subgrad_interval(t) + sp.down.subgrad_interval(t);
  return interval_eq(phi.subgrad_interval(t), sum, 1e-12);
}

}  // namespace proxadc
