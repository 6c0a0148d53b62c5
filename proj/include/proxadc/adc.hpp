#pragma once

#include "proxadc/common.hpp"
#include "proxadc/convex1d.hpp"

#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>

namespace proxadc {

/// One coherent oracle answer at (k, x): the DC value together with both
/// convex parts and one subgradient of each. Families whose parts come from
/// an optimization problem (the partial Moreau envelope) fill everything from
/// a single solve so the parts never disagree.
struct DcEval {
  double f = 0.0;      // g - h
  double g_val = 0.0;
  Vec g_grad;          // element of the subdifferential of g at x
  double h_val = 0.0;
  Vec h_grad;          // element of the subdifferential of h at x
  bool has_grads = true;  // false where the oracle refuses gradients
};

/// Explicit quadratic form 1/2 x'P x + q'x + r.
struct QuadForm {
  Mat P;
  Vec q;
  double r = 0.0;

  double value(const Vec& x) const { return 0.5 * x.dot(P * x) + q.dot(x) + r; }
};

/// A k-indexed family of DC pairs f^k = g^k - h^k approaching a target
/// function, with the schedule constants the prox-ADC method consumes:
/// ell(k) bounds the subdifferential Lipschitz modulus of g^k or h^k,
/// alpha_hat(k) bounds sup [f^{k+1} - f^k]_+, and alpha_tail(k) is the closed
/// form of the remaining sum.
class AdcFamily {
 public:
  virtual ~AdcFamily() = default;

  virtual int dim() const = 0;
  virtual const std::string& name() const = 0;
  virtual double ell(int k) const = 0;
  virtual double alpha_hat(int k) const = 0;
  virtual double alpha_tail(int k) const = 0;

  /// Approximation parameter when the family has one (NaN otherwise).
  virtual double gamma(int /*k*/) const { return kNaN; }

  /// Value of the limit function when available in closed form or by an
  /// exact auxiliary solve (NaN when unknown).
  virtual double true_value(const Vec& /*x*/) const { return kNaN; }

  /// When g^k is an explicit quadratic, report it so masters can carry the
  /// curvature exactly instead of through cuts.
  virtual bool g_quadratic(int /*k*/, QuadForm* /*out*/) const { return false; }

  /// Cached coherent evaluation; the cache key is the exact bit pattern of
  /// (k, x) and insertion is mutex-guarded for concurrent callers.
  DcEval eval(int k, const Vec& x) const {
    std::string key(sizeof(int) + sizeof(double) * x.size(), '\0');
    std::memcpy(key.data(), &k, sizeof(int));
    std::memcpy(key.data() + sizeof(int), x.data(), sizeof(double) * x.size());
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    DcEval r = eval_impl(k, x);
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      if (cache_.size() > 400000) cache_.clear();
      cache_.emplace(std::move(key), r);
    }
    return r;
  }

  double f_value(int k, const Vec& x) const { return eval(k, x).f; }

 protected:
  virtual DcEval eval_impl(int k, const Vec& x) const = 0;

 private:
  mutable std::unordered_map<std::string, DcEval> cache_;
  mutable std::mutex cache_mutex_;
};

using FamilyPtr = std::shared_ptr<const AdcFamily>;

/// Convex upper approximation of f^k at an anchor y:
///   upper(x) = g^k(x) - h^k(y) - a'(x - y) + tail,  a in dh^k(y).
struct UpperModel {
  FamilyPtr fam;
  int k = 0;
  Vec anchor;
  Vec a;
  double h_at_anchor = 0.0;
  double tail = 0.0;  // sum over k' >= k of alpha_hat; 0 for objective rows

  double value(const Vec& x) const {
    return fam->eval(k, x).g_val - h_at_anchor - a.dot(x - anchor) + tail;
  }
  double value_from(const DcEval& e, const Vec& x) const {
    return e.g_val - h_at_anchor - a.dot(x - anchor) + tail;
  }
  Vec subgrad(const Vec& x) const {
    DcEval e = fam->eval(k, x);
    require(e.has_grads, ErrorCode::AtOrigin, "gradient refused at this point");
    return e.g_grad - a;
  }

  bool quadratic(QuadForm* out) const {
    if (!fam->g_quadratic(k, out)) return false;
    out->q -= a;
    out->r += -h_at_anchor + a.dot(anchor) + tail;
    return true;
  }
};

/// Concave lower approximation of f^k at an anchor y:
///   lower(x) = g^k(y) + b'(x - y) - h^k(x),  b in dg^k(y).
struct LowerModel {
  FamilyPtr fam;
  int k = 0;
  Vec anchor;
  Vec b;
  double g_at_anchor = 0.0;

  double value(const Vec& x) const {
    return g_at_anchor + b.dot(x - anchor) - fam->eval(k, x).h_val;
  }
  double value_from(const DcEval& e, const Vec& x) const {
    return g_at_anchor + b.dot(x - anchor) - e.h_val;
  }
  Vec supergrad(const Vec& x) const {
    DcEval e = fam->eval(k, x);
    require(e.has_grads, ErrorCode::AtOrigin, "gradient refused at this point");
    return b - e.h_grad;
  }
};

inline UpperModel build_upper(FamilyPtr fam, int k, const Vec& y) {
  DcEval e = fam->eval(k, y);
  require(e.has_grads, ErrorCode::AtOrigin, "cannot anchor a model where gradients are refused");
  return {fam, k, y, e.h_grad, e.h_val, fam->alpha_tail(k)};
}

inline LowerModel build_lower(FamilyPtr fam, int k, const Vec& y) {
  DcEval e = fam->eval(k, y);
  require(e.has_grads, ErrorCode::AtOrigin, "cannot anchor a model where gradients are refused");
  return {fam, k, y, e.g_grad, e.g_val};
}

/// Convex majorization of phi(f^k(.)) at the shared anchor:
///   value(x) = phi_up(upper(x)) + phi_down(lower(x)).
/// Subgradients chain one element of each univariate subdifferential with
/// the model (super)gradients; the minimal-norm element is used, which keeps
/// the choice deterministic.
struct CompositeSurrogate {
  MonotoneSplit split;
  UpperModel up;
  LowerModel low;

  double value(const Vec& x) const {
    DcEval e = up.fam->eval(up.k, x);
    return value_from(e, x);
  }

  double value_from(const DcEval& e, const Vec& x) const {
    double uval = up.value_from(e, x);
    double v = split.up.value(uval);
    if (split.has_down()) v += split.down.value(low.value_from(e, x));
    return v;
  }

  Vec subgrad(const Vec& x) const {
    DcEval e = up.fam->eval(up.k, x);
    double uval = up.value_from(e, x);
    if (!split.up.domain().contains(uval))
      fail(ErrorCode::OutOfDomain, "upper model value outside dom(phi_up)");
    double y1 = split.up.subgrad_interval(uval).min_norm_element();
    Vec s = y1 * (e.g_grad - up.a);
    if (split.has_down()) {
      double lval = low.value_from(e, x);
      double y2 = split.down.subgrad_interval(lval).min_norm_element();
      s += y2 * (low.b - e.h_grad);
    }
    return s;
  }
};

inline CompositeSurrogate composite_surrogate(const MonotoneSplit& split, UpperModel up,
                                              LowerModel low) {
  return {split, std::move(up), std::move(low)};
}

/// Family defined by callables; used for hand-built approximating sequences
/// and for re-indexing wrappers.
class FunctionFamily final : public AdcFamily {
 public:
  struct Config {
    int dim = 0;
    std::string name;
    std::function<DcEval(int, const Vec&)> eval;
    std::function<double(int)> ell;
    std::function<double(int)> alpha_hat;
    std::function<double(int)> alpha_tail;
    std::function<double(int)> gamma;                 // optional
    std::function<double(const Vec&)> true_value;     // optional
    std::function<bool(int, QuadForm*)> g_quadratic;  // optional
  };

  explicit FunctionFamily(Config cfg) : cfg_(std::move(cfg)) {}

  int dim() const override { return cfg_.dim; }
  const std::string& name() const override { return cfg_.name; }
  double ell(int k) const override { return cfg_.ell(k); }
  double alpha_hat(int k) const override { return cfg_.alpha_hat(k); }
  double alpha_tail(int k) const override { return cfg_.alpha_tail(k); }
  double gamma(int k) const override { return cfg_.gamma ? cfg_.gamma(k) : kNaN; }
  double true_value(const Vec& x) const override {
    return cfg_.true_value ? cfg_.true_value(x) : kNaN;
  }
  bool g_quadratic(int k, QuadForm* out) const override {
    return cfg_.g_quadratic ? cfg_.g_quadratic(k, out) : false;
  }

 protected:
  DcEval eval_impl(int k, const Vec& x) const override { return cfg_.eval(k, x); }

 private:
  Config cfg_;
};

/// Family frozen at a fixed level: every index evaluates the base family at
/// `level`, the alpha sequence vanishes, and the limit is the level itself.
/// This is how the feasibility phase reuses the solver on a fixed DC problem.
inline FamilyPtr freeze_family(FamilyPtr base, int level) {
  FunctionFamily::Config cfg;
  cfg.dim = base->dim();
  cfg.name = base->name() + "@frozen" + std::to_string(level);
  cfg.eval = [base, level](int, const Vec& x) { return base->eval(level, x); };
  cfg.ell = [base, level](int) { return base->ell(level); };
  cfg.alpha_hat = [](int) { return 0.0; };
  cfg.alpha_tail = [](int) { return 0.0; };
  cfg.gamma = [base, level](int) { return base->gamma(level); };
  cfg.true_value = [base, level](const Vec& x) { return base->eval(level, x).f; };
  cfg.g_quadratic = [base, level](int, QuadForm* out) { return base->g_quadratic(level, out); };
  return std::make_shared<FunctionFamily>(std::move(cfg));
}

/// Affine image (f - shift)/scale - offset of a family, preserving the DC
/// structure: g and h scale by 1/scale and the constants fold into g.
inline FamilyPtr scale_shift_family(FamilyPtr base, double scale, double shift, double offset,
                                    const std::string& name) {
  require(scale > 0, ErrorCode::InvalidArgument, "scale must be positive");
  const double c0 = shift / scale + offset;
  FunctionFamily::Config cfg;
  cfg.dim = base->dim();
  cfg.name = name;
  cfg.eval = [base, scale, c0](int k, const Vec& x) {
    DcEval e = base->eval(k, x);
    DcEval r;
    r.g_val = e.g_val / scale - c0;
    r.g_grad = e.g_grad / scale;
    r.h_val = e.h_val / scale;
    r.h_grad = e.h_grad / scale;
    r.f = r.g_val - r.h_val;
    return r;
  };
  cfg.ell = [base, scale](int k) { return base->ell(k) / scale; };
  cfg.alpha_hat = [base, scale](int k) { return base->alpha_hat(k) / scale; };
  cfg.alpha_tail = [base, scale](int k) { return base->alpha_tail(k) / scale; };
  cfg.gamma = [base](int k) { return base->gamma(k); };
  cfg.true_value = [base, scale, c0](const Vec& x) {
    double v = base->true_value(x);
    return std::isnan(v) ? kNaN : v / scale - c0;
  };
  cfg.g_quadratic = [base, scale, c0](int k, QuadForm* out) {
    if (!base->g_quadratic(k, out)) return false;
    out->P /= scale;
    out->q /= scale;
    out->r = out->r / scale - c0;
    return true;
  };
  return std::make_shared<FunctionFamily>(std::move(cfg));
}

/// Negation (shift - f)/scale - offset: the DC roles of g and h swap.
inline FamilyPtr negate_scale_family(FamilyPtr base, double scale, double shift, double offset,
                                     const std::string& name) {
  require(scale > 0, ErrorCode::InvalidArgument, "scale must be positive");
  const double c0 = shift / scale - offset;
  FunctionFamily::Config cfg;
  cfg.dim = base->dim();
  cfg.name = name;
  cfg.eval = [base, scale, c0](int k, const Vec& x) {
    DcEval e = base->eval(k, x);
    DcEval r;
    r.g_val = e.h_val / scale + c0;
    r.g_grad = e.h_grad / scale;
    r.h_val = e.g_val / scale;
    r.h_grad = e.g_grad / scale;
    r.f = r.g_val - r.h_val;
    return r;
  };
  cfg.ell = [base, scale](int k) { return base->ell(k) / scale; };
  cfg.alpha_hat = [base, scale](int k) { return base->alpha_hat(k) / scale; };
  cfg.alpha_tail = [base, scale](int k) { return base->alpha_tail(k) / scale; };
  cfg.gamma = [base](int k) { return base->gamma(k); };
  cfg.true_value = [base, scale, c0](const Vec& x) {
    double v = base->true_value(x);
    return std::isnan(v) ? kNaN : -v / scale + c0;
  };
  return std::make_shared<FunctionFamily>(std::move(cfg));
}

}  // namespace proxadc
