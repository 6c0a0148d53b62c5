#pragma once

#include "proxadc/adc.hpp"
#include "proxadc/rng.hpp"
#include "proxadc/stats.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace proxadc {

/// Payoff c(x, Z) = exp(x'Z) with Z ~ Normal(mu, Sigma), so that
/// c(x, Z) ~ Lognormal(x'mu, sqrt(x'Sigma x)). VaR and CVaR then have closed
/// forms through the standard-normal quantile q and CDF Phi.
struct LogNormalModel {
  Vec mu;
  Mat Sigma;
  double alpha = 0.95;
  Vec box_lo;
  Vec box_hi;

  int n() const { return static_cast<int>(mu.size()); }

  void validate() const {
    require(Sigma.rows() == n() && Sigma.cols() == n(), ErrorCode::DimensionMismatch,
            "Sigma dims");
    require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument, "alpha in (0,1)");
    require(box_lo.size() == n() && box_hi.size() == n(), ErrorCode::DimensionMismatch,
            "box dims");
    Eigen::LLT<Mat> llt(Sigma);
    require(llt.info() == Eigen::Success, ErrorCode::NotPsd, "Sigma must be positive definite");
  }
};

/// VaR_level[c(x,Z)] = exp(x'mu + sqrt(x'Sigma x) q_level).
inline double var_value(const LogNormalModel& M, const Vec& x, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level in (0,1)");
  double sig = std::sqrt(std::max(0.0, x.dot(M.Sigma * x)));
  return std::exp(x.dot(M.mu) + sig * normal_quantile(level));
}

/// CVaR_level[c(x,Z)] = exp(x'mu + x'Sigma x/2) Phi(sqrt(x'Sigma x) - q_level)
///                      / (1 - level).
inline double cvar_value(const LogNormalModel& M, const Vec& x, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level in (0,1)");
  double s2 = std::max(0.0, x.dot(M.Sigma * x));
  double sig = std::sqrt(s2);
  return std::exp(x.dot(M.mu) + 0.5 * s2) * normal_cdf(sig - normal_quantile(level)) /
         (1.0 - level);
}

/// Exact gradient of the CVaR closed form; the norm term is nonsmooth at the
/// origin, which the oracle refuses.
inline Vec cvar_grad(const LogNormalModel& M, const Vec& x, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level in (0,1)");
  if (x.norm() <= 1e-12) fail(ErrorCode::AtOrigin, "CVaR gradient undefined at the origin");
  Vec Sx = M.Sigma * x;
  double s2 = x.dot(Sx);
  double sig = std::sqrt(s2);
  double q = normal_quantile(level);
  double e = std::exp(x.dot(M.mu) + 0.5 * s2) / (1.0 - level);
  return e * (normal_cdf(sig - q) * (M.mu + Sx) + normal_pdf(sig - q) * Sx / sig);
}

/// Paper bound on |d/dgamma| of the running VaR average:
///   C = exp(max{q_a^2, q_{a/2}^2}/2)
///       * sup_box exp(x'mu + sqrt(x'Sigma x) q_a) sqrt(2 pi x'Sigma x),
/// the sup approximated by sampling plus corners with a safety factor.
inline double c_p_bound(const LogNormalModel& M, int n_samples = 256, double safety = 1.1,
                        std::uint64_t seed = 0) {
  M.validate();
  double q = normal_quantile(M.alpha);
  double qh = normal_quantile(0.5 * M.alpha);
  double front = std::exp(0.5 * std::max(q * q, qh * qh));
  Rng rng(seed);
  double sup = 0.0;
  auto probe = [&](const Vec& x) {
    double s2 = std::max(0.0, x.dot(M.Sigma * x));
    double v = std::exp(x.dot(M.mu) + std::sqrt(s2) * q) * std::sqrt(2.0 * M_PI * s2);
    sup = std::max(sup, v);
  };
  for (int i = 0; i < n_samples; ++i) {
    Vec x(M.n());
    for (int j = 0; j < M.n(); ++j) x(j) = rng.uniform(M.box_lo(j), M.box_hi(j));
    probe(x);
  }
  if (M.n() <= 12) {
    for (unsigned mask = 0; mask < (1u << M.n()); ++mask) {
      Vec x(M.n());
      for (int j = 0; j < M.n(); ++j) x(j) = (mask >> j) & 1u ? M.box_hi(j) : M.box_lo(j);
      probe(x);
    }
  }
  return safety * front * sup;
}

/// CVaR-difference approximation of VaR_alpha with index offset k_tilde:
/// at stage k, with K = k + k_tilde,
///   g^k = [K(1-alpha)+1] CVaR_{alpha-1/K},   h^k = K(1-alpha) CVaR_alpha,
/// so that VaR_{alpha-1/K} <= g^k - h^k <= VaR_alpha, increasing to VaR_alpha.
class VarAdcFamily final : public AdcFamily {
 public:
  VarAdcFamily(LogNormalModel M, int k_tilde, std::string name)
      : M_(std::move(M)), k_tilde_(k_tilde), name_(std::move(name)) {
    M_.validate();
    if (static_cast<double>(k_tilde_) <= 1.0 / M_.alpha)
      fail(ErrorCode::BadOffset, "need k_tilde > 1/alpha");
    c_p_ = c_p_bound(M_);
    hbar_ = hessian_bound();
  }

  int dim() const override { return M_.n(); }
  const std::string& name() const override { return name_; }
  double gamma(int k) const override { return 1.0 / static_cast<double>(k + k_tilde_); }
  double ell(int k) const override {
    return static_cast<double>(k + k_tilde_) * (1.0 - M_.alpha) * hbar_;
  }
  double alpha_hat(int k) const override { return c_p_ * (gamma(k) - gamma(k + 1)); }
  double alpha_tail(int k) const override { return c_p_ * gamma(k); }
  double true_value(const Vec& x) const override { return var_value(M_, x, M_.alpha); }

  double c_p() const { return c_p_; }
  const LogNormalModel& model() const { return M_; }
  int k_tilde() const { return k_tilde_; }

 protected:
  DcEval eval_impl(int k, const Vec& x) const override {
    const double K = static_cast<double>(k + k_tilde_);
    const double a = M_.alpha;
    const double w_g = K * (1.0 - a) + 1.0;
    const double w_h = K * (1.0 - a);
    DcEval e;
    e.g_val = w_g * cvar_value(M_, x, a - 1.0 / K);
    e.h_val = w_h * cvar_value(M_, x, a);
    e.f = e.g_val - e.h_val;
    if (x.norm() <= 1e-12) {
      e.has_grads = false;
      e.g_grad = Vec::Constant(M_.n(), kNaN);
      e.h_grad = Vec::Constant(M_.n(), kNaN);
    } else {
      e.g_grad = w_g * cvar_grad(M_, x, a - 1.0 / K);
      e.h_grad = w_h * cvar_grad(M_, x, a);
    }
    return e;
  }

 private:
  // Sampled spectral-norm bound of the CVaR_alpha Hessian over the box, by
  // central differences of the exact gradient; 1.5 safety.
  double hessian_bound() const {
    Rng rng(1);
    const int n = M_.n();
    const double h = 1e-5;
    double best = 0.0;
    int used = 0;
    for (int s = 0; s < 64 || used == 0; ++s) {
      if (s > 256) fail(ErrorCode::NumericalBreakdown, "no valid Hessian sample in box");
      Vec x(n);
      for (int j = 0; j < n; ++j) x(j) = rng.uniform(M_.box_lo(j), M_.box_hi(j));
      if (x.norm() < 1e-3) continue;
      Mat H(n, n);
      for (int j = 0; j < n; ++j) {
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        H.col(j) = (cvar_grad(M_, xp, M_.alpha) - cvar_grad(M_, xm, M_.alpha)) / (2 * h);
      }
      Mat Hs = 0.5 * (H + H.transpose());
      best = std::max(best, Hs.cwiseAbs().rowwise().sum().maxCoeff());
      ++used;
    }
    return 1.5 * best;
  }

  LogNormalModel M_;
  int k_tilde_;
  std::string name_;
  double c_p_ = 0.0;
  double hbar_ = 0.0;
};

inline std::shared_ptr<VarAdcFamily> var_adc_family(LogNormalModel M, int k_tilde,
                                                    std::string name = "var_adc") {
  return std::make_shared<VarAdcFamily>(std::move(M), k_tilde, std::move(name));
}

}  // namespace proxadc
