#pragma once

#include "proxadc/adc.hpp"
#include "proxadc/qp.hpp"
#include "proxadc/rng.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace proxadc {

/// Optimal-value function of a convex QP parameterized by x:
///   f(x) = min_y { (c + C x)'y + 1/2 y'Q y : A x + B y <= b },  Q PD.
struct QpValueFunction {
  Vec c;   // R^d
  Mat C;   // d x n
  Mat Q;   // d x d, positive definite
  Mat A;   // l x n
  Mat B;   // l x d
  Vec b;   // R^l

  int n() const { return static_cast<int>(C.cols()); }
  int d() const { return static_cast<int>(C.rows()); }
  int l() const { return static_cast<int>(A.rows()); }

  void validate() const {
    require(c.size() == d(), ErrorCode::DimensionMismatch, "c/C dims");
    require(Q.rows() == d() && Q.cols() == d(), ErrorCode::DimensionMismatch, "Q dims");
    require(A.cols() == n() && B.rows() == l() && B.cols() == d() && b.size() == l(),
            ErrorCode::DimensionMismatch, "A/B/b dims");
    Eigen::LLT<Mat> llt(Q);
    require(llt.info() == Eigen::Success, ErrorCode::NotPsd, "Q must be positive definite");
  }
};

struct InnerSolve {
  double value = 0.0;
  Vec y;
  Vec duals;
};

/// f(x) with the inner minimizer and row duals.
inline InnerSolve value_full(const QpValueFunction& F, const Vec& x, double tol = 1e-9) {
  qp::QpProblem p = qp::QpProblem::unconstrained(F.Q, F.c + F.C * x);
  p.G = F.B;
  p.h = F.b - F.A * x;
  qp::QpSolution s = qp::solve(p, tol);
  if (s.status == qp::Status::Infeasible)
    fail(ErrorCode::InnerInfeasible, "inner QP infeasible at this x");
  if (s.status != qp::Status::Optimal)
    fail(ErrorCode::NumericalBreakdown, "inner QP did not converge");
  return {qp::objective(p, s.x), s.x, s.duals_lin};
}

inline double value(const QpValueFunction& F, const Vec& x, double tol = 1e-9) {
  return value_full(F, x, tol).value;
}

/// Decreasing approximation parameters gamma_k = gamma0 / (k + k_tilde)^rho
/// and the Lipschitz modulus L of the lifted function in its first argument
/// over the working box.
struct PmeSchedule {
  double gamma0 = 1.0;
  double rho = 1.5;
  int k_tilde = 1;
  double lipschitz_L = 0.0;

  double gamma(int k) const { return gamma0 / std::pow(static_cast<double>(k + k_tilde), rho); }

  void validate() const {
    require(gamma0 > 0 && rho > 0 && k_tilde >= 1, ErrorCode::InvalidArgument,
            "gamma0 > 0, rho > 0, k_tilde >= 1 required");
    require(lipschitz_L >= 0, ErrorCode::InvalidArgument, "L must be nonnegative");
  }
};

/// Partial Moreau envelope family of a QP value function:
///   f^k(x) = min_{z,y} { (c + C x)'y + 1/2 y'Q y + ||z - x||^2/(2 gamma_k)
///                        : A z + B y <= b }
/// with g^k(x) = ||x||^2/(2 gamma_k) smooth and h^k = g^k - f^k. One joint QP
/// per evaluation supplies the value, the Danskin subgradient of h^k
/// (z*/gamma - C'y*), and the diagnostics.
class PmeFamily final : public AdcFamily {
 public:
  PmeFamily(QpValueFunction F, PmeSchedule sched, std::string name, double qp_tol = 1e-9)
      : F_(std::move(F)), sched_(sched), name_(std::move(name)), qp_tol_(qp_tol) {
    F_.validate();
    sched_.validate();
  }

  int dim() const override { return F_.n(); }
  const std::string& name() const override { return name_; }
  double ell(int k) const override { return 1.0 / sched_.gamma(k); }
  double alpha_hat(int k) const override {
    double L = sched_.lipschitz_L;
    return 0.5 * L * L * (sched_.gamma(k) - sched_.gamma(k + 1));
  }
  double alpha_tail(int k) const override {
    double L = sched_.lipschitz_L;
    return 0.5 * L * L * sched_.gamma(k);
  }
  double gamma(int k) const override { return sched_.gamma(k); }
  double true_value(const Vec& x) const override { return value(F_, x, qp_tol_); }

  bool g_quadratic(int k, QuadForm* out) const override {
    out->P = Mat::Identity(F_.n(), F_.n()) / sched_.gamma(k);
    out->q = Vec::Zero(F_.n());
    out->r = 0.0;
    return true;
  }

  const QpValueFunction& value_function() const { return F_; }
  const PmeSchedule& schedule() const { return sched_; }

 protected:
  DcEval eval_impl(int k, const Vec& x) const override {
    const int n = F_.n(), d = F_.d();
    const double g = sched_.gamma(k);
    Mat P = Mat::Zero(n + d, n + d);
    P.topLeftCorner(n, n) = Mat::Identity(n, n) / g;
    P.bottomRightCorner(d, d) = F_.Q;
    Vec q(n + d);
    q.head(n) = -x / g;
    q.tail(d) = F_.c + F_.C * x;
    qp::QpProblem joint = qp::QpProblem::unconstrained(std::move(P), std::move(q));
    joint.G.resize(F_.l(), n + d);
    joint.G.leftCols(n) = F_.A;
    joint.G.rightCols(d) = F_.B;
    joint.h = F_.b;

    qp::QpSolution s = qp::solve(joint, qp_tol_);
    if (s.status == qp::Status::Infeasible)
      fail(ErrorCode::InnerInfeasible, "joint PME QP infeasible");
    if (s.status != qp::Status::Optimal)
      fail(ErrorCode::NumericalBreakdown, "joint PME QP did not converge");

    Vec z_star = s.x.head(n);
    Vec y_star = s.x.tail(d);
    DcEval e;
    e.g_val = 0.5 * x.squaredNorm() / g;
    e.g_grad = x / g;
    e.f = qp::objective(joint, s.x) + e.g_val;
    e.h_val = e.g_val - e.f;
    e.h_grad = z_star / g - F_.C.transpose() * y_star;
    return e;
  }

 private:
  QpValueFunction F_;
  PmeSchedule sched_;
  std::string name_;
  double qp_tol_;
};

inline std::shared_ptr<PmeFamily> pme_family(QpValueFunction F, PmeSchedule sched,
                                             std::string name = "pme", double qp_tol = 1e-9) {
  return std::make_shared<PmeFamily>(std::move(F), sched, std::move(name), qp_tol);
}

/// Sampled bound on the Lipschitz modulus of the lifted function in z over
/// the box: L = safety * max_x ||A' mu*(x)|| with mu* the inner-QP duals at
/// z = x. Samples are uniform draws plus the box corners when affordable.
inline double estimate_lipschitz(const QpValueFunction& F, const Vec& lo, const Vec& hi,
                                 int n_samples = 256, double safety = 1.1,
                                 std::uint64_t seed = 0) {
  F.validate();
  require(lo.size() == F.n() && hi.size() == F.n(), ErrorCode::DimensionMismatch, "box dims");
  require(n_samples >= 1, ErrorCode::InvalidArgument, "n_samples >= 1");
  if (F.A.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  Rng rng(seed);
  double best = 0.0;
  auto probe = [&](const Vec& x) {
    InnerSolve s = value_full(F, x);
    best = std::max(best, (F.A.transpose() * s.duals).norm());
  };
  for (int i = 0; i < n_samples; ++i) {
    Vec x(F.n());
    for (int j = 0; j < F.n(); ++j) x(j) = rng.uniform(lo(j), hi(j));
    probe(x);
  }
  if (F.n() <= 12) {
    for (unsigned mask = 0; mask < (1u << F.n()); ++mask) {
      Vec x(F.n());
      for (int j = 0; j < F.n(); ++j) x(j) = (mask >> j) & 1u ? hi(j) : lo(j);
      probe(x);
    }
  }
  return safety * best;
}

}  // namespace proxadc
