#pragma once

#include "proxadc/common.hpp"

#include <cmath>
#include <tuple>
#include <vector>

namespace proxadc {
namespace qp {

/// Convex quadratic inequality 1/2 x'P x + q'x + r <= 0 with P symmetric PSD.
struct QuadConstraint {
  Mat P;
  Vec q;
  double r = 0.0;
};

/// Dense convex QP/QCQP
///   minimize 1/2 x'P x + q'x
///   s.t.     G x <= h, quadratic rows, A_eq x = b_eq.
struct QpProblem {
  Mat P;
  Vec q;
  Mat G;  // 0 x n when absent
  Vec h;
  std::vector<QuadConstraint> quad;
  Mat A_eq;  // 0 x n when absent
  Vec b_eq;

  int n() const { return static_cast<int>(q.size()); }

  static QpProblem unconstrained(Mat P, Vec q) {
    QpProblem p;
    p.P = std::move(P);
    p.q = std::move(q);
    p.G.resize(0, p.q.size());
    p.h.resize(0);
    p.A_eq.resize(0, p.q.size());
    p.b_eq.resize(0);
    return p;
  }

  void add_lin(const Vec& g, double rhs) {
    G.conservativeResize(G.rows() + 1, n());
    G.row(G.rows() - 1) = g.transpose();
    h.conservativeResize(h.size() + 1);
    h(h.size() - 1) = rhs;
  }

  void validate() const;
};

enum class Status { Optimal, Infeasible, MaxIter };

struct QpSolution {
  Vec x;
  Vec duals_lin;   // >= 0, one per row of G
  Vec duals_quad;  // >= 0, one per quadratic row
  Vec duals_eq;
  Status status = Status::MaxIter;
  double kkt_residual = kInf;
  int iterations = 0;
};

namespace detail {

inline void check_psd(const Mat& M, const char* name) {
  if (M.rows() != M.cols()) fail(ErrorCode::DimensionMismatch, std::string(name) + " not square");
  double sym = (M - M.transpose()).cwiseAbs().maxCoeff();
  double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if (sym > 1e-9 * scale) fail(ErrorCode::NotPsd, std::string(name) + " not symmetric");
  Mat R = M + 1e-10 * scale * Mat::Identity(M.rows(), M.cols());
  Eigen::LLT<Mat> llt(R);
  if (llt.info() != Eigen::Success) fail(ErrorCode::NotPsd, std::string(name) + " not PSD");
}

struct Work {
  // Constraint values c(x) (<= 0 feasible) and Jacobian rows at x.
  Vec c;
  Mat J;
};

inline void eval_constraints(const QpProblem& p, const Vec& x, Work& w) {
  const int ml = static_cast<int>(p.G.rows());
  const int mq = static_cast<int>(p.quad.size());
  w.c.resize(ml + mq);
  w.J.resize(ml + mq, p.n());
  if (ml > 0) {
    w.c.head(ml) = p.G * x - p.h;
    w.J.topRows(ml) = p.G;
  }
  for (int j = 0; j < mq; ++j) {
    const auto& qc = p.quad[j];
    Vec Px = qc.P * x;
    w.c(ml + j) = 0.5 * x.dot(Px) + qc.q.dot(x) + qc.r;
    w.J.row(ml + j) = (Px + qc.q).transpose();
  }
}

}  // namespace detail

inline void QpProblem::validate() const {
  const int nv = n();
  require(P.rows() == nv && P.cols() == nv, ErrorCode::DimensionMismatch, "P dims");
  require(G.cols() == nv || G.rows() == 0, ErrorCode::DimensionMismatch, "G dims");
  require(G.rows() == h.size(), ErrorCode::DimensionMismatch, "G/h rows");
  require(A_eq.cols() == nv || A_eq.rows() == 0, ErrorCode::DimensionMismatch, "A_eq dims");
  require(A_eq.rows() == b_eq.size(), ErrorCode::DimensionMismatch, "A_eq/b_eq rows");
  detail::check_psd(P, "P");
  for (const auto& qc : quad) {
    require(qc.P.rows() == nv && qc.q.size() == nv, ErrorCode::DimensionMismatch, "quad row dims");
    detail::check_psd(qc.P, "quad P_i");
  }
}

/// Primal-dual interior point (Mehrotra predictor-corrector) for dense convex
/// QP/QCQP. Quadratic rows keep their exact Hessian in the Newton system.
/// Rows are equilibrated internally (duals are reported in the original
/// scaling). An optional primal hint seeds the iteration; callers that know
/// a feasible point should pass it. Deterministic: identical inputs give
/// bitwise-identical outputs.
inline QpSolution solve(const QpProblem& prob_in, double tol = 1e-8,
                        const Vec* x_hint = nullptr) {
  prob_in.validate();
  require(tol > 0, ErrorCode::InvalidArgument, "tol must be positive");

  // Row equilibration: divide every inequality row by its own magnitude so
  // slacks and duals live on comparable scales.
  QpProblem prob = prob_in;
  const int ml = static_cast<int>(prob.G.rows());
  const int mq = static_cast<int>(prob.quad.size());
  Vec row_scale = Vec::Ones(ml + mq);
  for (int i = 0; i < ml; ++i) {
    double s = std::max(prob.G.row(i).cwiseAbs().maxCoeff(), std::abs(prob.h(i)));
    if (s > 1.0) {
      row_scale(i) = s;
      prob.G.row(i) /= s;
      prob.h(i) /= s;
    }
  }
  for (int j = 0; j < mq; ++j) {
    auto& qc = prob.quad[j];
    double s = std::max({qc.P.cwiseAbs().maxCoeff(), qc.q.cwiseAbs().maxCoeff(),
                         std::abs(qc.r)});
    if (s > 1.0) {
      row_scale(ml + j) = s;
      qc.P /= s;
      qc.q /= s;
      qc.r /= s;
    }
  }

  const int n = prob.n();
  const int m = ml + mq;
  const int me = static_cast<int>(prob.A_eq.rows());
  const double reg = 1e-10;

  QpSolution sol;
  sol.duals_lin = Vec::Zero(ml);
  sol.duals_quad = Vec::Zero(mq);
  sol.duals_eq = Vec::Zero(me);

  // Residual of the ORIGINAL problem: primal violations un-scale by the row
  // factors; stationarity and complementarity are scale-invariant.
  auto kkt_residual = [&](const Vec& x, const Vec& z, const Vec& y, const detail::Work& w) {
    Vec rd = prob.P * x + prob.q;
    if (m > 0) rd += w.J.transpose() * z;
    if (me > 0) rd += prob.A_eq.transpose() * y;
    double res = rd.lpNorm<Eigen::Infinity>();
    for (int i = 0; i < m; ++i) {
      res = std::max(res, w.c(i) * row_scale(i));    // primal feasibility
      res = std::max(res, std::abs(z(i) * w.c(i)));  // complementarity
      res = std::max(res, -z(i));                    // dual sign
    }
    if (me > 0) res = std::max(res, (prob.A_eq * x - prob.b_eq).lpNorm<Eigen::Infinity>());
    return res;
  };

  // Equality-only / unconstrained: one regularized KKT solve.
  if (m == 0) {
    Mat K(n + me, n + me);
    K.setZero();
    K.topLeftCorner(n, n) = prob.P + reg * Mat::Identity(n, n);
    if (me > 0) {
      K.topRightCorner(n, me) = prob.A_eq.transpose();
      K.bottomLeftCorner(me, n) = prob.A_eq;
      K.bottomRightCorner(me, me) = -reg * Mat::Identity(me, me);
    }
    Vec rhs(n + me);
    rhs.head(n) = -prob.q;
    if (me > 0) rhs.tail(me) = prob.b_eq;
    Vec sol_vec = Eigen::PartialPivLU<Mat>(K).solve(rhs);
    sol.x = sol_vec.head(n);
    if (me > 0) sol.duals_eq = sol_vec.tail(me);
    detail::Work w;
    detail::eval_constraints(prob, sol.x, w);
    sol.kkt_residual = kkt_residual(sol.x, Vec(), sol.duals_eq, w);
    sol.status = sol.kkt_residual <= tol ? Status::Optimal : Status::MaxIter;
    return sol;
  }

  // Starting point: the caller's hint when given, otherwise the regularized
  // unconstrained minimizer; slacks padded away from the boundary.
  Vec x;
  if (x_hint != nullptr && x_hint->size() == n && x_hint->allFinite()) {
    x = *x_hint;
  } else {
    x = Eigen::LLT<Mat>(prob.P + Mat::Identity(n, n)).solve(-prob.q);
    if (!x.allFinite()) x = Vec::Zero(n);
  }
  Vec y = Vec::Zero(me);
  detail::Work w;
  detail::eval_constraints(prob, x, w);
  Vec s(m), z(m);
  for (int i = 0; i < m; ++i) {
    s(i) = std::max(1.0, std::abs(w.c(i)));
    z(i) = 1.0;
  }

  const int max_iter = 200;
  const double infeas_threshold = 1e12;
  int tiny_steps = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    detail::eval_constraints(prob, x, w);

    sol.kkt_residual = kkt_residual(x, z, y, w);
    sol.iterations = iter;
    if (sol.kkt_residual <= tol) {
      sol.status = Status::Optimal;
      break;
    }

    // Lagrangian value; diverges to +inf on primal-infeasible instances.
    double obj = 0.5 * x.dot(prob.P * x) + prob.q.dot(x);
    double dual_obj = obj + z.dot(w.c);
    if (me > 0) dual_obj += y.dot(prob.A_eq * x - prob.b_eq);
    if (dual_obj > infeas_threshold || z.lpNorm<Eigen::Infinity>() > infeas_threshold) {
      sol.status = Status::Infeasible;
      break;
    }

    // Lagrangian Hessian: exact curvature of active quadratic rows.
    Mat H = prob.P;
    for (int j = 0; j < mq; ++j) H += z(ml + j) * prob.quad[j].P;

    Vec rd = prob.P * x + prob.q + w.J.transpose() * z;
    if (me > 0) rd += prob.A_eq.transpose() * y;
    Vec rp = w.c + s;
    Vec re = me > 0 ? Vec(prob.A_eq * x - prob.b_eq) : Vec();
    double mu = s.dot(z) / m;

    Vec d = z.cwiseQuotient(s);  // D = diag(z/s)
    Mat M = H + w.J.transpose() * d.asDiagonal() * w.J +
            reg * Mat::Identity(n, n);

    Eigen::LLT<Mat> llt;
    Eigen::PartialPivLU<Mat> lu;
    bool use_llt = (me == 0);
    Mat K;
    if (use_llt) {
      llt.compute(M);
      if (llt.info() != Eigen::Success) {
        lu.compute(M);
        use_llt = false;
        K = M;
      }
    } else {
      K.resize(n + me, n + me);
      K.setZero();
      K.topLeftCorner(n, n) = M;
      K.topRightCorner(n, me) = prob.A_eq.transpose();
      K.bottomLeftCorner(me, n) = prob.A_eq;
      K.bottomRightCorner(me, me) = -reg * Mat::Identity(me, me);
      lu.compute(K);
    }

    auto newton = [&](const Vec& rcomp) {
      // Returns (dx, dy, ds, dz) for complementarity residual rcomp.
      Vec rhs_x = -rd - w.J.transpose() * ((z.cwiseProduct(rp) - rcomp).cwiseQuotient(s));
      Vec dx, dy;
      if (use_llt && me == 0) {
        dx = llt.solve(rhs_x);
        dy.resize(0);
      } else {
        Vec rhs(n + me);
        rhs.head(n) = rhs_x;
        if (me > 0) rhs.tail(me) = -re;
        Vec dv = lu.solve(rhs);
        dx = dv.head(n);
        dy = dv.tail(me);
      }
      Vec dz = d.cwiseProduct(w.J * dx) + (z.cwiseProduct(rp) - rcomp).cwiseQuotient(s);
      Vec ds = -(rcomp + s.cwiseProduct(dz)).cwiseQuotient(z);
      return std::make_tuple(dx, dy, ds, dz);
    };

    auto max_step = [&](const Vec& v, const Vec& dv) {
      double a = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
      return a;
    };

    // Affine (predictor) direction.
    Vec rc_aff = s.cwiseProduct(z);
    auto [dx_a, dy_a, ds_a, dz_a] = newton(rc_aff);
    double a_aff = std::min(max_step(s, ds_a), max_step(z, dz_a));
    double mu_aff = (s + a_aff * ds_a).dot(z + a_aff * dz_a) / m;
    double sigma = std::pow(mu_aff / mu, 3);
    sigma = std::min(std::max(sigma, 1e-8), 0.99);

    // Corrector direction.
    Vec rc = s.cwiseProduct(z) + ds_a.cwiseProduct(dz_a) - Vec::Constant(m, sigma * mu);
    auto [dx, dy, ds, dz] = newton(rc);

    double alpha = 0.995 * std::min(max_step(s, ds), max_step(z, dz));
    alpha = std::min(alpha, 1.0);
    if (!dx.allFinite() || !ds.allFinite() || !dz.allFinite()) {
      fail(ErrorCode::NumericalBreakdown, "non-finite interior-point step");
    }
#ifdef PROXADC_QP_TRACE
    std::fprintf(stderr, "it=%3d res=%9.2e mu=%9.2e sig=%7.1e aff=%7.1e a=%7.1e |dx|=%8.2e\n",
                 iter, sol.kkt_residual, mu, sigma, a_aff, alpha,
                 dx.lpNorm<Eigen::Infinity>());
#endif
    if (alpha < 1e-13) {
      if (++tiny_steps >= 3) fail(ErrorCode::NumericalBreakdown, "step length underflow");
    } else {
      tiny_steps = 0;
    }

    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
    if (me > 0) y += alpha * dy;
  }

  if (sol.status != Status::Optimal && sol.status != Status::Infeasible) {
    detail::eval_constraints(prob, x, w);
    sol.kkt_residual = kkt_residual(x, z, y, w);
    sol.status = sol.kkt_residual <= tol ? Status::Optimal : Status::MaxIter;
  }
  sol.x = x;
  Vec z_orig = z.cwiseQuotient(row_scale);
  sol.duals_lin = z_orig.head(ml);
  sol.duals_quad = z_orig.tail(mq);
  sol.duals_eq = y;
  return sol;
}

/// Solve with elementwise bounds lo <= x <= hi folded into the linear rows.
/// duals_lin carries the original rows first, then the n upper-bound rows,
/// then the n lower-bound rows.
inline QpSolution solve_bounded(const QpProblem& prob, const Vec& lo, const Vec& hi,
                                double tol = 1e-8) {
  const int n = prob.n();
  require(lo.size() == n && hi.size() == n, ErrorCode::DimensionMismatch, "bound dims");
  require((lo.array() <= hi.array()).all(), ErrorCode::InvalidArgument, "lower > upper bound");

  QpProblem p = prob;
  const int ml = static_cast<int>(p.G.rows());
  p.G.conservativeResize(ml + 2 * n, n);
  p.h.conservativeResize(ml + 2 * n);
  p.G.middleRows(ml, n) = Mat::Identity(n, n);
  p.h.segment(ml, n) = hi;
  p.G.middleRows(ml + n, n) = -Mat::Identity(n, n);
  p.h.segment(ml + n, n) = -lo;

  QpSolution sol = solve(p, tol);
  if (sol.status == Status::Optimal) {
    sol.x = sol.x.cwiseMax(lo).cwiseMin(hi);
  }
  return sol;
}

/// Objective value helper.
inline double objective(const QpProblem& p, const Vec& x) {
  return 0.5 * x.dot(p.P * x) + p.q.dot(x);
}

}  // namespace qp
}  // namespace proxadc
