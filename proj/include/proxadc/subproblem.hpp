#pragma once

#include "proxadc/adc.hpp"
#include "proxadc/convex1d.hpp"
#include "proxadc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace proxadc {

/// One term phi_p(f^k_p(.)) of the objective, pre-split and pre-anchored.
struct ObjectiveTerm {
  MonotoneSplit split;
  UpperModel upper;
  LowerModel lower;
};

/// The strongly convex inner subproblem
///   min_x  sum_p [ phi_up_p(upper_p(x)) + phi_down_p(lower_p(x)) ]
///          + lambda/2 ||x - center||^2
///   s.t.   upper_c(x) <= 0 for the constraint models, x in [lo, hi].
struct SubproblemSpec {
  std::vector<ObjectiveTerm> objectives;
  std::vector<UpperModel> constraints;
  Vec box_lo;
  Vec box_hi;
  Vec center;
  double lambda = 1.0;
  double tol_sub = 1e-6;
  double tol_feas = 1e-8;
};

struct SubproblemResult {
  Vec x_plus;
  Vec y1;                // per objective term, in dphi_up at the final upper value
  Vec y2;                // per objective term, <= 0, in dphi_down at the final lower value
  Vec constraint_duals;  // >= 0 per constraint model
  double gap = kInf;  // optimality gap vs the master bound, honest up to master accuracy
  double feas_violation = kInf;    // max positive part over constraint models
  double surrogate_value = kInf;   // sum of phi terms at x_plus (no prox term)
  double value_with_prox = kInf;   // surrogate_value + lambda/2 ||x_plus - center||^2
  double stationarity_residual = kInf;
  double kappa = 100.0;            // fixed report factor: residual <= kappa * tol_sub expected
  int master_solves = 0;

  /// Norm of the full multiplier vector (y_{p,1}, y_{p,2}) over all rows,
  /// constraints entering through their duals.
  double multiplier_norm() const {
    return std::sqrt(y1.squaredNorm() + y2.squaredNorm() + constraint_duals.squaredNorm());
  }
};

/// Proximal cutting-plane solver for the subproblem. Pieces whose upper model
/// is an explicit quadratic enter the master exactly (one convex quadratic
/// row per affine piece of phi_up); everything else contributes affine cuts
/// refreshed at each trial point. The master is a QCQP handled by qp::solve.
/// The object keeps its cuts, so solve_to can be called again with a tighter
/// tolerance and resume where it stopped.
class SubproblemSolver {
 public:
  explicit SubproblemSolver(SubproblemSpec spec) : spec_(std::move(spec)) {
    const int n = static_cast<int>(spec_.center.size());
    require(spec_.box_lo.size() == n && spec_.box_hi.size() == n, ErrorCode::DimensionMismatch,
            "box dims");
    require(spec_.lambda > 0, ErrorCode::InvalidArgument, "lambda must be positive");
    m1_ = static_cast<int>(spec_.objectives.size());
    mc_ = static_cast<int>(spec_.constraints.size());

    // The center must satisfy the constraint models (the feasibility
    // recursion of the outer method guarantees it); a violation here means
    // the caller's alpha bookkeeping is broken.
    for (int c = 0; c < mc_; ++c) {
      double v = spec_.constraints[c].value(spec_.center);
      if (v > 10 * spec_.tol_feas)
        fail(ErrorCode::MasterInfeasible,
             "subproblem center violates constraint model " + std::to_string(c));
    }

    up_quad_.resize(m1_);
    up_is_quad_.assign(m1_, false);
    for (int j = 0; j < m1_; ++j)
      up_is_quad_[j] = spec_.objectives[j].upper.quadratic(&up_quad_[j]);
    con_quad_.resize(mc_);
    con_is_quad_.assign(mc_, false);
    for (int c = 0; c < mc_; ++c) con_is_quad_[c] = spec_.constraints[c].quadratic(&con_quad_[c]);

    has_down_.resize(m1_);
    vidx_.assign(m1_, -1);
    nv_ = 0;
    for (int j = 0; j < m1_; ++j) {
      has_down_[j] = spec_.objectives[j].split.has_down();
      if (has_down_[j]) vidx_[j] = nv_++;
    }

    ell_max_ = 1.0;
    for (const auto& t : spec_.objectives)
      ell_max_ = std::max(ell_max_, t.upper.fam->ell(t.upper.k));
    for (const auto& c : spec_.constraints) ell_max_ = std::max(ell_max_, c.fam->ell(c.k));

    up_cuts_.resize(m1_);
    down_cuts_.resize(m1_);
    con_cuts_.resize(mc_);
    for (int j = 0; j < m1_; ++j) add_objective_cuts(j, spec_.center);
    for (int c = 0; c < mc_; ++c) add_constraint_cut(c, spec_.center);
  }

  SubproblemResult solve_to(double tol_sub) {
    const int n = dim();
    // The final cut anchors must sit within settle_tol of the returned point
    // so that the model slopes the duals refer to drift from the true
    // subgradients by at most ell * settle_tol.
    const double settle_tol =
        std::clamp(std::min(0.02 * std::sqrt(2.0 * tol_sub / spec_.lambda),
                            2.0 * tol_sub / ell_max_),
                   1e-9, 1e-3);
    const double master_tol = std::clamp(tol_sub / 20.0, 1e-12, 1e-9);
    const int max_iter = 600;
    const int patience = 80;

    double best_gap = kInf;
    int no_progress = 0;
    Vec x_prev;

    for (int iter = 0; iter < max_iter; ++iter) {
      qp::QpProblem master = assemble_master();  // snapshots the row layout
      Vec hint = hint_.size() == width() ? hint_ : master_hint(spec_.center);
      qp::QpSolution sol = qp::solve(master, master_tol, &hint);
      ++total_masters_;
      if (sol.status == qp::Status::Infeasible)
        fail(ErrorCode::MasterInfeasible,
             "master infeasible: constraint cuts and the box exclude every point");
      if (sol.status == qp::Status::MaxIter && sol.kkt_residual > 1e4 * master_tol)
        fail(ErrorCode::NumericalBreakdown,
             "master did not converge: residual " + std::to_string(sol.kkt_residual) + " after " +
                 std::to_string(sol.iterations) + " iterations, " +
                 std::to_string(master.G.rows()) + " rows, " + std::to_string(master.quad.size()) +
                 " quad rows, bundle iter " + std::to_string(iter));

      Vec x = sol.x.head(n).cwiseMax(spec_.box_lo).cwiseMin(spec_.box_hi);
      if (sol.status == qp::Status::Optimal) {
        double master_val =
            qp::objective(master, sol.x) + 0.5 * spec_.lambda * spec_.center.squaredNorm();
        lb_ = std::max(lb_, master_val);
      }
      refresh_activities(sol);

      // True surrogate at the trial point; every cut-based piece gets a new
      // supporting cut here (appended after the snapshot, so dual recovery
      // below stays aligned with the rows the master actually had).
      double phi_sum = 0.0;
      for (int j = 0; j < m1_; ++j) phi_sum += add_objective_cuts(j, x);
      double viol = 0.0;
      for (int c = 0; c < mc_; ++c) viol = std::max(viol, add_constraint_cut(c, x));

      double with_prox = phi_sum + 0.5 * spec_.lambda * (x - spec_.center).squaredNorm();
      double gap = std::max(0.0, with_prox - lb_);
      bool feasible = viol <= spec_.tol_feas;
      bool settled = x_prev.size() > 0 && (x - x_prev).norm() <= settle_tol;

      if (feasible && gap <= tol_sub && (settled || iter + 1 >= max_iter)) {
        return finish(x, sol, phi_sum, with_prox, gap, viol);
      }

      if (feasible && gap < best_gap - std::max(1e-14, 1e-3 * best_gap)) {
        best_gap = gap;
        no_progress = 0;
      } else if (++no_progress > patience) {
        fail(ErrorCode::StallNoProgress, "bundle gap stopped improving");
      }
      x_prev = x;
      hint_ = sol.x;  // warm primal start for the next master
      trim_cuts();
    }
    fail(ErrorCode::StallNoProgress, "bundle iteration cap reached");
  }

  int dim() const { return static_cast<int>(spec_.center.size()); }
  const SubproblemSpec& spec() const { return spec_; }
  double lower_bound() const { return lb_; }

 private:
  struct Cut {
    Vec slope;
    double rhs;  // slope'x - epi_var <= rhs
    double activity = 1.0;
  };

  // Column layout of the master: x (n), then u_j (m1), then v_j (nv).
  int u_col(int j) const { return dim() + j; }
  int v_col(int j) const { return dim() + m1_ + vidx_[j]; }
  int width() const { return dim() + m1_ + nv_; }

  // Feasible primal point of the master built on a feasible x: epigraph
  // variables sit at the true piece values.
  Vec master_hint(const Vec& x) const {
    Vec h = Vec::Zero(width());
    h.head(dim()) = x;
    for (int j = 0; j < m1_; ++j) {
      const auto& term = spec_.objectives[j];
      DcEval e = term.upper.fam->eval(term.upper.k, x);
      h(u_col(j)) = term.split.up.value(term.upper.value_from(e, x));
      if (has_down_[j]) h(v_col(j)) = term.split.down.value(term.lower.value_from(e, x));
    }
    return h;
  }

  // Evaluates term j at x, appends cuts for its cut-based pieces, and
  // returns the term's true value.
  double add_objective_cuts(int j, const Vec& x) {
    const auto& term = spec_.objectives[j];
    DcEval e = term.upper.fam->eval(term.upper.k, x);
    double uval = term.upper.value_from(e, x);
    double val = term.split.up.value(uval);
    if (!up_is_quad_[j]) {
      double y1 = term.split.up.subgrad_interval(uval).min_norm_element();
      Vec s = y1 * (e.g_grad - term.upper.a);
      up_cuts_[j].push_back({s, s.dot(x) - val, 1.0});
    }
    if (has_down_[j]) {
      double lval = term.lower.value_from(e, x);
      double dval = term.split.down.value(lval);
      val += dval;
      double y2 = term.split.down.subgrad_interval(lval).min_norm_element();
      Vec s = y2 * (term.lower.b - e.h_grad);
      down_cuts_[j].push_back({s, s.dot(x) - dval, 1.0});
    }
    return val;
  }

  // Adds a supporting cut of constraint c at x when the row is cut-based;
  // returns the positive part of the constraint value.
  double add_constraint_cut(int c, const Vec& x) {
    const auto& con = spec_.constraints[c];
    DcEval e = con.fam->eval(con.k, x);
    double v = con.value_from(e, x);
    if (!con_is_quad_[c]) {
      Vec s = e.g_grad - con.a;
      con_cuts_[c].push_back({s, s.dot(x) - v, 1.0});
    }
    return std::max(0.0, v);
  }

  // Row layout bookkeeping for one assembled master: for each cut-based
  // piece, the index of its first linear row and the number of cuts the
  // master saw. Cuts are only appended afterwards, so these prefixes stay
  // valid until trim_cuts runs.
  struct Layout {
    std::vector<int> up_first, up_count;
    std::vector<int> down_first, down_count;
    std::vector<int> con_first, con_count;
    std::vector<int> up_quad_first;  // index into duals_quad per quad objective
    std::vector<int> con_quad_row;
    std::vector<int> up_zero_rows;  // per objective: first linear row of zero-slope pieces
  };

  qp::QpProblem assemble_master() {
    const int n = dim();
    const int w = width();
    qp::QpProblem master;
    master.P = Mat::Zero(w, w);
    master.P.topLeftCorner(n, n) = spec_.lambda * Mat::Identity(n, n);
    master.q = Vec::Zero(w);
    master.q.head(n) = -spec_.lambda * spec_.center;
    for (int j = 0; j < m1_; ++j) {
      master.q(u_col(j)) = 1.0;
      if (has_down_[j]) master.q(v_col(j)) = 1.0;
    }
    master.A_eq.resize(0, w);
    master.b_eq.resize(0);

    layout_ = Layout{};
    layout_.up_first.assign(m1_, -1);
    layout_.up_count.assign(m1_, 0);
    layout_.down_first.assign(m1_, -1);
    layout_.down_count.assign(m1_, 0);
    layout_.con_first.assign(mc_, -1);
    layout_.con_count.assign(mc_, 0);
    layout_.up_quad_first.assign(m1_, -1);
    layout_.con_quad_row.assign(mc_, -1);

    std::vector<Vec> rows;
    std::vector<double> rhs;
    auto add_row = [&](const Vec& r, double b) {
      rows.push_back(r);
      rhs.push_back(b);
    };
    for (int i = 0; i < n; ++i) {
      Vec r = Vec::Zero(w);
      r(i) = 1.0;
      add_row(r, spec_.box_hi(i));
      r(i) = -1.0;
      add_row(r, -spec_.box_lo(i));
    }

    for (int j = 0; j < m1_; ++j) {
      const auto& term = spec_.objectives[j];
      if (up_is_quad_[j]) {
        layout_.up_quad_first[j] = static_cast<int>(master.quad.size());
        for (const auto& [sigma, beta] : term.split.up.affine_pieces()) {
          if (sigma == 0.0) {
            Vec r = Vec::Zero(w);
            r(u_col(j)) = -1.0;
            add_row(r, -beta);
          } else {
            qp::QuadConstraint qc;
            qc.P = Mat::Zero(w, w);
            qc.P.topLeftCorner(n, n) = sigma * up_quad_[j].P;
            qc.q = Vec::Zero(w);
            qc.q.head(n) = sigma * up_quad_[j].q;
            qc.q(u_col(j)) = -1.0;
            qc.r = sigma * up_quad_[j].r + beta;
            master.quad.push_back(std::move(qc));
          }
        }
      } else {
        for (const auto& [sigma, beta] : term.split.up.affine_pieces()) {
          if (sigma != 0.0) continue;  // runtime cuts carry the sloped pieces
          Vec r = Vec::Zero(w);
          r(u_col(j)) = -1.0;
          add_row(r, -beta);
        }
        layout_.up_first[j] = static_cast<int>(rows.size());
        layout_.up_count[j] = static_cast<int>(up_cuts_[j].size());
        for (const auto& cut : up_cuts_[j]) {
          Vec r = Vec::Zero(w);
          r.head(n) = cut.slope;
          r(u_col(j)) = -1.0;
          add_row(r, cut.rhs);
        }
      }
      if (has_down_[j]) {
        for (const auto& [sigma, beta] : term.split.down.affine_pieces()) {
          if (sigma != 0.0) continue;
          Vec r = Vec::Zero(w);
          r(v_col(j)) = -1.0;
          add_row(r, -beta);
        }
        layout_.down_first[j] = static_cast<int>(rows.size());
        layout_.down_count[j] = static_cast<int>(down_cuts_[j].size());
        for (const auto& cut : down_cuts_[j]) {
          Vec r = Vec::Zero(w);
          r.head(n) = cut.slope;
          r(v_col(j)) = -1.0;
          add_row(r, cut.rhs);
        }
      }
    }

    for (int c = 0; c < mc_; ++c) {
      if (con_is_quad_[c]) {
        layout_.con_quad_row[c] = static_cast<int>(master.quad.size());
        qp::QuadConstraint qc;
        qc.P = Mat::Zero(w, w);
        qc.P.topLeftCorner(n, n) = con_quad_[c].P;
        qc.q = Vec::Zero(w);
        qc.q.head(n) = con_quad_[c].q;
        qc.r = con_quad_[c].r;
        master.quad.push_back(std::move(qc));
      } else {
        layout_.con_first[c] = static_cast<int>(rows.size());
        layout_.con_count[c] = static_cast<int>(con_cuts_[c].size());
        for (const auto& cut : con_cuts_[c]) {
          Vec r = Vec::Zero(w);
          r.head(n) = cut.slope;
          add_row(r, cut.rhs);
        }
      }
    }

    master.G.resize(static_cast<int>(rows.size()), w);
    master.h.resize(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
      master.G.row(static_cast<int>(i)) = rows[i].transpose();
      master.h(static_cast<int>(i)) = rhs[i];
    }
    return master;
  }

  void refresh_activities(const qp::QpSolution& sol) {
    auto touch = [&](std::vector<Cut>& cuts, int first, int count) {
      for (int t = 0; t < count; ++t)
        cuts[static_cast<size_t>(t)].activity = std::abs(sol.duals_lin(first + t));
    };
    for (int j = 0; j < m1_; ++j) {
      if (layout_.up_first[j] >= 0) touch(up_cuts_[j], layout_.up_first[j], layout_.up_count[j]);
      if (layout_.down_first[j] >= 0)
        touch(down_cuts_[j], layout_.down_first[j], layout_.down_count[j]);
    }
    for (int c = 0; c < mc_; ++c)
      if (layout_.con_first[c] >= 0)
        touch(con_cuts_[c], layout_.con_first[c], layout_.con_count[c]);
  }

  // Maps master row duals back to piece multipliers, projects them into the
  // exact subdifferential intervals at x, and runs a few 1-D least-squares
  // sweeps to shrink the stationarity residual.
  SubproblemResult finish(const Vec& x, const qp::QpSolution& sol, double phi_sum,
                          double with_prox, double gap, double viol) {
    const int n = dim();
    SubproblemResult res;
    res.x_plus = x;
    res.gap = gap;
    res.feas_violation = viol;
    res.surrogate_value = phi_sum;
    res.value_with_prox = with_prox;
    res.master_solves = total_masters_;
    res.y1 = Vec::Zero(m1_);
    res.y2 = Vec::Zero(m1_);
    res.constraint_duals = Vec::Zero(mc_);

    std::vector<double> y1_est(m1_, 0.0), y2_est(m1_, 0.0);
    for (int j = 0; j < m1_; ++j) {
      const auto& term = spec_.objectives[j];
      if (up_is_quad_[j]) {
        int qrow = layout_.up_quad_first[j];
        for (const auto& [sigma, beta] : term.split.up.affine_pieces())
          if (sigma != 0.0) y1_est[j] += sol.duals_quad(qrow++) * sigma;
      } else {
        for (int t = 0; t < layout_.up_count[j]; ++t)
          y1_est[j] += sol.duals_lin(layout_.up_first[j] + t);
      }
      if (has_down_[j])
        for (int t = 0; t < layout_.down_count[j]; ++t)
          y2_est[j] -= sol.duals_lin(layout_.down_first[j] + t);
    }
    for (int c = 0; c < mc_; ++c) {
      if (con_is_quad_[c]) {
        res.constraint_duals(c) = sol.duals_quad(layout_.con_quad_row[c]);
      } else {
        double acc = 0.0;
        for (int t = 0; t < layout_.con_count[c]; ++t)
          acc += sol.duals_lin(layout_.con_first[c] + t);
        res.constraint_duals(c) = acc;
      }
    }

    // Stationarity residual with the true subgradients at x; box and
    // constraint contributions stay fixed during the sweeps.
    Vec r = spec_.lambda * (x - spec_.center);
    for (int i = 0; i < n; ++i) {
      r(i) += sol.duals_lin(2 * i);
      r(i) -= sol.duals_lin(2 * i + 1);
    }
    std::vector<Vec> s_up(m1_), s_low(m1_);
    std::vector<Interval> i_up(m1_), i_low(m1_);
    for (int j = 0; j < m1_; ++j) {
      const auto& term = spec_.objectives[j];
      DcEval e = term.upper.fam->eval(term.upper.k, x);
      double uval = term.upper.value_from(e, x);
      s_up[j] = e.g_grad - term.upper.a;
      i_up[j] = term.split.up.subgrad_interval(uval);
      res.y1(j) = i_up[j].clamp(y1_est[j]);
      r += res.y1(j) * s_up[j];
      if (has_down_[j]) {
        double lval = term.lower.value_from(e, x);
        s_low[j] = term.lower.b - e.h_grad;
        i_low[j] = term.split.down.subgrad_interval(lval);
        res.y2(j) = i_low[j].clamp(y2_est[j]);
        r += res.y2(j) * s_low[j];
      } else {
        s_low[j] = Vec::Zero(n);
        i_low[j] = {0.0, 0.0};
      }
    }
    for (int c = 0; c < mc_; ++c) r += res.constraint_duals(c) * spec_.constraints[c].subgrad(x);

    // Coordinate sweeps: each multiplier moves to the 1-D least-squares
    // minimizer of ||r|| over its interval.
    for (int sweep = 0; sweep < 3; ++sweep) {
      for (int j = 0; j < m1_; ++j) {
        auto refine = [&](double& yj, const Vec& dir, const Interval& box) {
          double d2 = dir.squaredNorm();
          if (d2 <= 0.0) return;
          Vec base = r - yj * dir;
          double t = box.clamp(-base.dot(dir) / d2);
          r = base + t * dir;
          yj = t;
        };
        double v1 = res.y1(j);
        refine(v1, s_up[j], i_up[j]);
        res.y1(j) = v1;
        if (has_down_[j]) {
          double v2 = res.y2(j);
          refine(v2, s_low[j], i_low[j]);
          res.y2(j) = v2;
        }
      }
    }
    res.stationarity_residual = r.norm();
    return res;
  }

  void trim_cuts() {
    auto trim = [](std::vector<Cut>& cuts) {
      const size_t cap = 200;
      while (cuts.size() > cap) {
        auto lowest = std::min_element(
            cuts.begin(), cuts.end(),
            [](const Cut& a, const Cut& b) { return a.activity < b.activity; });
        cuts.erase(lowest);
      }
    };
    for (auto& cs : up_cuts_) trim(cs);
    for (auto& cs : down_cuts_) trim(cs);
    for (auto& cs : con_cuts_) trim(cs);
  }

  SubproblemSpec spec_;
  int m1_ = 0;
  int mc_ = 0;
  int nv_ = 0;
  std::vector<bool> has_down_;
  std::vector<int> vidx_;
  std::vector<QuadForm> up_quad_, con_quad_;
  std::vector<bool> up_is_quad_, con_is_quad_;
  std::vector<std::vector<Cut>> up_cuts_, down_cuts_, con_cuts_;
  Layout layout_;
  Vec hint_;
  double lb_ = -kInf;
  double ell_max_ = 1.0;
  int total_masters_ = 0;
};

inline SubproblemResult solve_subproblem(const SubproblemSpec& spec) {
  SubproblemSolver solver(spec);
  return solver.solve_to(spec.tol_sub);
}

}  // namespace proxadc
