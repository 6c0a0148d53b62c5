#pragma once

#include "proxadc/adc.hpp"
#include "proxadc/convex1d.hpp"
#include "proxadc/subproblem.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace proxadc {

/// One objective row phi_p(f_p(.)) with phi_p real-valued.
struct ObjectiveEntry {
  UnivariateConvex phi;
  FamilyPtr family;
};

/// The composite problem
///   min sum_p phi_p(f_p(x))  s.t.  f_c(x) <= 0 (constraint rows), x in box.
/// Constraint rows carry phi = indicator of (-inf, 0] implicitly. The alpha
/// sequences of objective rows count as zero everywhere (only constraint
/// rows need the feasibility cushion), so their families' tails are ignored
/// by the algorithm and the termination test.
struct CompositeProblem {
  std::vector<ObjectiveEntry> objectives;
  std::vector<FamilyPtr> constraints;
  Vec box_lo;
  Vec box_hi;
  Vec x0;
  std::vector<bool> i2_flags;  // per objective row: true iff phi_p is not monotone

  int m1() const { return static_cast<int>(objectives.size()); }
  int m() const { return m1() + static_cast<int>(constraints.size()); }
  int dim() const { return static_cast<int>(x0.size()); }

  void validate() const {
    require(box_lo.size() == dim() && box_hi.size() == dim(), ErrorCode::DimensionMismatch,
            "box dims");
    require((x0.array() >= box_lo.array()).all() && (x0.array() <= box_hi.array()).all(),
            ErrorCode::InvalidArgument, "x0 outside the box");
    require(i2_flags.size() == objectives.size(), ErrorCode::DimensionMismatch,
            "i2_flags size");
    for (int p = 0; p < m1(); ++p) {
      bool non_monotone = monotone_split(objectives[p].phi).has_down();
      require(i2_flags[p] == non_monotone, ErrorCode::InvalidArgument,
              "i2 flag " + std::to_string(p) + " inconsistent with the monotone split");
      require(objectives[p].family->dim() == dim(), ErrorCode::DimensionMismatch,
              "objective family dim");
    }
    // Assumption-2 margin: the start must clear the level-0 constraints by
    // the whole remaining alpha sum.
    for (size_t c = 0; c < constraints.size(); ++c) {
      require(constraints[c]->dim() == dim(), ErrorCode::DimensionMismatch,
              "constraint family dim");
      double f0 = constraints[c]->f_value(0, x0);
      double margin = -constraints[c]->alpha_tail(0) - f0;
      require(margin >= -1e-10, ErrorCode::InvalidArgument,
              "x0 violates the strict feasibility margin of constraint row " +
                  std::to_string(c));
    }
  }
};

struct ProxAdcParams {
  double lambda = 5.0;
  std::function<double(int)> eps;    // eps_k, positive and decreasing to 0
  std::function<double(int)> delta;  // delta_k, same
  double eta_bar = 1e-2;
  double beta_bar = 1e-2;
  int k_bar = 10;
  int max_outer = 200;
  int max_inner = 500;
  double tol_feas = 1e-8;
  // Optional early exit once the true objective falls to this level; used by
  // the feasibility phase whose optimum is exactly zero.
  double target_objective = -kInf;

  /// Power schedule eps_k = delta_k = 1/(k+1)^rho from the experiments.
  static ProxAdcParams power_schedule(double rho, double lambda_ = 5.0) {
    ProxAdcParams p;
    p.lambda = lambda_;
    p.eps = [rho](int k) { return std::pow(k + 1.0, -rho); };
    p.delta = [rho](int k) { return std::pow(k + 1.0, -rho); };
    return p;
  }
};

/// One row per inner iteration, measured at the fresh candidate point.
struct RunRecord {
  int outer_k = 0;
  int inner_i = 0;
  int total_inner = 0;
  double objective_F = kNaN;   // true objective at the stage anchor
  double objective_Fk = kNaN;  // level-k objective at the candidate
  double surrogate = kNaN;
  double step_norm = kNaN;
  double max_constraint = kNaN;  // NaN when the problem has no constraint rows
  double subproblem_gap = kNaN;
  double multiplier_norm = kNaN;
  double gamma_k = kNaN;
  double eps_k = kNaN;
  double delta_k = kNaN;
  double wall_ms = 0.0;
};

/// Per-stage schedule values the termination test consumes; kept so a
/// certificate can be re-verified from the log alone.
struct ScheduleRow {
  int k = 0;
  double eps = 0.0;
  double delta = 0.0;
  double ell = 0.0;
  double max_tail = 0.0;  // max over constraint rows of alpha_tail(k); 0 if none
};

struct RunLog {
  std::vector<RunRecord> records;
  std::vector<ScheduleRow> schedule;
  int m1 = 0;
  int m_rows = 0;
  double lambda = 0.0;
  Vec final_candidate;  // x^{k, i_k + 1} of the last completed stage
};

enum class RunStatus { Certified, TargetReached, MaxOuterExceeded, InnerLoopStalled };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Certified: return "certified";
    case RunStatus::TargetReached: return "target_reached";
    case RunStatus::MaxOuterExceeded: return "max_outer_exceeded";
    case RunStatus::InnerLoopStalled: return "inner_loop_stalled";
  }
  return "unknown";
}

struct Certificate {
  int k0 = -1;
  int k_bar = 0;
  double eta_bar = 0.0;
  double beta_bar = 0.0;
  double lambda = 0.0;
  int m_rows = 0;
  double term_tail_eps = kNaN;  // max_p tail_p(k0) + eps_k0   (<= beta_bar)
  double term_step = kNaN;      // delta_k0 / (lambda + ell_k0) (<= beta_bar)
  double term_delta = kNaN;     // delta_k0                     (<= eta_bar)
  double d_hat = 0.0;           // max observed multiplier norm
  double quality_eta = kNaN;    // eta_bar * max(1, sqrt(2 m) d_hat)
  double quality_beta = kNaN;
  Vec x_final;
  double final_objective = kNaN;
};

struct RunResult {
  RunStatus status = RunStatus::MaxOuterExceeded;
  Vec x_final;
  std::optional<Certificate> certificate;
  RunLog log;
  double final_objective = kNaN;
};

namespace detail {

inline double phi_of(const UnivariateConvex& phi, double t) { return phi.value(t); }

inline double true_objective(const CompositeProblem& prob, const Vec& x, int fallback_k) {
  double acc = 0.0;
  for (const auto& o : prob.objectives) {
    double f = o.family->true_value(x);
    if (std::isnan(f)) f = o.family->f_value(fallback_k, x);
    acc += phi_of(o.phi, f);
  }
  return acc;
}

}  // namespace detail

/// Slacks of the three inner stopping conditions at a candidate point
/// (positive = satisfied). Condition (2) is skipped outside I2.
struct InnerStopSlacks {
  double cond1 = kInf;
  double cond2 = kInf;
  double cond3 = kInf;
  bool all() const { return cond1 >= 0 && cond2 >= 0 && cond3 >= 0; }
};

/// Evaluates the inner stopping rule for models anchored at `anchor` and the
/// fresh candidate `x_new`. The upper test is computed in Bregman form
/// (upper - tail - f^k), which is independent of the tail convention.
inline InnerStopSlacks inner_stop_check(const std::vector<ObjectiveTerm>& terms,
                                        const std::vector<UpperModel>& cons,
                                        const std::vector<bool>& i2_flags, const Vec& anchor,
                                        const Vec& x_new, double eps_k, double delta_k,
                                        double lambda, double ell_k) {
  InnerStopSlacks s;
  for (size_t j = 0; j < terms.size(); ++j) {
    DcEval e = terms[j].upper.fam->eval(terms[j].upper.k, x_new);
    double breg_up = terms[j].upper.value_from(e, x_new) - terms[j].upper.tail - e.f;
    s.cond1 = std::min(s.cond1, eps_k - breg_up);
    if (i2_flags[j]) {
      double breg_low = e.f - terms[j].lower.value_from(e, x_new);
      s.cond2 = std::min(s.cond2, eps_k - breg_low);
    }
  }
  for (const auto& con : cons) {
    DcEval e = con.fam->eval(con.k, x_new);
    double breg_up = con.value_from(e, x_new) - con.tail - e.f;
    s.cond1 = std::min(s.cond1, eps_k - breg_up);
  }
  s.cond3 = delta_k / (lambda + ell_k) - (x_new - anchor).norm();
  return s;
}

/// The prox-ADC method. Outer stages advance the approximation index k;
/// each stage runs successive convex approximations from the stage anchor
/// until the inner stopping rule fires, then checks the termination
/// inequalities. The certified point is the last subproblem solution of the
/// terminating stage; the stage handoff point is its anchor.
inline RunResult run(const CompositeProblem& prob, const ProxAdcParams& params) {
  prob.validate();
  require(params.lambda > 0 && params.eps && params.delta, ErrorCode::InvalidArgument,
          "params incomplete");

  auto ell_of = [&](int k) {
    double ell = 0.0;
    for (const auto& o : prob.objectives) ell = std::max(ell, o.family->ell(k));
    for (const auto& c : prob.constraints) ell = std::max(ell, c->ell(k));
    return ell;
  };
  auto max_tail_of = [&](int k) {
    double t = 0.0;
    for (const auto& c : prob.constraints) t = std::max(t, c->alpha_tail(k));
    return t;
  };

  // Schedule sanity on the working prefix.
  double prev_eps = kInf, prev_delta = kInf, prev_ratio = kInf;
  for (int k = 0; k <= params.max_outer; ++k) {
    double e = params.eps(k), d = params.delta(k);
    require(e > 0 && d > 0, ErrorCode::InvalidArgument, "schedules must stay positive");
    double ratio = d / (params.lambda + ell_of(k));
    require(e <= prev_eps + 1e-15 && d <= prev_delta + 1e-15 && ratio <= prev_ratio + 1e-15,
            ErrorCode::InvalidArgument, "schedules must be nonincreasing");
    prev_eps = e;
    prev_delta = d;
    prev_ratio = ratio;
  }

  RunResult out;
  out.log.m1 = prob.m1();
  out.log.m_rows = prob.m();
  out.log.lambda = params.lambda;

  std::vector<MonotoneSplit> splits;
  splits.reserve(prob.objectives.size());
  for (const auto& o : prob.objectives) splits.push_back(monotone_split(o.phi));

  Vec x = prob.x0;
  Vec candidate = prob.x0;
  int total_inner = 0;
  double d_hat = 0.0;
  using clock = std::chrono::steady_clock;

  auto gamma_of = [&](int k) {
    for (const auto& o : prob.objectives) {
      double g = o.family->gamma(k);
      if (!std::isnan(g)) return g;
    }
    for (const auto& c : prob.constraints) {
      double g = c->gamma(k);
      if (!std::isnan(g)) return g;
    }
    return kNaN;
  };

  for (int k = 0; k < params.max_outer; ++k) {
    const double eps_k = params.eps(k);
    const double delta_k = params.delta(k);
    const double ell_k = ell_of(k);
    const double step_threshold = delta_k / (params.lambda + ell_k);
    out.log.schedule.push_back({k, eps_k, delta_k, ell_k, max_tail_of(k)});

    const double F_stage = detail::true_objective(prob, x, k);
    if (F_stage <= params.target_objective) {
      out.status = RunStatus::TargetReached;
      out.x_final = x;
      out.final_objective = F_stage;
      out.log.final_candidate = x;
      return out;
    }

    bool stage_done = false;
    for (int i = 0; i < params.max_inner && !stage_done; ++i) {
      auto t0 = clock::now();

      SubproblemSpec spec;
      spec.box_lo = prob.box_lo;
      spec.box_hi = prob.box_hi;
      spec.center = x;
      spec.lambda = params.lambda;
      spec.tol_feas = params.tol_feas;
      spec.tol_sub = std::min(eps_k, delta_k) / 10.0;
      for (int p = 0; p < prob.m1(); ++p) {
        ObjectiveTerm term;
        term.split = splits[p];
        term.upper = build_upper(prob.objectives[p].family, k, x);
        term.upper.tail = 0.0;  // alpha_hat == 0 on objective rows
        term.lower = build_lower(prob.objectives[p].family, k, x);
        spec.objectives.push_back(std::move(term));
      }
      for (const auto& cfam : prob.constraints)
        spec.constraints.push_back(build_upper(cfam, k, x));

      SubproblemSolver solver(spec);
      SubproblemResult res = solver.solve_to(spec.tol_sub);
      InnerStopSlacks slacks =
          inner_stop_check(spec.objectives, spec.constraints, prob.i2_flags, x, res.x_plus,
                           eps_k, delta_k, params.lambda, ell_k);

      // When conditions (1)-(2) hold and the measured step sits inside the
      // wobble band of the subproblem accuracy, tighten the same bundle so
      // an almost-stationary anchor is not pushed around by solve noise.
      double tol = spec.tol_sub;
      for (int refine = 0; refine < 6 && !slacks.all(); ++refine) {
        if (slacks.cond1 < 0 || slacks.cond2 < 0 || slacks.cond3 >= 0) break;
        double step = (res.x_plus - x).norm();
        double wobble = 2.0 * std::sqrt(2.0 * std::max(res.gap, 0.0) / params.lambda) + 1e-9;
        if (step > step_threshold + wobble || tol <= 2e-8) break;
        tol = std::max(tol / 16.0, 2e-8);
        res = solver.solve_to(tol);
        slacks = inner_stop_check(spec.objectives, spec.constraints, prob.i2_flags, x,
                                  res.x_plus, eps_k, delta_k, params.lambda, ell_k);
      }

      ++total_inner;
      d_hat = std::max(d_hat, res.multiplier_norm());

      RunRecord rec;
      rec.outer_k = k;
      rec.inner_i = i;
      rec.total_inner = total_inner;
      rec.objective_F = F_stage;
      double fk_obj = 0.0;
      for (int p = 0; p < prob.m1(); ++p)
        fk_obj +=
            detail::phi_of(prob.objectives[p].phi, prob.objectives[p].family->f_value(k, res.x_plus));
      rec.objective_Fk = fk_obj;
      rec.surrogate = res.surrogate_value;
      rec.step_norm = (res.x_plus - x).norm();
      if (!prob.constraints.empty()) {
        double mc = -kInf;
        for (const auto& c : prob.constraints) mc = std::max(mc, c->f_value(k, res.x_plus));
        rec.max_constraint = mc;
      }
      rec.subproblem_gap = res.gap;
      rec.multiplier_norm = res.multiplier_norm();
      rec.gamma_k = gamma_of(k);
      rec.eps_k = eps_k;
      rec.delta_k = delta_k;
      rec.wall_ms =
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(clock::now() - t0)
              .count();
      out.log.records.push_back(rec);

      if (slacks.all()) {
        candidate = res.x_plus;  // x^{k, i_k + 1}
        stage_done = true;       // the stage hands off its anchor x^{k, i_k}
      } else {
        x = res.x_plus;  // next anchor x^{k, i+1}
      }
    }

    if (!stage_done) {
      out.status = RunStatus::InnerLoopStalled;
      out.x_final = x;
      out.final_objective = detail::true_objective(prob, x, k);
      out.log.final_candidate = x;
      return out;
    }

    out.log.final_candidate = candidate;

    const bool terminated = k >= params.k_bar && max_tail_of(k) + eps_k <= params.beta_bar &&
                            step_threshold <= params.beta_bar && delta_k <= params.eta_bar;
    if (terminated) {
      out.status = RunStatus::Certified;
      out.x_final = candidate;
      out.final_objective = detail::true_objective(prob, candidate, k);
      Certificate cert;
      cert.k0 = k;
      cert.k_bar = params.k_bar;
      cert.eta_bar = params.eta_bar;
      cert.beta_bar = params.beta_bar;
      cert.lambda = params.lambda;
      cert.m_rows = prob.m();
      cert.term_tail_eps = max_tail_of(k) + eps_k;
      cert.term_step = step_threshold;
      cert.term_delta = delta_k;
      cert.d_hat = d_hat;
      cert.quality_eta = params.eta_bar * std::max(1.0, std::sqrt(2.0 * prob.m()) * d_hat);
      cert.quality_beta = params.beta_bar;
      cert.x_final = candidate;
      cert.final_objective = out.final_objective;
      out.certificate = cert;
      return out;
    }
    // Algorithm handoff: x^{k+1} = x^{k, i_k}, the anchor of the accepted
    // subproblem, not its solution.
  }

  out.status = RunStatus::MaxOuterExceeded;
  out.x_final = x;
  out.final_objective = detail::true_objective(prob, x, params.max_outer - 1);
  return out;
}

/// Re-derives the certificate from the logged schedule: finds the smallest
/// k0 >= k_bar whose three termination inequalities hold, requires the run
/// to have completed that stage, and recomputes the quality from the logged
/// multiplier norms. Throws NotTerminated when no logged stage qualifies.
inline Certificate certify(const RunLog& log, const ProxAdcParams& params) {
  int k0 = -1;
  double tail_eps = kNaN, step = kNaN, delta0 = kNaN;
  for (const auto& row : log.schedule) {
    if (row.k < params.k_bar) continue;
    double s = row.delta / (params.lambda + row.ell);
    if (row.max_tail + row.eps <= params.beta_bar && s <= params.beta_bar &&
        row.delta <= params.eta_bar) {
      k0 = row.k;
      tail_eps = row.max_tail + row.eps;
      step = s;
      delta0 = row.delta;
      break;
    }
  }
  require(k0 >= 0, ErrorCode::NotTerminated, "no logged stage satisfies the termination test");
  bool completed = false;
  double d_hat = 0.0;
  for (const auto& rec : log.records) {
    if (rec.outer_k <= k0) d_hat = std::max(d_hat, rec.multiplier_norm);
    if (rec.outer_k == k0) completed = true;
  }
  require(completed, ErrorCode::NotTerminated, "terminating stage has no completed inner loop");

  Certificate cert;
  cert.k0 = k0;
  cert.k_bar = params.k_bar;
  cert.eta_bar = params.eta_bar;
  cert.beta_bar = params.beta_bar;
  cert.lambda = params.lambda;
  cert.m_rows = log.m_rows;
  cert.term_tail_eps = tail_eps;
  cert.term_step = step;
  cert.term_delta = delta0;
  cert.d_hat = d_hat;
  cert.quality_eta = params.eta_bar * std::max(1.0, std::sqrt(2.0 * log.m_rows) * d_hat);
  cert.quality_beta = params.beta_bar;
  cert.x_final = log.final_candidate;
  return cert;
}

}  // namespace proxadc
