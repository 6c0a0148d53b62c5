#pragma once

#include "proxadc/instances.hpp"
#include "proxadc/prox_adc.hpp"
#include "proxadc/rng.hpp"

#include <optional>
#include <utility>

namespace proxadc {

/// Experiment configuration mirroring the reference protocols: schedules
/// eps_k = delta_k = 1/(k+1)^rho, gamma_k = gamma0/(k + k_tilde)^rho.
struct SolveConfig {
  double rho = 1.5;
  double gamma0 = 1.0;
  int k_tilde = 1;
  double lambda = 5.0;
  double eta_bar = 1e-2;
  double beta_bar = 1e-2;
  int k_bar = 10;
  int max_outer = 200;
  int max_inner = 500;
  double tol_feas = 1e-8;
  double qp_tol = 1e-9;
  std::uint64_t start_seed = 0;  // seeds the uniform start on the box

  ProxAdcParams params() const {
    ProxAdcParams p = ProxAdcParams::power_schedule(rho, lambda);
    p.eta_bar = eta_bar;
    p.beta_bar = beta_bar;
    p.k_bar = k_bar;
    p.max_outer = max_outer;
    p.max_inner = max_inner;
    p.tol_feas = tol_feas;
    return p;
  }
};

struct SolveOutput {
  RunResult main_run;
  std::optional<RunResult> feas_run;  // phase 1, constrained instances only
  int k_tilde_used = 1;
  Vec start;      // random start drawn on the box
  Vec x0;         // start of the main run (feasibility-phase output if any)
  double feas_V = kNaN;
  bool strict_feasible = true;
  std::vector<double> margins;
};

/// Full pipeline on one instance: draw a uniform start on the box; for
/// constrained instances resolve k_tilde (doubling away MarginEmpty), run
/// the feasibility phase to get a strictly feasible x0, then run the main
/// solve. Throws when the feasibility phase cannot deliver a valid start.
inline SolveOutput solve_instance(const InverseOptValInstance& inst, const SolveConfig& cfg) {
  SolveOutput out;
  Rng rng(cfg.start_seed);
  out.start = Vec(inst.n);
  for (int i = 0; i < inst.n; ++i) out.start(i) = rng.uniform(inst.box_lo(i), inst.box_hi(i));

  const bool constrained = inst.m1 < inst.m;
  int k_tilde = cfg.k_tilde;

  if (!constrained) {
    out.k_tilde_used = k_tilde;
    InstanceFamilies fams = build_families(inst, cfg.gamma0, cfg.rho, k_tilde, cfg.qp_tol);
    CompositeProblem prob = make_problem(inst, fams, out.start);
    out.x0 = out.start;
    out.main_run = run(prob, cfg.params());
    return out;
  }

  // Resolve the offset: a too-small k_tilde leaves no strict-feasibility
  // margin for some row.
  InstanceFamilies fams;
  CompositeProblem feas;
  for (int doubling = 0;; ++doubling) {
    require(doubling < 24, ErrorCode::MarginEmpty, "k_tilde resolution did not converge");
    try {
      fams = build_families(inst, cfg.gamma0, cfg.rho, k_tilde, cfg.qp_tol);
      feas = feasibility_problem(inst, fams, cfg.gamma0, cfg.rho, k_tilde, out.start);
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MarginEmpty) throw;
      k_tilde *= 2;
    }
  }
  out.k_tilde_used = k_tilde;

  ProxAdcParams feas_params = cfg.params();
  feas_params.target_objective = 1e-12;
  out.feas_run = run(feas, feas_params);
  out.x0 = out.feas_run->x_final;
  out.feas_V = out.feas_run->final_objective;

  CompositeProblem prob = make_problem(inst, fams, out.x0);
  auto [ok, margins] = strict_feasibility_check(out.x0, prob);
  out.strict_feasible = ok;
  out.margins = margins;
  if (!ok || out.feas_V > 1e-8)
    fail(ErrorCode::InvalidArgument,
         "feasibility phase did not reach a strictly feasible start (V = " +
             std::to_string(out.feas_V) + ")");

  out.main_run = run(prob, cfg.params());
  return out;
}

}  // namespace proxadc
