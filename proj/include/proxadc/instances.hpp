#pragma once

#include "proxadc/io.hpp"
#include "proxadc/pme.hpp"
#include "proxadc/prox_adc.hpp"
#include "proxadc/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace proxadc {

/// A generated inverse-optimal-value instance: m QP value functions on the
/// box [-1,1]^n, a planted unit-norm solution x*, and the observed optimal
/// values nu_p = f_p(x*), so F(x*) = 0. eps_feas > 0 marks the constrained
/// variant whose last m - m1 rows become relative-error constraints.
struct InverseOptValInstance {
  int n = 10, m = 11, m1 = 11, d = 10, l = 5;
  std::vector<QpValueFunction> F;
  Vec nu;
  Vec x_star;
  Vec box_lo, box_hi;
  double eps_feas = 0.0;
  std::uint64_t seed = 0;
  std::string q_gen = "mtm_over_d_plus_i";
};

namespace detail {

inline QpValueFunction random_value_function(Rng& rng, int n, int d, int l) {
  QpValueFunction F;
  F.b = rng.normal_vec(l);
  F.c = rng.normal_vec(d);
  F.A = rng.normal_mat(l, n) / std::sqrt(static_cast<double>(n));
  F.B = rng.normal_mat(l, d);
  F.C = rng.normal_mat(d, n) / std::sqrt(static_cast<double>(n));
  Mat M = rng.normal_mat(d, d);
  F.Q = M.transpose() * M / d + Mat::Identity(d, d);
  return F;
}

inline bool inner_feasible_on_box(const QpValueFunction& F, Rng& rng, int samples) {
  for (int s = 0; s < samples; ++s) {
    Vec x = rng.uniform_vec(F.n(), -1.0, 1.0);
    try {
      value(F, x);
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Random instance following the unconstrained experiment protocol: standard
/// normal data, C and A scaled by 1/sqrt(n), Q = M'M/d + I, x* = u/||u||,
/// nu_p = f_p(x*). Instances whose inner QPs fail a feasibility sampling
/// pass over the box are rejected and redrawn (up to 20 attempts).
inline InverseOptValInstance gen_unconstrained(std::uint64_t seed, int n = 10, int m = 11,
                                               int d = 10, int l = 5) {
  require(n >= 1 && m >= 1 && d >= 1 && l >= 1, ErrorCode::InvalidArgument, "dims >= 1");
  Rng rng(seed);
  InverseOptValInstance inst;
  inst.n = n;
  inst.m = m;
  inst.m1 = m;
  inst.d = d;
  inst.l = l;
  inst.seed = seed;
  inst.box_lo = -Vec::Ones(n);
  inst.box_hi = Vec::Ones(n);

  for (int attempt = 0;; ++attempt) {
    if (attempt >= 20)
      fail(ErrorCode::GenerationRejected, "no feasible instance after 20 attempts");
    inst.F.clear();
    bool ok = true;
    for (int p = 0; p < m && ok; ++p) {
      QpValueFunction F = detail::random_value_function(rng, n, d, l);
      ok = detail::inner_feasible_on_box(F, rng, 16);
      inst.F.push_back(std::move(F));
    }
    if (!ok) continue;
    Vec u = rng.normal_vec(n);
    inst.x_star = u / u.norm();
    inst.nu.resize(m);
    try {
      for (int p = 0; p < m; ++p) inst.nu(p) = value(inst.F[p], inst.x_star);
    } catch (const Error&) {
      continue;
    }
    return inst;
  }
}

/// Constrained variant: same data, the last m - m1 observed values become
/// the two scaled rows |f_p(x) - nu_p| / max(1, |nu_p|) <= eps.
inline InverseOptValInstance gen_constrained(std::uint64_t seed, int n = 10, int m = 11,
                                             int m1 = 8, double eps = 0.1, int d = 10,
                                             int l = 5) {
  require(m1 >= 0 && m1 <= m, ErrorCode::InvalidArgument, "need 0 <= m1 <= m");
  require(eps > 0, ErrorCode::InvalidArgument, "eps must be positive");
  InverseOptValInstance inst = gen_unconstrained(seed, n, m, d, l);
  inst.m1 = m1;
  inst.eps_feas = eps;
  return inst;
}

/// Per-row PME families for an instance under a shared schedule shape; the
/// Lipschitz modulus is estimated per row on the instance box.
struct InstanceFamilies {
  std::vector<FamilyPtr> objective_rows;   // p = 1..m1: raw f_p families
  std::vector<FamilyPtr> constraint_rows;  // 2 per constrained p: +row, -row
  std::vector<FamilyPtr> constraint_base;  // raw f_p family per constrained p
  std::vector<double> lipschitz;           // per original row p = 1..m
  std::vector<double> sigma;               // max(1, |nu_p|) per original row
};

inline InstanceFamilies build_families(const InverseOptValInstance& inst, double gamma0,
                                       double rho, int k_tilde, double qp_tol = 1e-9) {
  InstanceFamilies out;
  for (int p = 0; p < inst.m; ++p) {
    double L = estimate_lipschitz(inst.F[p], inst.box_lo, inst.box_hi, 256, 1.1,
                                  inst.seed * 1000003ull + static_cast<std::uint64_t>(p));
    out.lipschitz.push_back(L);
    out.sigma.push_back(std::max(1.0, std::abs(inst.nu(p))));
    PmeSchedule sched;
    sched.gamma0 = gamma0;
    sched.rho = rho;
    sched.k_tilde = k_tilde;
    sched.lipschitz_L = L;
    auto fam = pme_family(inst.F[p], sched, "f" + std::to_string(p), qp_tol);
    if (p < inst.m1) {
      out.objective_rows.push_back(fam);
    } else {
      double s = out.sigma.back();
      out.constraint_base.push_back(fam);
      out.constraint_rows.push_back(scale_shift_family(
          fam, s, inst.nu(p), inst.eps_feas, "row+" + std::to_string(p)));
      out.constraint_rows.push_back(negate_scale_family(
          fam, s, inst.nu(p), inst.eps_feas, "row-" + std::to_string(p)));
    }
  }
  return out;
}

/// The constrained composite problem of the experiments: objective rows
/// |nu_p - f_p(x)| and two scaled ADC constraint rows per held-out p.
inline CompositeProblem make_problem(const InverseOptValInstance& inst,
                                     const InstanceFamilies& fams, const Vec& x0) {
  CompositeProblem prob;
  for (int p = 0; p < inst.m1; ++p) {
    prob.objectives.push_back({UnivariateConvex::abs_dev(inst.nu(p)), fams.objective_rows[p]});
    prob.i2_flags.push_back(true);
  }
  prob.constraints = fams.constraint_rows;
  prob.box_lo = inst.box_lo;
  prob.box_hi = inst.box_hi;
  prob.x0 = x0;
  return prob;
}

/// The feasibility-phase problem: V(x) = sum_p max(0, |nu_p - f^0_p(x)| - s_p)
/// over the constrained rows, with s_p = (eps - sum alpha_hat / sigma_p)
/// * sigma_p. Built on the level-0 family frozen across stages. Throws
/// MarginEmpty (with the k_tilde needed) when some s_p is nonpositive.
inline CompositeProblem feasibility_problem(const InverseOptValInstance& inst,
                                            const InstanceFamilies& fams, double gamma0,
                                            double rho, int k_tilde, const Vec& start) {
  require(inst.m1 < inst.m, ErrorCode::InvalidArgument, "instance has no constraint rows");
  CompositeProblem prob;
  for (int p = inst.m1; p < inst.m; ++p) {
    double L = fams.lipschitz[p];
    double sigma = fams.sigma[p];
    // Whole alpha sum of the scaled row: (L^2/2) gamma_0 / sigma with
    // gamma_0 = gamma0 / k_tilde^rho.
    double tail0 = fams.constraint_rows[2 * (p - inst.m1)]->alpha_tail(0);
    double s_p = (inst.eps_feas - tail0) * sigma;
    if (s_p <= 0) {
      double needed = std::pow(0.5 * L * L * gamma0 / (sigma * inst.eps_feas), 1.0 / rho);
      fail(ErrorCode::MarginEmpty,
           "row " + std::to_string(p) + " leaves no strict-feasibility margin; "
           "needs k_tilde > " + std::to_string(needed));
    }
    // V is written on the raw level-0 values, so freeze the raw family that
    // also backs the scaled constraint rows.
    prob.objectives.push_back({UnivariateConvex::dead_zone(inst.nu(p), s_p),
                               freeze_family(fams.constraint_base[p - inst.m1], 0)});
    prob.i2_flags.push_back(true);
  }
  prob.box_lo = inst.box_lo;
  prob.box_hi = inst.box_hi;
  prob.x0 = start;
  return prob;
}

/// Margins of the Assumption-2 strict feasibility test at x0: per constraint
/// row, -alpha_tail(0) - f^0(x0) (nonnegative = satisfied).
inline std::pair<bool, std::vector<double>> strict_feasibility_check(
    const Vec& x0, const CompositeProblem& prob) {
  std::vector<double> margins;
  bool ok = true;
  for (const auto& c : prob.constraints) {
    double margin = -c->alpha_tail(0) - c->f_value(0, x0);
    margins.push_back(margin);
    ok = ok && margin >= -1e-10;
  }
  return {ok, margins};
}

// ---- instance JSON ----

namespace detail {

inline io::json mat_to_json(const Mat& M) {
  io::json j;
  j["rows"] = M.rows();
  j["cols"] = M.cols();
  std::vector<double> data;
  data.reserve(M.size());
  for (int r = 0; r < M.rows(); ++r)
    for (int c = 0; c < M.cols(); ++c) data.push_back(M(r, c));
  j["data"] = data;
  return j;
}

inline Mat mat_from_json(const io::json& j) {
  Mat M(j["rows"].get<int>(), j["cols"].get<int>());
  const auto& data = j["data"];
  require(static_cast<int>(data.size()) == M.size(), ErrorCode::Io, "matrix size mismatch");
  int i = 0;
  for (int r = 0; r < M.rows(); ++r)
    for (int c = 0; c < M.cols(); ++c) M(r, c) = data[i++].get<double>();
  return M;
}

inline io::json vec_to_json(const Vec& v) {
  return io::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vec vec_from_json(const io::json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline io::json instance_to_json(const InverseOptValInstance& inst) {
  io::json j;
  j["schema"] = "prox-adc-instance/v1";
  j["n"] = inst.n;
  j["m"] = inst.m;
  j["m1"] = inst.m1;
  j["d"] = inst.d;
  j["l"] = inst.l;
  j["seed"] = inst.seed;
  j["eps_feas"] = inst.eps_feas;
  j["q_gen"] = inst.q_gen;
  j["nu"] = detail::vec_to_json(inst.nu);
  j["x_star"] = detail::vec_to_json(inst.x_star);
  j["box_lo"] = detail::vec_to_json(inst.box_lo);
  j["box_hi"] = detail::vec_to_json(inst.box_hi);
  io::json rows = io::json::array();
  for (const auto& F : inst.F) {
    io::json r;
    r["c"] = detail::vec_to_json(F.c);
    r["b"] = detail::vec_to_json(F.b);
    r["C"] = detail::mat_to_json(F.C);
    r["Q"] = detail::mat_to_json(F.Q);
    r["A"] = detail::mat_to_json(F.A);
    r["B"] = detail::mat_to_json(F.B);
    rows.push_back(r);
  }
  j["value_functions"] = rows;
  return j;
}

inline InverseOptValInstance instance_from_json(const io::json& j) {
  require(j.value("schema", "") == "prox-adc-instance/v1", ErrorCode::Io,
          "unknown instance schema");
  InverseOptValInstance inst;
  inst.n = j["n"].get<int>();
  inst.m = j["m"].get<int>();
  inst.m1 = j["m1"].get<int>();
  inst.d = j["d"].get<int>();
  inst.l = j["l"].get<int>();
  inst.seed = j["seed"].get<std::uint64_t>();
  inst.eps_feas = j["eps_feas"].get<double>();
  inst.q_gen = j["q_gen"].get<std::string>();
  inst.nu = detail::vec_from_json(j["nu"]);
  inst.x_star = detail::vec_from_json(j["x_star"]);
  inst.box_lo = detail::vec_from_json(j["box_lo"]);
  inst.box_hi = detail::vec_from_json(j["box_hi"]);
  for (const auto& r : j["value_functions"]) {
    QpValueFunction F;
    F.c = detail::vec_from_json(r["c"]);
    F.b = detail::vec_from_json(r["b"]);
    F.C = detail::mat_from_json(r["C"]);
    F.Q = detail::mat_from_json(r["Q"]);
    F.A = detail::mat_from_json(r["A"]);
    F.B = detail::mat_from_json(r["B"]);
    F.validate();
    inst.F.push_back(std::move(F));
  }
  require(static_cast<int>(inst.F.size()) == inst.m, ErrorCode::Io, "row count mismatch");
  return inst;
}

}  // namespace proxadc
