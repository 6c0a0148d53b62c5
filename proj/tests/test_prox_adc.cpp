#include "proxadc/driver.hpp"
#include "proxadc/instances.hpp"
#include "proxadc/io.hpp"
#include "proxadc/prox_adc.hpp"
#include "proxadc/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace proxadc;
using UC = UnivariateConvex;

namespace {

// Constant family g = ||x||^2/2, h = 0 with ell = 1 and no alpha cushion.
FamilyPtr half_square_family(int n) {
  FunctionFamily::Config cfg;
  cfg.dim = n;
  cfg.name = "half_square";
  cfg.eval = [](int, const Vec& x) {
    DcEval e;
    e.g_val = 0.5 * x.squaredNorm();
    e.g_grad = x;
    e.h_val = 0.0;
    e.h_grad = Vec::Zero(x.size());
    e.f = e.g_val;
    return e;
  };
  cfg.ell = [](int) { return 1.0; };
  cfg.alpha_hat = [](int) { return 0.0; };
  cfg.alpha_tail = [](int) { return 0.0; };
  cfg.true_value = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
  cfg.g_quadratic = [n](int, QuadForm* out) {
    out->P = Mat::Identity(n, n);
    out->q = Vec::Zero(n);
    out->r = 0.0;
    return true;
  };
  return std::make_shared<FunctionFamily>(std::move(cfg));
}

// Family with curved h: g = x^2, h = x^2/2 (so f = x^2/2), ell = 2.
FamilyPtr curved_h_family() {
  FunctionFamily::Config cfg;
  cfg.dim = 1;
  cfg.name = "curved_h";
  cfg.eval = [](int, const Vec& x) {
    DcEval e;
    e.g_val = x.squaredNorm();
    e.g_grad = 2.0 * x;
    e.h_val = 0.5 * x.squaredNorm();
    e.h_grad = x;
    e.f = e.g_val - e.h_val;
    return e;
  };
  cfg.ell = [](int) { return 2.0; };
  cfg.alpha_hat = [](int) { return 0.0; };
  cfg.alpha_tail = [](int) { return 0.0; };
  return std::make_shared<FunctionFamily>(std::move(cfg));
}

CompositeProblem prox_point_problem(int n, double start) {
  CompositeProblem prob;
  prob.objectives.push_back({UC::affine(1, 0), half_square_family(n)});
  prob.i2_flags.push_back(false);
  prob.box_lo = -10.0 * Vec::Ones(n);
  prob.box_hi = 10.0 * Vec::Ones(n);
  prob.x0 = Vec::Constant(n, start);
  return prob;
}

}  // namespace

TEST_CASE("reduces to the proximal point method on a quadratic", "[prox_adc]") {
  auto prob = prox_point_problem(2, 1.0);
  ProxAdcParams params = ProxAdcParams::power_schedule(1.5, 5.0);
  params.k_bar = 2;
  params.eta_bar = 1e-2;
  params.beta_bar = 1e-2;
  auto res = run(prob, params);
  REQUIRE(res.status == RunStatus::Certified);

  // Within each stage the anchors contract with ratio lambda/(lambda+1);
  // the logged steps are anchor*(1 - ratio) so consecutive steps contract
  // with the same ratio, and the level objective strictly decreases.
  const double ratio = 5.0 / 6.0;
  double prev_obj = kInf;
  for (size_t i = 0; i < res.log.records.size(); ++i) {
    const auto& r = res.log.records[i];
    CHECK(r.objective_Fk < prev_obj);
    prev_obj = r.objective_Fk;
    if (i > 0 && res.log.records[i - 1].outer_k == r.outer_k && r.inner_i > 0) {
      CHECK(r.step_norm ==
            Catch::Approx(res.log.records[i - 1].step_norm * ratio).epsilon(1e-3));
    }
  }
  // The certified point is essentially the prox fixed point pushed to 0.
  CHECK(res.x_final.norm() <= 1.0);
  CHECK(res.final_objective < 0.5 * 2.0);  // strictly below the start value
}

TEST_CASE("descent inequality along the inner loops", "[prox_adc]") {
  // Nonsmooth outer |.|, curved family; descent must hold with the
  // tolerance 2 tol_sub at every within-stage transition.
  CompositeProblem prob;
  prob.objectives.push_back({UC::abs_dev(0.15), curved_h_family()});
  prob.i2_flags.push_back(true);
  prob.box_lo = -Vec::Ones(1);
  prob.box_hi = Vec::Ones(1);
  prob.x0 = (Vec(1) << 0.9).finished();
  ProxAdcParams params = ProxAdcParams::power_schedule(1.5, 5.0);
  params.k_bar = 3;
  auto res = run(prob, params);
  REQUIRE(res.status == RunStatus::Certified);

  for (size_t i = 1; i < res.log.records.size(); ++i) {
    const auto& prev = res.log.records[i - 1];
    const auto& cur = res.log.records[i];
    if (prev.outer_k != cur.outer_k) continue;  // anchors only chain within a stage
    double tol_sub = std::min(cur.eps_k, cur.delta_k) / 10.0;
    CHECK(cur.objective_Fk <=
          prev.objective_Fk - 2.5 * cur.step_norm * cur.step_norm + 2 * tol_sub);
  }
}

TEST_CASE("inner stopping slacks", "[prox_adc]") {
  auto fam = curved_h_family();
  Vec anchor = (Vec(1) << 0.4).finished();
  std::vector<ObjectiveTerm> terms;
  ObjectiveTerm t;
  t.split = monotone_split(UC::abs_dev(0.0));
  t.upper = build_upper(fam, 0, anchor);
  t.upper.tail = 0.0;
  t.lower = build_lower(fam, 0, anchor);
  terms.push_back(t);
  std::vector<UpperModel> cons;
  std::vector<bool> i2 = {true};

  SECTION("at the anchor every condition holds with full slack") {
    auto s = inner_stop_check(terms, cons, i2, anchor, anchor, 0.5, 0.3, 5.0, 2.0);
    CHECK(s.all());
    CHECK(s.cond1 == Catch::Approx(0.5));
    CHECK(s.cond2 == Catch::Approx(0.5));
    CHECK(s.cond3 == Catch::Approx(0.3 / 7.0));
  }

  SECTION("curved h violates the upper test far from the anchor") {
    // Bregman gap of h = x^2/2 between points is (dx)^2/2; with eps = 0.01
    // a step of 0.5 breaks condition (1): 0.125 > 0.01.
    Vec far = (Vec(1) << 0.9).finished();
    auto s = inner_stop_check(terms, cons, i2, anchor, far, 0.01, 10.0, 5.0, 2.0);
    CHECK(s.cond1 < 0);
    CHECK(s.cond1 == Catch::Approx(0.01 - 0.125).margin(1e-12));
  }

  SECTION("condition (2) is vacuous outside I2") {
    std::vector<bool> i1 = {false};
    Vec far = (Vec(1) << -0.6).finished();
    auto s = inner_stop_check(terms, cons, i1, anchor, far, 1e-9, 10.0, 5.0, 2.0);
    CHECK(s.cond2 == kInf);
  }
}

TEST_CASE("certify scans the logged schedule", "[prox_adc]") {
  // Synthetic log with the reference schedule shapes.
  const double L2_half = 2.0;  // L^2/2
  RunLog log;
  log.m1 = 3;
  log.m_rows = 5;
  log.lambda = 5.0;
  log.final_candidate = Vec::Zero(2);
  for (int k = 0; k < 60; ++k) {
    double e = std::pow(k + 1.0, -1.5);
    double ell = std::pow(k + 1.0, 1.5);
    double tail = L2_half * std::pow(k + 1.0, -1.5);
    log.schedule.push_back({k, e, e, ell, tail});
    RunRecord rec;
    rec.outer_k = k;
    rec.inner_i = 0;
    rec.multiplier_norm = 0.7;
    log.records.push_back(rec);
  }
  ProxAdcParams params = ProxAdcParams::power_schedule(1.5, 5.0);
  params.k_bar = 10;
  params.eta_bar = 1e-2;
  params.beta_bar = 1e-2;

  SECTION("smallest qualifying stage matches a direct scan") {
    int expect = -1;
    for (int k = 10; k < 60 && expect < 0; ++k) {
      double e = std::pow(k + 1.0, -1.5);
      double tail = L2_half * e;
      bool ok = tail + e <= 1e-2 && e / (5.0 + std::pow(k + 1.0, 1.5)) <= 1e-2 && e <= 1e-2;
      if (ok) expect = k;
    }
    REQUIRE(expect > 0);
    Certificate cert = certify(log, params);
    CHECK(cert.k0 == expect);
    CHECK(cert.term_tail_eps <= params.beta_bar);
    CHECK(cert.term_step <= params.beta_bar);
    CHECK(cert.term_delta <= params.eta_bar);
    CHECK(cert.d_hat == 0.7);
    CHECK(cert.quality_eta ==
          Catch::Approx(1e-2 * std::sqrt(10.0) * 0.7));  // sqrt(2m) d_hat > 1
  }

  SECTION("infinite beta_bar reduces to the delta test") {
    ProxAdcParams p2 = params;
    p2.beta_bar = kInf;
    Certificate cert = certify(log, p2);
    int expect = -1;
    for (int k = 10; k < 60 && expect < 0; ++k)
      if (std::pow(k + 1.0, -1.5) <= 1e-2) expect = k;
    CHECK(cert.k0 == expect);
  }

  SECTION("zero multipliers give quality eta_bar") {
    RunLog l2 = log;
    for (auto& r : l2.records) r.multiplier_norm = 0.0;
    Certificate cert = certify(l2, params);
    CHECK(cert.quality_eta == params.eta_bar);
  }

  SECTION("NotTerminated when no stage qualifies") {
    ProxAdcParams p3 = params;
    p3.eta_bar = 1e-9;
    try {
      certify(log, p3);
      FAIL("expected NotTerminated");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotTerminated);
    }
  }
}

TEST_CASE("small inverse-optimal-value run certifies and verifies", "[prox_adc]") {
  auto inst = gen_unconstrained(3, 4, 5, 4, 3);
  SolveConfig cfg;
  cfg.rho = 1.5;
  cfg.k_bar = 5;
  cfg.start_seed = 1;
  auto out = solve_instance(inst, cfg);
  REQUIRE(out.main_run.status == RunStatus::Certified);
  REQUIRE(out.main_run.certificate.has_value());
  const auto& cert = *out.main_run.certificate;
  CHECK(cert.term_tail_eps <= cfg.beta_bar);
  CHECK(cert.term_step <= cfg.beta_bar);
  CHECK(cert.term_delta <= cfg.eta_bar);
  CHECK(cert.k0 >= cfg.k_bar);

  SECTION("certify() recovers the same stage from the log") {
    Certificate re = certify(out.main_run.log, cfg.params());
    CHECK(re.k0 == cert.k0);
    CHECK(re.d_hat == cert.d_hat);
    CHECK(re.quality_eta == cert.quality_eta);
  }

  SECTION("rerun is deterministic apart from wall time") {
    auto out2 = solve_instance(inst, cfg);
    REQUIRE(out2.main_run.log.records.size() == out.main_run.log.records.size());
    for (size_t i = 0; i < out.main_run.log.records.size(); ++i) {
      const auto& a = out.main_run.log.records[i];
      const auto& b = out2.main_run.log.records[i];
      CHECK(a.objective_Fk == b.objective_Fk);
      CHECK(a.step_norm == b.step_norm);
      CHECK(a.multiplier_norm == b.multiplier_norm);
      CHECK(a.subproblem_gap == b.subproblem_gap);
    }
    CHECK(out2.main_run.x_final == out.main_run.x_final);
  }

  SECTION("emitted certificate JSON verifies; tampering breaks it") {
    io::json j = io::certificate_to_json(cert, out.main_run.log.schedule);
    auto records = io::parse_csv(io::runlog_to_csv(out.main_run.log));
    CHECK(io::verify_certificate(j, records).ok);

    for (const char* field : {"k0", "eta_bar", "beta_bar", "d_hat", "quality_eta",
                              "term_delta", "m_rows", "final_objective"}) {
      io::json tampered = j;
      if (tampered[field].is_number_integer())
        tampered[field] = tampered[field].get<int>() - 1;
      else
        tampered[field] = tampered[field].get<double>() * 0.5 + 1e-3;
      CHECK_FALSE(io::verify_certificate(tampered, records).ok);
    }
    io::json tampered = j;
    tampered["schedule"][2]["eps"] = 123.0;
    CHECK_FALSE(io::verify_certificate(tampered, records).ok);
    tampered = j;
    tampered["x_final"][0] = 0.123;
    CHECK_FALSE(io::verify_certificate(tampered, records).ok);
  }
}

TEST_CASE("small constrained run keeps the feasibility invariant", "[prox_adc]") {
  auto inst = gen_constrained(11, 4, 5, 3, 0.1, 4, 3);
  SolveConfig cfg;
  cfg.rho = 2.5;
  cfg.k_tilde = 10;
  cfg.k_bar = 5;
  cfg.eta_bar = 2e-2;
  cfg.beta_bar = 2e-2;
  cfg.start_seed = 2;
  auto out = solve_instance(inst, cfg);
  REQUIRE(out.feas_run.has_value());
  CHECK(out.feas_V <= 1e-8);
  CHECK(out.strict_feasible);
  REQUIRE(out.main_run.status == RunStatus::Certified);
  for (const auto& r : out.main_run.log.records) CHECK(r.max_constraint <= 1e-6);
  CHECK(out.main_run.certificate->k0 >= 5);
}

TEST_CASE("rho = 0.5 runs out of outer iterations", "[prox_adc]") {
  auto prob = prox_point_problem(1, 0.5);
  ProxAdcParams params = ProxAdcParams::power_schedule(0.5, 5.0);
  params.k_bar = 2;
  params.eta_bar = 1e-2;
  params.beta_bar = 1e-2;
  params.max_outer = 60;  // delta_k = 1/sqrt(k+1) cannot reach 1e-2 by then
  auto res = run(prob, params);
  CHECK(res.status == RunStatus::MaxOuterExceeded);
  CHECK(res.x_final.size() == 1);
}

TEST_CASE("invalid inputs are rejected", "[prox_adc]") {
  SECTION("inconsistent i2 flag") {
    auto prob = prox_point_problem(1, 0.5);
    prob.i2_flags[0] = true;  // Affine(1,0) is monotone
    ProxAdcParams params = ProxAdcParams::power_schedule(1.5, 5.0);
    try {
      run(prob, params);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
  SECTION("increasing schedule") {
    auto prob = prox_point_problem(1, 0.5);
    ProxAdcParams params = ProxAdcParams::power_schedule(1.5, 5.0);
    params.eps = [](int k) { return 1.0 + k; };
    try {
      run(prob, params);
      FAIL("expected InvalidArgument");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidArgument);
    }
  }
}
