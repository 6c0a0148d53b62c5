#include "proxadc/pme.hpp"
#include "proxadc/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace proxadc;

namespace {

QpValueFunction one_dim_instance() {
  QpValueFunction F;
  F.c = Vec::Zero(1);
  F.C = Mat::Ones(1, 1);
  F.Q = Mat::Ones(1, 1);
  F.A = Mat::Ones(1, 1);
  F.B = -Mat::Ones(1, 1);
  F.b = Vec::Zero(1);
  return F;
}

// Grid oracle for f(x) = min_{y in [-10,10], x - y <= 0} x*y + y^2/2.
double grid_value_oracle(double x, double step) {
  double best = kInf;
  for (double y = -10.0; y <= 10.0 + 1e-12; y += step) {
    if (x - y > 1e-12) continue;
    best = std::min(best, x * y + 0.5 * y * y);
  }
  return best;
}

// Multi-scale grid oracle for the joint problem
//   min_{z,y: z <= y} x*y + y^2/2 + (z - x)^2 / (2 gamma),
// pure evaluation with successive zooming; the objective is jointly convex
// so the refined window always brackets the minimizer.
double grid_joint_oracle(double x, double gamma) {
  double zc = 0.0, yc = 0.0, radius = 4.0;
  double best = kInf;
  for (int pass = 0; pass < 5; ++pass) {
    const int N = 600;
    double bz = zc, by = yc;
    for (int i = 0; i <= N; ++i) {
      double z = zc - radius + 2 * radius * i / N;
      for (int j = 0; j <= N; ++j) {
        double y = yc - radius + 2 * radius * j / N;
        if (z - y > 0) continue;
        double v = x * y + 0.5 * y * y + (z - x) * (z - x) / (2 * gamma);
        if (v < best) {
          best = v;
          bz = z;
          by = y;
        }
      }
    }
    zc = bz;
    yc = by;
    radius = radius * 4.0 / N;
  }
  return best;
}

}  // namespace

TEST_CASE("value function of the 1-D instance", "[pme]") {
  auto F = one_dim_instance();
  CHECK(value(F, Vec::Ones(1)) == Catch::Approx(1.5).margin(1e-6));
  CHECK(value(F, -Vec::Ones(1)) == Catch::Approx(-0.5).margin(1e-6));

  SECTION("grid oracle agreement") {
    // The grid value sits above the continuum minimum by at most
    // |gradient| * step at the active bound, so compare at that resolution.
    for (double x : {-1.0, -0.4, 0.0, 0.7, 1.0}) {
      double oracle = grid_value_oracle(x, 1e-5);
      CHECK(value(F, (Vec(1) << x).finished()) == Catch::Approx(oracle).margin(3e-5));
    }
  }
}

TEST_CASE("inactive constraints give the closed-form value", "[pme]") {
  Rng rng(5);
  QpValueFunction F;
  F.C = rng.normal_mat(3, 2);
  F.c = rng.normal_vec(3);
  Mat M = rng.normal_mat(3, 3);
  F.Q = M.transpose() * M + 3.0 * Mat::Identity(3, 3);
  F.A = 0.1 * rng.normal_mat(4, 2);
  F.B = 0.1 * rng.normal_mat(4, 3);
  F.b = Vec::Constant(4, 50.0);  // constraints inactive near the origin
  Vec x = rng.uniform_vec(2, -1, 1);
  Vec q = F.c + F.C * x;
  double expect = -0.5 * q.dot(F.Q.llt().solve(q));
  CHECK(value(F, x) == Catch::Approx(expect).margin(1e-7));
}

TEST_CASE("joint PME solve matches the 2-D grid oracle", "[pme]") {
  PmeSchedule s;
  s.gamma0 = 1.0;
  s.rho = 1.5;
  s.k_tilde = 1;
  s.lipschitz_L = 2.2;
  auto fam = pme_family(one_dim_instance(), s, "pme1d");
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    double x = rng.uniform(-1, 1);
    int k = i % 3;
    double oracle = grid_joint_oracle(x, s.gamma(k));
    CHECK(fam->f_value(k, (Vec(1) << x).finished()) == Catch::Approx(oracle).margin(1e-4));
  }
}

TEST_CASE("monotone approach to the true value", "[pme]") {
  PmeSchedule s;
  s.gamma0 = 1.0;
  s.rho = 1.5;
  s.k_tilde = 1;
  s.lipschitz_L = 2.2;
  auto F = one_dim_instance();
  auto fam = pme_family(F, s, "pme1d");
  const double qp_tol = 1e-9;
  Rng rng(13);
  for (int i = 0; i < 12; ++i) {
    Vec x = rng.uniform_vec(1, -1, 1);
    double f_true = value(F, x);
    double prev = -kInf;
    for (int k : {0, 5, 20, 80}) {
      double fk = fam->f_value(k, x);
      CHECK(fk >= prev - 2 * qp_tol);
      CHECK(fk <= f_true + 2 * qp_tol);
      CHECK(f_true - fk <= s.gamma(k) * 2.2 * 2.2 / 2 + 2 * qp_tol);
      prev = fk;
    }
  }
}

TEST_CASE("schedule constants", "[pme]") {
  PmeSchedule s;
  s.gamma0 = 1.0;
  s.rho = 1.5;
  s.k_tilde = 1;
  s.lipschitz_L = 3.0;
  auto fam = pme_family(one_dim_instance(), s, "pme1d");
  for (int k : {0, 1, 4, 17}) {
    CHECK(fam->ell(k) == Catch::Approx(1.0 / s.gamma(k)));
    CHECK(fam->alpha_tail(k) == Catch::Approx(0.5 * 9.0 * s.gamma(k)));
    CHECK(fam->gamma(k) == s.gamma(k));
  }
  // Telescoping of the schedule itself.
  double acc = 0.0;
  for (int k = 0; k < 200; ++k) acc += s.gamma(k) - s.gamma(k + 1);
  CHECK(acc == Catch::Approx(s.gamma(0) - s.gamma(200)).margin(1e-12));
}

TEST_CASE("Danskin subgradient of h matches finite differences", "[pme]") {
  PmeSchedule s;
  s.gamma0 = 1.0;
  s.rho = 1.5;
  s.k_tilde = 1;
  s.lipschitz_L = 2.2;
  auto fam = pme_family(one_dim_instance(), s, "pme1d", 1e-10);
  Rng rng(21);
  for (int i = 0; i < 15; ++i) {
    Vec x = rng.uniform_vec(1, -0.9, 0.9);
    int k = i % 3;
    DcEval e = fam->eval(k, x);
    double h = 1e-5;
    Vec xp = x, xm = x;
    xp(0) += h;
    xm(0) -= h;
    double fd = (fam->eval(k, xp).h_val - fam->eval(k, xm).h_val) / (2 * h);
    CHECK(e.h_grad(0) == Catch::Approx(fd).margin(1e-4));
  }
}

TEST_CASE("lipschitz estimate", "[pme]") {
  SECTION("A = 0 forces L = 0") {
    auto F = one_dim_instance();
    F.A.setZero();
    CHECK(estimate_lipschitz(F, -Vec::Ones(1), Vec::Ones(1), 64, 1.1, 0) == 0.0);
  }
  SECTION("1-D instance: active dual gives L about 2 x safety") {
    auto F = one_dim_instance();
    double L = estimate_lipschitz(F, -Vec::Ones(1), Vec::Ones(1), 256, 1.1, 0);
    CHECK(L == Catch::Approx(2.2).margin(1e-4));
  }
  SECTION("deterministic under a fixed seed") {
    Rng rng(31);
    QpValueFunction F;
    F.C = rng.normal_mat(2, 2) / std::sqrt(2.0);
    F.c = rng.normal_vec(2);
    Mat M = rng.normal_mat(2, 2);
    F.Q = M.transpose() * M / 2 + Mat::Identity(2, 2);
    F.A = rng.normal_mat(3, 2) / std::sqrt(2.0);
    F.B = rng.normal_mat(3, 2);
    F.b = rng.normal_vec(3);
    double L1 = estimate_lipschitz(F, -Vec::Ones(2), Vec::Ones(2), 128, 1.1, 42);
    double L2 = estimate_lipschitz(F, -Vec::Ones(2), Vec::Ones(2), 128, 1.1, 42);
    CHECK(L1 == L2);
    CHECK(L1 > 0.0);
    CHECK(std::isfinite(L1));
  }
}

TEST_CASE("infeasible inner problem raises InnerInfeasible", "[pme]") {
  QpValueFunction F = one_dim_instance();
  // Constraints 0*y <= b - Ax infeasible for x > 1.
  F.B.setZero();
  F.b = Vec::Ones(1);
  try {
    value(F, (Vec(1) << 2.0).finished());
    FAIL("expected InnerInfeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InnerInfeasible);
  }
}
