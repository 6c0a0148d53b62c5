#include "proxadc/lognormal.hpp"
#include "proxadc/rng.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

using namespace proxadc;

namespace {

LogNormalModel demo_model() {
  LogNormalModel M;
  M.mu = (Vec(2) << 0.1, 0.2).finished();
  M.Sigma = (Mat(2, 2) << 0.04, 0.01, 0.01, 0.09).finished();
  M.alpha = 0.95;
  M.box_lo = -Vec::Ones(2);
  M.box_hi = Vec::Ones(2);
  return M;
}

// Monte Carlo payoff samples exp(x'Z), Z ~ Normal(mu, Sigma).
std::vector<double> mc_payoffs(const LogNormalModel& M, const Vec& x, int n, std::uint64_t seed) {
  Eigen::LLT<Mat> llt(M.Sigma);
  Mat Lc = llt.matrixL();
  Rng rng(seed);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    Vec z = M.mu + Lc * rng.normal_vec(M.n());
    out[i] = std::exp(x.dot(z));
  }
  return out;
}

}  // namespace

TEST_CASE("deterministic payoff at x = 0", "[lognormal]") {
  auto M = demo_model();
  CHECK(var_value(M, Vec::Zero(2), 0.95) == Catch::Approx(1.0));
  CHECK(cvar_value(M, Vec::Zero(2), 0.95) == Catch::Approx(1.0));
  CHECK(cvar_value(M, Vec::Zero(2), 0.5) == Catch::Approx(1.0));
}

TEST_CASE("closed forms vs Monte Carlo", "[lognormal]") {
  auto M = demo_model();
  Vec x = Vec::Ones(2);
  const int N = 1000000;
  auto payoff = mc_payoffs(M, x, N, 7);
  std::sort(payoff.begin(), payoff.end());

  double var_closed = var_value(M, x, 0.95);
  CHECK(var_closed == Catch::Approx(std::exp(0.3 + std::sqrt(0.15) * normal_quantile(0.95))));
  double var_mc = payoff[static_cast<size_t>(0.95 * N)];
  CHECK(std::abs(var_mc - var_closed) / var_closed <= 0.005);

  double cvar_closed = cvar_value(M, x, 0.95);
  double tail_sum = 0.0;
  size_t start = static_cast<size_t>(0.95 * N);
  for (size_t i = start; i < payoff.size(); ++i) tail_sum += payoff[i];
  double cvar_mc = tail_sum / (payoff.size() - start);
  CHECK(std::abs(cvar_mc - cvar_closed) / cvar_closed <= 0.01);

  SECTION("Rockafellar-Uryasev minimization form as a cross-check") {
    // E[(c - t)_+] from suffix sums over the sorted samples.
    std::vector<double> suffix(payoff.size() + 1, 0.0);
    for (size_t i = payoff.size(); i-- > 0;) suffix[i] = suffix[i + 1] + payoff[i];
    double best = kInf;
    for (double t = 0.5 * var_closed; t <= 2.0 * var_closed; t += var_closed * 1e-3) {
      size_t lo = std::lower_bound(payoff.begin(), payoff.end(), t) - payoff.begin();
      double acc = suffix[lo] - t * (payoff.size() - lo);
      best = std::min(best, t + acc / (0.05 * N));
    }
    CHECK(std::abs(best - cvar_closed) / cvar_closed <= 0.01);
  }
}

TEST_CASE("cvar gradient against finite differences", "[lognormal]") {
  auto M = demo_model();
  Rng rng(11);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    Vec x = rng.uniform_vec(2, 0.2, 1.0);
    if (trial % 2) x = -x;
    double level = 0.9 + 0.08 * rng.uniform();
    Vec g = cvar_grad(M, x, level);
    for (int j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      double fd = (cvar_value(M, xp, level) - cvar_value(M, xm, level)) / (2 * h);
      CHECK(std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)) <= 1e-6);
    }
  }

  SECTION("isotropic covariance reduces to the 1-factor formula") {
    LogNormalModel Miso = demo_model();
    Miso.Sigma = 0.09 * Mat::Identity(2, 2);
    Vec x = (Vec(2) << 0.4, -0.6).finished();
    Vec g = cvar_grad(Miso, x, 0.95);
    for (int j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      double fd = (cvar_value(Miso, xp, 0.95) - cvar_value(Miso, xm, 0.95)) / (2 * h);
      CHECK(g(j) == Catch::Approx(fd).epsilon(1e-6));
    }
  }

  SECTION("radial scaling matches the scalar chain rule") {
    Vec x = (Vec(2) << 0.7, 0.3).finished();
    for (double t : {0.5, 1.0, 1.7}) {
      Vec xt = t * x;
      double dir = cvar_grad(M, xt, 0.95).dot(x);
      double fd = (cvar_value(M, (t + h) * x, 0.95) - cvar_value(M, (t - h) * x, 0.95)) / (2 * h);
      CHECK(dir == Catch::Approx(fd).epsilon(1e-6));
    }
  }

  SECTION("gradient refused at the origin") {
    try {
      cvar_grad(M, Vec::Zero(2), 0.95);
      FAIL("expected AtOrigin");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::AtOrigin);
    }
  }
}

TEST_CASE("CVaR dominates VaR", "[lognormal]") {
  auto M = demo_model();
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    Vec x = rng.uniform_vec(2, -1, 1);
    double level = 0.5 + 0.45 * rng.uniform();
    CHECK(cvar_value(M, x, level) >= var_value(M, x, level) - 1e-12);
  }
}

TEST_CASE("VaR ADC family", "[lognormal]") {
  auto M = demo_model();
  const int k_tilde = 5;
  auto fam = var_adc_family(M, k_tilde);

  SECTION("offset below 1/alpha is rejected") {
    LogNormalModel M2 = demo_model();
    M2.alpha = 0.4;  // needs k_tilde > 2.5
    try {
      var_adc_family(M2, 2);
      FAIL("expected BadOffset");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadOffset);
    }
  }

  SECTION("bracketing between the two VaR levels") {
    Rng rng(17);
    for (int k : {1, 5, 25}) {
      double gk = 1.0 / (k + k_tilde);
      for (int i = 0; i < 100; ++i) {
        Vec x = rng.uniform_vec(2, -1, 1);
        double diff = fam->f_value(k, x);
        CHECK(diff >= var_value(M, x, M.alpha - gk) - 1e-10);
        CHECK(diff <= var_value(M, x, M.alpha) + 1e-10);
      }
    }
  }

  SECTION("quadrature identity: g^k - h^k = (k + k_tilde) int VaR_t dt") {
    Rng rng(19);
    for (int k : {0, 4, 12}) {
      double K = k + k_tilde;
      double lo = M.alpha - 1.0 / K;
      for (int i = 0; i < 5; ++i) {
        Vec x = rng.uniform_vec(2, -1, 1);
        // Composite Simpson with 10^4 panels.
        const int n_panels = 10000;
        double hstep = (M.alpha - lo) / n_panels;
        double acc = var_value(M, x, lo) + var_value(M, x, M.alpha);
        for (int j = 1; j < n_panels; ++j)
          acc += (j % 2 ? 4.0 : 2.0) * var_value(M, x, lo + j * hstep);
        double integral = acc * hstep / 3.0;
        double diff = fam->f_value(k, x);
        CHECK(std::abs(diff - K * integral) / std::abs(diff) <= 1e-6);
      }
    }
  }

  SECTION("difference increases with k toward VaR") {
    Rng rng(23);
    for (int i = 0; i < 30; ++i) {
      Vec x = rng.uniform_vec(2, -1, 1);
      double prev = -kInf;
      for (int k : {0, 1, 3, 9, 27}) {
        double diff = fam->f_value(k, x);
        CHECK(diff >= prev - 1e-12);
        prev = diff;
      }
      CHECK(prev <= var_value(M, x, M.alpha) + 1e-12);
    }
  }

  SECTION("g and h are convex (subgradient inequality)") {
    Rng rng(29);
    for (int trial = 0; trial < 300; ++trial) {
      int k = trial % 6;
      Vec x = rng.uniform_vec(2, 0.05, 1.0);
      Vec xp = rng.uniform_vec(2, -1.0, -0.05);
      DcEval e = fam->eval(k, x);
      DcEval ep = fam->eval(k, xp);
      CHECK(ep.g_val >= e.g_val + e.g_grad.dot(xp - x) - 1e-10);
      CHECK(ep.h_val >= e.h_val + e.h_grad.dot(xp - x) - 1e-10);
    }
  }

  SECTION("alpha_hat sums to C_p gamma_0") {
    double acc = 0.0;
    for (int k = 0; k < 100000; ++k) acc += fam->alpha_hat(k);
    CHECK(acc == Catch::Approx(fam->c_p() * fam->gamma(0)).epsilon(1e-4));
    for (int k = 0; k < 50; ++k)
      CHECK(fam->alpha_tail(k) ==
            Catch::Approx(fam->alpha_hat(k) + fam->alpha_tail(k + 1)).margin(1e-12));
  }

  SECTION("ell grows with k and is positive") {
    CHECK(fam->ell(0) > 0.0);
    CHECK(fam->ell(10) > fam->ell(0));
  }
}

TEST_CASE("C_p bound", "[lognormal]") {
  SECTION("degenerate box at the origin gives zero") {
    auto M = demo_model();
    M.box_lo = Vec::Zero(2);
    M.box_hi = Vec::Zero(2);
    CHECK(c_p_bound(M) == 0.0);
  }

  SECTION("1-D model matches a dense grid") {
    LogNormalModel M;
    M.mu = (Vec(1) << 0.1).finished();
    M.Sigma = (Mat(1, 1) << 0.09).finished();
    M.alpha = 0.95;
    M.box_lo = -Vec::Ones(1);
    M.box_hi = Vec::Ones(1);
    double q = normal_quantile(0.95);
    double qh = normal_quantile(0.475);
    double front = std::exp(0.5 * std::max(q * q, qh * qh));
    double sup = 0.0;
    double arg = 0.0;
    for (int i = 0; i <= 100000; ++i) {
      double x = -1.0 + 2.0 * i / 100000.0;
      double s2 = 0.09 * x * x;
      double v = std::exp(0.1 * x + std::sqrt(s2) * q) * std::sqrt(2 * M_PI * s2);
      if (v > sup) {
        sup = v;
        arg = x;
      }
    }
    CHECK(c_p_bound(M) == Catch::Approx(1.1 * front * sup).epsilon(1e-6));
    CHECK(std::abs(arg) == Catch::Approx(1.0));  // sup attained on the boundary
  }

  SECTION("nonincreasing when the box shrinks") {
    auto M = demo_model();
    double big = c_p_bound(M);
    M.box_lo = -0.5 * Vec::Ones(2);
    M.box_hi = 0.5 * Vec::Ones(2);
    CHECK(c_p_bound(M) <= big + 1e-12);
  }
}
