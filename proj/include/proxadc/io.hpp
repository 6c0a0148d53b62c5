#pragma once

#include "proxadc/prox_adc.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace proxadc {
namespace io {

/// 17 significant digits: enough for exact double round-trips.
inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* csv_header() {
  return "outer_k,inner_i,total_inner,objective_F,objective_Fk,surrogate,step_norm,"
         "max_constraint,subproblem_gap,multiplier_norm,gamma_k,eps_k,delta_k,wall_ms";
}

inline std::string runlog_to_csv(const RunLog& log) {
  std::ostringstream os;
  os << csv_header() << "\n";
  for (const auto& r : log.records) {
    os << r.outer_k << ',' << r.inner_i << ',' << r.total_inner << ',' << num(r.objective_F)
       << ',' << num(r.objective_Fk) << ',' << num(r.surrogate) << ',' << num(r.step_norm) << ','
       << num(r.max_constraint) << ',' << num(r.subproblem_gap) << ','
       << num(r.multiplier_norm) << ',' << num(r.gamma_k) << ',' << num(r.eps_k) << ','
       << num(r.delta_k) << ',' << num(r.wall_ms) << "\n";
  }
  return os.str();
}

inline std::vector<RunRecord> parse_csv(const std::string& text) {
  std::vector<RunRecord> out;
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::Io, "empty CSV");
  require(line == csv_header(), ErrorCode::Io, "unexpected CSV header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ls, field, ',')) f.push_back(field);
    require(f.size() == 14, ErrorCode::Io, "bad CSV row");
    RunRecord r;
    r.outer_k = std::stoi(f[0]);
    r.inner_i = std::stoi(f[1]);
    r.total_inner = std::stoi(f[2]);
    r.objective_F = std::stod(f[3]);
    r.objective_Fk = std::stod(f[4]);
    r.surrogate = std::stod(f[5]);
    r.step_norm = std::stod(f[6]);
    r.max_constraint = std::stod(f[7]);
    r.subproblem_gap = std::stod(f[8]);
    r.multiplier_norm = std::stod(f[9]);
    r.gamma_k = std::stod(f[10]);
    r.eps_k = std::stod(f[11]);
    r.delta_k = std::stod(f[12]);
    r.wall_ms = std::stod(f[13]);
    out.push_back(r);
  }
  return out;
}

using json = nlohmann::ordered_json;

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Certificate JSON. The schedule table carries everything needed to replay
/// the termination scan; the integrity field hashes the canonical payload
/// so any edit is visible even where no equation covers the field.
inline json certificate_to_json(const Certificate& cert, const std::vector<ScheduleRow>& schedule) {
  json j;
  j["schema"] = "prox-adc-certificate/v1";
  j["k0"] = cert.k0;
  j["k_bar"] = cert.k_bar;
  j["eta_bar"] = cert.eta_bar;
  j["beta_bar"] = cert.beta_bar;
  j["lambda"] = cert.lambda;
  j["m_rows"] = cert.m_rows;
  j["term_tail_eps"] = cert.term_tail_eps;
  j["term_step"] = cert.term_step;
  j["term_delta"] = cert.term_delta;
  j["d_hat"] = cert.d_hat;
  j["quality_eta"] = cert.quality_eta;
  j["quality_beta"] = cert.quality_beta;
  j["final_objective"] = cert.final_objective;
  j["x_final"] = std::vector<double>(cert.x_final.data(), cert.x_final.data() + cert.x_final.size());
  json sched = json::array();
  for (const auto& row : schedule) {
    json r;
    r["k"] = row.k;
    r["eps"] = row.eps;
    r["delta"] = row.delta;
    r["ell"] = row.ell;
    r["max_tail"] = row.max_tail;
    sched.push_back(r);
  }
  j["schedule"] = sched;
  j["integrity"] = fnv1a(j.dump());
  return j;
}

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> failures;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  }
};

/// Re-checks a certificate against its own schedule table and the run CSV:
/// integrity hash, the three termination inequalities at k0, minimality of
/// k0 by exhaustive scan, the quality formula, and agreement of the CSV's
/// schedule columns and multiplier norms.
inline VerifyReport verify_certificate(const json& cert, const std::vector<RunRecord>& records) {
  VerifyReport rep;
  json copy = cert;
  std::uint64_t claimed = 0;
  if (copy.contains("integrity")) {
    claimed = copy["integrity"].get<std::uint64_t>();
    copy.erase("integrity");
  } else {
    rep.check(false, "missing integrity field");
    return rep;
  }
  rep.check(fnv1a(copy.dump()) == claimed, "integrity hash mismatch");
  if (!rep.ok) return rep;

  const int k0 = cert["k0"].get<int>();
  const int k_bar = cert["k_bar"].get<int>();
  const double eta_bar = cert["eta_bar"].get<double>();
  const double beta_bar = cert["beta_bar"].get<double>();
  const double lambda = cert["lambda"].get<double>();
  const int m_rows = cert["m_rows"].get<int>();

  struct Row {
    double eps, delta, ell, max_tail;
  };
  std::map<int, Row> sched;
  for (const auto& r : cert["schedule"])
    sched[r["k"].get<int>()] = {r["eps"].get<double>(), r["delta"].get<double>(),
                                 r["ell"].get<double>(), r["max_tail"].get<double>()};

  auto holds = [&](int k) {
    auto it = sched.find(k);
    if (it == sched.end()) return false;
    const Row& r = it->second;
    return r.max_tail + r.eps <= beta_bar && r.delta / (lambda + r.ell) <= beta_bar &&
           r.delta <= eta_bar;
  };

  rep.check(k0 >= k_bar, "k0 below k_bar");
  rep.check(sched.count(k0) == 1, "k0 missing from the schedule table");
  rep.check(holds(k0), "termination inequalities fail at k0");
  for (int k = k_bar; k < k0; ++k)
    rep.check(!holds(k), "k0 is not minimal: stage " + std::to_string(k) + " already qualifies");

  if (sched.count(k0)) {
    const Row& r = sched[k0];
    rep.check(cert["term_tail_eps"].get<double>() == r.max_tail + r.eps,
              "stored term_tail_eps mismatch");
    rep.check(cert["term_step"].get<double>() == r.delta / (lambda + r.ell),
              "stored term_step mismatch");
    rep.check(cert["term_delta"].get<double>() == r.delta, "stored term_delta mismatch");
  }

  const double d_hat = cert["d_hat"].get<double>();
  double q = eta_bar * std::max(1.0, std::sqrt(2.0 * m_rows) * d_hat);
  rep.check(cert["quality_eta"].get<double>() == q, "quality_eta mismatch");
  rep.check(cert["quality_beta"].get<double>() == beta_bar, "quality_beta mismatch");

  if (!records.empty()) {
    int max_k = -1;
    double d_obs = 0.0;
    for (const auto& rec : records) {
      max_k = std::max(max_k, rec.outer_k);
      if (rec.outer_k <= k0) d_obs = std::max(d_obs, rec.multiplier_norm);
      auto it = sched.find(rec.outer_k);
      if (it != sched.end()) {
        rep.check(rec.eps_k == it->second.eps && rec.delta_k == it->second.delta,
                  "CSV schedule columns disagree with the certificate table");
      }
    }
    rep.check(max_k == k0, "run log does not end at stage k0");
    rep.check(d_obs == d_hat, "d_hat disagrees with the logged multiplier norms");
  }
  return rep;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorCode::Io, "cannot open " + path + " for writing");
  os << content;
  require(static_cast<bool>(os), ErrorCode::Io, "write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::Io, "cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace io
}  // namespace proxadc
