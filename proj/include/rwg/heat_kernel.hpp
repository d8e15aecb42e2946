#pragma once

// Kernel suprema max_g mu^{*n}(g), decay-constant fitting and the explicit
// comparison constant for symmetric dominated measures.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwg/errors.hpp"
#include "rwg/lattice_fast.hpp"
#include "rwg/measure.hpp"

namespace rwg {

struct KernelEntry {
  std::size_t n = 0;
  double sup = 0.0;
  Element argmax;
  double deficit = 0.0;
};

struct KernelProfile {
  std::vector<KernelEntry> entries;  // n = 1..n_max

  /// True when some entry lost mass, so its sup is only a lower bound.
  bool lower_bound_only() const {
    for (const auto& e : entries)
      if (e.deficit > 0.0) return true;
    return false;
  }
};

inline KernelEntry kernel_entry(std::size_t n, const ProbMeasure& p) {
  KernelEntry e;
  e.n = n;
  e.deficit = p.mass_deficit();
  e.sup = -1.0;
  // atoms are key-sorted, so the first maximal atom has the smallest key
  for (const auto& a : p.atoms()) {
    if (a.mass > e.sup) {
      e.sup = a.mass;
      e.argmax = a.element;
    }
  }
  return e;
}

inline KernelProfile sup_kernel_profile(const ProbMeasure& mu, std::size_t n_max,
                                        const TruncationPolicy& policy = TruncationPolicy::exact()) {
  if (n_max < 1) throw UsageError("sup_kernel_profile needs n_max >= 1");
  KernelProfile prof;
  std::optional<SymmetricLatticePowers> fast;
  if (policy.is_exact()) fast = SymmetricLatticePowers::try_make(mu);
  if (fast) {
    for (std::size_t n = 1; n <= n_max; ++n) {
      fast->step();
      auto s = fast->sup();
      prof.entries.push_back({n, s.value, s.argmax, 0.0});
    }
  } else {
    for_each_power(mu, n_max, policy, [&](std::size_t n, const ProbMeasure& p) { prof.entries.push_back(kernel_entry(n, p)); });
  }
  return prof;
}

/// Smallest C with sup(n) <= C n^{-d/2} for every n in [n_lo, n_hi].
inline double fit_decay_constant(const KernelProfile& prof, double d, std::size_t n_lo, std::size_t n_hi) {
  double c = -1.0;
  bool any = false;
  for (const auto& e : prof.entries) {
    if (e.n < n_lo || e.n > n_hi) continue;
    if (e.deficit > 0.0) throw UsageError("fit_decay_constant: profile has a truncation deficit at n=" + std::to_string(e.n));
    c = std::max(c, e.sup * std::pow(static_cast<double>(e.n), d / 2.0));
    any = true;
  }
  if (!any) throw UsageError("fit_decay_constant: empty n range");
  return c;
}

struct CSCInputs {
  double C1 = 2.0;
  double C2 = 1.0;
  double d = 3.0;

  void validate() const {
    if (!(C1 > 1.0) || !std::isfinite(C1)) throw ValidationError("comparison constant C1 must exceed 1");
    if (!(C2 > 0.0) || !std::isfinite(C2)) throw ValidationError("decay constant C2 must be positive");
    if (!(d >= 1.0) || !std::isfinite(d)) throw ValidationError("dimension d must be >= 1");
  }
};

struct CSCTrace {
  CSCInputs inputs;
  double theta_tilde_1 = 0.0;
  double theta_tilde_2 = 0.0;
  std::size_t theta_argmax_1 = 0;
  std::size_t theta_argmax_2 = 0;
  double C3 = 0.0;
  double xi_coefficient = 0.0;
  std::vector<double> m_sequence;  // m_1 = 1, ..., m_K
  std::vector<double> residuals;   // |m_{j+1} + xi(m_{j+1}) - m_j| / m_j
  std::size_t K = 0;
  double K_lower = 0.0;            // K must exceed this
  double C_out = 0.0;

  double max_residual() const {
    double r = 0.0;
    for (double x : residuals) r = std::max(r, x);
    return r;
  }
};

/// sup_{n >= 1} (x/n) ln(x n^{d/2} / C2). The supremand is unimodal in n,
/// so the scan stops after three consecutive decreases past the peak.
inline double theta_tilde(double x, double C2, double d, std::size_t* argmax = nullptr) {
  auto f = [&](double n) { return (x / n) * std::log(x * std::pow(n, d / 2.0) / C2); };
  double best = f(1.0);
  std::size_t best_n = 1;
  double prev = best;
  int decreases = 0;
  for (std::size_t n = 2; decreases < 3; ++n) {
    double v = f(static_cast<double>(n));
    if (v > best) {
      best = v;
      best_n = n;
    }
    if (v < prev) {
      if (n > best_n) ++decreases;
    } else {
      decreases = 0;
    }
    prev = v;
    if (n > 100'000'000) throw Error("theta_tilde scan did not terminate");
  }
  if (argmax) *argmax = best_n;
  return best;
}

inline CSCTrace csc_constant(const CSCInputs& in) {
  in.validate();
  CSCTrace t;
  t.inputs = in;
  const double d = in.d, ln2 = std::log(2.0);
  t.theta_tilde_1 = theta_tilde(1.0, in.C2, d, &t.theta_argmax_1);
  t.theta_tilde_2 = theta_tilde(2.0, in.C2, d, &t.theta_argmax_2);
  t.C3 = std::min({0.5, 1.0 / (2.0 * t.theta_tilde_1), 1.0 / t.theta_tilde_2});
  t.xi_coefficient = d * t.C3 * std::pow(in.C2, -2.0 / d) * ln2 / (6.0 * in.C1);
  t.K_lower = 3.0 * in.C1 / (t.C3 * ln2 * std::pow(2.0, 1.0 + d / 2.0));
  auto xi = [&](double x) { return t.xi_coefficient * std::pow(x, 1.0 + 2.0 / d); };

  t.m_sequence.push_back(1.0);
  auto satisfied = [&](std::size_t k) {
    return t.m_sequence[k - 1] <= in.C2 && static_cast<double>(k) > t.K_lower;
  };
  std::size_t k = 1;
  while (!satisfied(k)) {
    double target = t.m_sequence.back();
    double lo = 0.0, hi = target;  // x + xi(x) is increasing, below target at 0, above at target
    while (hi - lo > 1e-12 * hi) {
      double mid = 0.5 * (lo + hi);
      (mid + xi(mid) < target ? lo : hi) = mid;
    }
    double next = 0.5 * (lo + hi);
    if (!std::isfinite(next) || !(next > 0.0)) {
      nlohmann::json dump = {{"C1", in.C1}, {"C2", in.C2}, {"d", in.d}, {"C3", t.C3}, {"step", k}};
      throw Error("csc_constant: non-finite recursion value; trace " + dump.dump());
    }
    t.residuals.push_back(std::abs(next + xi(next) - target) / target);
    t.m_sequence.push_back(next);
    ++k;
    if (k > 50'000'000) throw ResourceError("csc_constant: K search exceeded 5e7 steps", static_cast<long long>(k));
  }
  t.K = k;
  t.C_out = in.C2 * std::pow(4.0 * static_cast<double>(t.K) + 1.0, d / 2.0);
  if (!std::isfinite(t.C_out)) throw Error("csc_constant: non-finite output constant");
  return t;
}

inline nlohmann::json to_json(const CSCTrace& t) {
  return {
      {"inputs", {{"C1", t.inputs.C1}, {"C2", t.inputs.C2}, {"d", t.inputs.d}}},
      {"theta_tilde_1", t.theta_tilde_1},
      {"theta_tilde_2", t.theta_tilde_2},
      {"theta_argmax_1", t.theta_argmax_1},
      {"theta_argmax_2", t.theta_argmax_2},
      {"C3", t.C3},
      {"xi_coefficient", t.xi_coefficient},
      {"K_lower", t.K_lower},
      {"K", t.K},
      {"C_out", t.C_out},
      {"max_residual", t.max_residual()},
      {"m_sequence", t.m_sequence},
  };
}

struct ClauseVerdict {
  bool pass = false;
  double margin = 0.0;
  std::string detail;
};

struct ComparisonReport {
  ClauseVerdict symmetric;   // (i)
  ClauseVerdict dominance;   // (ii)
  ClauseVerdict decay_fit;   // (iii)
  ClauseVerdict constant;    // (iv)
  ClauseVerdict bound;       // (v)
  double C1 = 0.0;
  bool C1_clamped = false;
  double C2 = 0.0;
  std::optional<CSCTrace> trace;
  std::vector<double> ratios;  // sup_{mu2}(n) / (C_out n^{-d/2}), n = 1..n_max

  bool all_pass() const {
    return symmetric.pass && dominance.pass && decay_fit.pass && constant.pass && bound.pass;
  }
};

/// Runs the five clauses in order. An asymmetric mu1 is reported but does not
/// stop the run; a dominance or decay-fit failure skips (and fails) the rest.
inline ComparisonReport verify_comparison(const ProbMeasure& mu1, const ProbMeasure& mu2, double d, std::size_t n_max,
                                          const TruncationPolicy& policy = TruncationPolicy::exact()) {
  if (!(mu1.group() == mu2.group())) throw UsageError("verify_comparison: measures on different groups");
  ComparisonReport r;

  double asym = tv_distance(mu1, reflect(mu1));
  r.symmetric = {asym <= 1e-15, -asym, "tv(mu1, reflect(mu1)) = " + shortest_double(asym)};

  double c1 = 0.0;
  std::string missing;
  for (const auto& a : mu1.atoms()) {
    double m2 = mu2.mass_of(a.element);
    if (m2 <= 0.0) {
      missing = mu1.group().format(a.element);
      c1 = std::numeric_limits<double>::infinity();
      break;
    }
    c1 = std::max(c1, a.mass / m2);
  }
  if (!missing.empty()) {
    r.dominance = {false, -std::numeric_limits<double>::infinity(), "mu2 has no mass at " + missing};
  } else {
    r.C1_clamped = c1 <= 1.0;
    r.C1 = r.C1_clamped ? 1.0 + 1e-7 : c1;
    r.dominance = {true, 0.0, "C1 = " + shortest_double(r.C1) + (r.C1_clamped ? " (clamped)" : "")};
  }
  if (!r.dominance.pass) return r;

  KernelProfile p1 = sup_kernel_profile(mu1, n_max, policy);
  if (p1.lower_bound_only()) {
    r.decay_fit = {false, 0.0, "mu1 profile truncated"};
    return r;
  }
  r.C2 = fit_decay_constant(p1, d, 1, n_max);
  r.decay_fit = {std::isfinite(r.C2) && r.C2 > 0.0, r.C2, "C2 = " + shortest_double(r.C2)};
  if (!r.decay_fit.pass) return r;

  r.trace = csc_constant({r.C1, r.C2, d});
  r.constant = {r.trace->C_out >= r.C2, r.trace->C_out - r.C2, "C_out = " + shortest_double(r.trace->C_out)};

  KernelProfile p2 = sup_kernel_profile(mu2, n_max, policy);
  double worst = 0.0;
  for (const auto& e : p2.entries) {
    double ratio = e.sup / (r.trace->C_out * std::pow(static_cast<double>(e.n), -d / 2.0));
    r.ratios.push_back(ratio);
    worst = std::max(worst, ratio);
  }
  r.bound = {worst <= 1.0 && !p2.lower_bound_only(), 1.0 - worst,
             "max sup/(C_out n^{-d/2}) = " + shortest_double(worst)};
  return r;
}

}  // namespace rwg
