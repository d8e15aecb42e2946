#pragma once

// Entropy profiles n -> H(mu^{*n}), asymptotic-entropy brackets and
// fixed-n continuity experiments over measure families.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rwg/audit.hpp"
#include "rwg/errors.hpp"
#include "rwg/lattice_fast.hpp"
#include "rwg/measure.hpp"

namespace rwg {

struct ProfileEntry {
  std::size_t n = 0;
  double entropy = 0.0;  // nats
  double deficit = 0.0;
};

struct EntropyProfile {
  std::string measure_id;
  std::vector<ProfileEntry> entries;  // n = 1, 2, ...
  TruncationPolicy policy;
  std::size_t requested_n = 0;
  std::string truncation_marker;  // set when a resource limit stopped the profile early

  bool deficit_free() const {
    return std::all_of(entries.begin(), entries.end(), [](const ProfileEntry& e) { return e.deficit == 0.0; });
  }
  double at(std::size_t n) const { return entries.at(n - 1).entropy; }
};

inline EntropyProfile avez_profile(const ProbMeasure& mu, std::size_t n_max,
                                   const TruncationPolicy& policy = TruncationPolicy::exact(),
                                   std::string measure_id = "mu") {
  if (n_max < 1) throw UsageError("avez_profile needs n_max >= 1");
  EntropyProfile p;
  p.measure_id = std::move(measure_id);
  p.policy = policy;
  p.requested_n = n_max;
  try {
    std::optional<SymmetricLatticePowers> fast;
    if (policy.is_exact()) fast = SymmetricLatticePowers::try_make(mu);
    if (fast) {
      for (std::size_t n = 1; n <= n_max; ++n) {
        fast->step();
        p.entries.push_back({n, fast->entropy(), 0.0});
      }
    } else {
      for_each_power(mu, n_max, policy, [&](std::size_t n, const ProbMeasure& m) {
        p.entries.push_back({n, shannon_entropy(m), m.mass_deficit()});
      });
    }
  } catch (const ResourceError& e) {
    p.truncation_marker = "truncated after n=" + std::to_string(p.entries.size()) + ": " + e.what();
  }
  return p;
}

struct EntropyBracket {
  double lower = 0.0;  // last increment H(n) - H(n-1); heuristic
  double upper = 0.0;  // min_n H(n)/n; certified by subadditivity
  std::size_t n_used = 0;
  std::string caveat = "lower bound is the last entropy increment, a heuristic estimate";
};

struct BracketResult {
  std::optional<EntropyBracket> bracket;
  std::string diagnostic;
};

inline BracketResult entropy_bracket(const EntropyProfile& p) {
  BracketResult r;
  if (p.entries.size() < 2) {
    r.diagnostic = "profile needs at least 2 entries";
    return r;
  }
  if (!p.deficit_free()) {
    r.diagnostic = "profile carries truncation deficits; bracket refused";
    return r;
  }
  EntropyBracket b;
  b.upper = std::numeric_limits<double>::infinity();
  for (const auto& e : p.entries) b.upper = std::min(b.upper, e.entropy / static_cast<double>(e.n));
  b.lower = std::max(0.0, p.entries.back().entropy - p.entries[p.entries.size() - 2].entropy);
  b.n_used = p.entries.back().n;
  r.bracket = b;
  return r;
}

/// Largest violation of H(a+b) <= H(a) + H(b) over the profile (<= 0 when it holds).
inline double subadditivity_violation(const EntropyProfile& p) {
  double worst = -std::numeric_limits<double>::infinity();
  const std::size_t n = p.entries.size();
  for (std::size_t a = 1; a <= n; ++a)
    for (std::size_t b = a; a + b <= n; ++b) worst = std::max(worst, p.at(a + b) - p.at(a) - p.at(b));
  return n >= 2 ? worst : 0.0;
}

/// Largest violation of H(n) <= H(n+1) (<= 0 when it holds).
inline double monotonicity_violation(const EntropyProfile& p) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < p.entries.size(); ++i) worst = std::max(worst, p.entries[i - 1].entropy - p.entries[i].entropy);
  return p.entries.size() >= 2 ? worst : 0.0;
}

struct ContinuityRow {
  std::size_t k = 0;          // 0 marks the limit row
  double step_entropy = 0.0;  // H(mu_k)
  double tail_entropy = 0.0;  // entropy of mu_k outside supp(mu)
  EntropyProfile profile;
  std::optional<EntropyBracket> bracket;
  std::vector<double> differences;  // |H(mu_k^{*n}) - H(mu^{*n})|, n = 1..n_max
};

struct ContinuityTable {
  std::string family;
  std::string group;
  std::size_t n_max = 0;
  ContinuityRow limit;
  std::vector<ContinuityRow> rows;
  std::vector<std::string> warnings;
  SemigroupCertificate nondegeneracy;
  std::string declared_growth;
};

inline ContinuityRow continuity_row(std::size_t k, const ProbMeasure& m, const ProbMeasure& limit, std::size_t n_max,
                                    const TruncationPolicy& policy) {
  ContinuityRow r;
  r.k = k;
  r.step_entropy = shannon_entropy(m);
  std::vector<Element> support;
  for (const auto& a : limit.atoms()) support.push_back(a.element);
  r.tail_entropy = entropy_tail(m, support);
  r.profile = avez_profile(m, n_max, policy, k == 0 ? "limit" : "k=" + std::to_string(k));
  r.bracket = entropy_bracket(r.profile).bracket;
  return r;
}

inline ContinuityTable continuity_experiment(const MeasureFamily& family, const std::vector<std::size_t>& k_list,
                                             std::size_t n_max,
                                             const TruncationPolicy& policy = TruncationPolicy::exact()) {
  ContinuityTable t;
  t.family = family.description;
  t.group = family.limit.group().name();
  t.n_max = n_max;
  const Group& g = family.limit.group();
  t.declared_growth = g.spec().growth().to_string();

  t.nondegeneracy = nondegeneracy_witness(family.limit, 6);
  if (!t.nondegeneracy.certified)
    t.warnings.push_back("non-degeneracy witness missing up to depth 6");
  if (g.is_wreath()) {
    GrowthDegree base = g.spec().base->growth();
    if (!base.exponential && base.degree < 3)
      t.warnings.push_back("wreath base growth degree " + base.to_string() + " < 3");
  }

  t.limit = continuity_row(0, family.limit, family.limit, n_max, policy);
  t.limit.differences.assign(t.limit.profile.entries.size(), 0.0);
  for (std::size_t k : k_list) {
    ContinuityRow r = continuity_row(k, family.at(k), family.limit, n_max, policy);
    std::size_t common = std::min(r.profile.entries.size(), t.limit.profile.entries.size());
    for (std::size_t i = 0; i < common; ++i)
      r.differences.push_back(std::abs(r.profile.entries[i].entropy - t.limit.profile.entries[i].entropy));
    t.rows.push_back(std::move(r));
  }
  return t;
}

struct SemicontinuityVerdict {
  bool pass = false;
  double margin = 0.0;        // upper_limit + tol - upper_k at the largest k
  std::size_t k = 0;
  std::size_t n_common = 0;
  bool entropy_converges = true;  // precondition: H(mu_k) -> H(mu)
  std::vector<std::string> notes;
};

/// Compares the certified upper bounds H(n)/n minimized over a common n range.
inline SemicontinuityVerdict semicontinuity_check(const ContinuityTable& t, double tol = 1e-9) {
  SemicontinuityVerdict v;
  if (t.rows.empty()) {
    v.notes.push_back("no family rows");
    return v;
  }
  const ContinuityRow* last = &t.rows.front();
  for (const auto& r : t.rows)
    if (r.k > last->k) last = &r;
  v.k = last->k;
  v.n_common = std::min(last->profile.entries.size(), t.limit.profile.entries.size());
  if (v.n_common == 0 || !last->profile.deficit_free() || !t.limit.profile.deficit_free()) {
    v.notes.push_back("profiles unusable for a certified comparison");
    return v;
  }
  auto upper = [&](const EntropyProfile& p) {
    double u = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.n_common; ++i) u = std::min(u, p.entries[i].entropy / static_cast<double>(p.entries[i].n));
    return u;
  };
  double uk = upper(last->profile), ul = upper(t.limit.profile);
  v.margin = ul + tol - uk;
  v.pass = v.margin >= 0.0;

  // Entropy convergence: the entropy outside supp(mu) must shrink along k.
  const ContinuityRow* first = &t.rows.front();
  for (const auto& r : t.rows)
    if (r.k < first->k) first = &r;
  if (last->k > first->k && last->tail_entropy > 1e-12 && last->tail_entropy >= first->tail_entropy) {
    v.entropy_converges = false;
    v.notes.push_back("entropy outside the limit support does not decrease (" + shortest_double(first->tail_entropy) +
                      " at k=" + std::to_string(first->k) + ", " + shortest_double(last->tail_entropy) + " at k=" +
                      std::to_string(last->k) + "); entropy-convergence precondition violated");
  }
  return v;
}

}  // namespace rwg
