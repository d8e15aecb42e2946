// Acceptance suite: one PASS/FAIL line per criterion, each with its measured
// values, runtime and runtime budget. Exits 1 when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rwg/rwg.hpp"

using namespace rwg;

namespace {

// Every clause is recorded, so a failing criterion still reports the rest.
struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void clause(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "FAILED ") + what);
  }
};

std::string num(double x, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

Group Z(int d) { return Group::make(GroupSpec::integer_lattice(d)); }

WalkConfig walk(std::size_t steps, std::size_t samples, std::uint64_t seed = 1) {
  WalkConfig c;
  c.steps = steps;
  c.samples = samples;
  c.master_seed = seed;
  return c;
}

// G(0) of the simple walk on Z^3 (Watson's integral), so p_esc = 1/G(0).
constexpr double kCubicEscape = 1.0 / 1.516386059151978;

// Profiles gathered by the other criteria; criterion 4 audits all of them.
std::vector<EntropyProfile>& collected_profiles() {
  static std::vector<EntropyProfile> profiles;
  return profiles;
}

Verdict escape_cubic() {
  Verdict v;
  ProbMeasure mu = simple_random_walk(Z(3));

  ChungFuchsResult cf = chung_fuchs_escape(mu);
  v.clause(!cf.recurrent && std::abs(cf.estimate.point - kCubicEscape) <= 1e-3,
           "quadrature " + num(cf.estimate.point, 8) + " vs 0.6595");
  v.clause(cf.grids.size() >= 3 && cf.estimate.std_error <= 1e-3,
           "resolutions " + std::to_string(cf.grids.size()) + ", spread " + num(cf.estimate.std_error, 3));

  const std::size_t n_max = 60, fit_hi = 240;
  KernelProfile prof = sup_kernel_profile(mu, fit_hi);
  TailModel tail{fit_decay_constant(prof, 3.0, 1, fit_hi), 3.0};
  GreenEscape g = escape_from_green(mu, n_max, tail);
  bool brackets = g.lower <= cf.estimate.point && cf.estimate.point <= g.upper;
  v.clause(g.conclusive && brackets && g.upper - g.lower <= 0.05,
           "green [" + num(g.lower) + ", " + num(g.upper) + "] width " + num(g.upper - g.lower, 3));

  EscapeEstimates mc = escape_mc(mu, walk(10'000, 1'000));
  double dev = std::abs(mc.range_corrected.point - cf.estimate.point);
  v.clause(dev <= 3.0 * mc.range_corrected.std_error,
           "range " + num(mc.range_corrected.point) + " +- " + num(mc.range_corrected.std_error, 2) + " (raw R_n/n " +
               num(mc.range.point) + ")");
  return v;
}

Verdict biased_line() {
  Verdict v;
  Group z = Z(1);
  ProbMeasure mu = make_measure(z, {{z.lattice_element({1}), 2.0 / 3.0}, {z.lattice_element({-1}), 1.0 / 3.0}});
  // expected visits to 0 are 1/|p - q| = 3; escape is |p - q| = 1/3
  GreenSum gs = green_sum(mu, 60);
  v.clause(std::abs(gs.partial_sum - 3.0) <= 1e-2, "S(60) = " + num(gs.partial_sum, 7) + " vs 3");
  v.clause(std::abs(1.0 / gs.partial_sum - 1.0 / 3.0) <= 1e-2, "1/S = " + num(1.0 / gs.partial_sum, 6));
  EscapeEstimates mc = escape_mc(mu, walk(10'000, 1'000));
  v.clause(std::abs(mc.range.point - 1.0 / 3.0) <= 0.02,
           "range " + num(mc.range.point) + " +- " + num(mc.range.std_error, 2));
  return v;
}

Verdict power_law_discontinuity() {
  Verdict v;
  Group z = Z(1);
  MeasureFamily fam = power_law_family(z.lattice_element({1}), 1.5, 4096);
  double worst_recurrent = 0.0, worst_se = 0.0;
  for (std::size_t k : {4, 16, 64}) {
    EscapeEstimates a = escape_mc(fam.at(k), walk(1'000, 1'000));
    EscapeEstimates b = escape_mc(fam.at(k), walk(10'000, 1'000));
    double sigma = std::hypot(a.range.std_error, b.range.std_error);
    double drop = a.range.point - b.range.point;
    v.clause(drop >= 2.0 * sigma, "k=" + std::to_string(k) + " " + num(a.range.point, 4) + " -> " + num(b.range.point, 4) +
                                      " (" + num(drop / sigma, 3) + " sigma)");
    if (b.range.point > worst_recurrent) {
      worst_recurrent = b.range.point;
      worst_se = b.range.std_error;
    }
  }
  EscapeEstimates lim = escape_mc(fam.limit, walk(10'000, 1'000));
  double gap = (lim.range.point - worst_recurrent) / std::hypot(lim.range.std_error, worst_se);
  v.clause(lim.range.point >= 0.05 && gap >= 5.0,
           "k=4096 " + num(lim.range.point, 4) + " +- " + num(lim.range.std_error, 2) + " (" + num(gap, 3) + " sigma)");
  return v;
}

Verdict entropy_laws() {
  Verdict v;
  auto& profiles = collected_profiles();
  profiles.push_back(avez_profile(simple_random_walk(Group::make(GroupSpec::free_group(2))), 10));
  profiles.push_back(avez_profile(simple_random_walk(Z(3)), 12));
  profiles.push_back(avez_profile(simple_random_walk(Z(1)), 40));
  std::mt19937_64 rng(4);
  std::vector<Group> kinds = {Z(1),
                              Z(2),
                              Group::make(GroupSpec::cyclic_group(5)),
                              Group::make(GroupSpec::infinite_dihedral()),
                              Group::make(GroupSpec::free_group(2)),
                              Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(1)))};
  for (const auto& g : kinds) {
    const auto gens = g.standard_generators();
    std::uniform_real_distribution<double> w(0.1, 1.0);
    std::vector<std::pair<Element, double>> atoms;
    double z = 0.0;
    for (const auto& s : gens) {
      atoms.emplace_back(s, w(rng));
      z += atoms.back().second;
    }
    for (auto& a : atoms) a.second /= z;
    profiles.push_back(avez_profile(make_measure(g, atoms), 7));
  }

  std::size_t audited = 0;
  double sub = 0.0, mono = 0.0, order = 0.0;
  for (const auto& p : profiles) {
    if (!p.deficit_free()) continue;
    ++audited;
    sub = std::max(sub, subadditivity_violation(p));
    mono = std::max(mono, monotonicity_violation(p));
    BracketResult b = entropy_bracket(p);
    if (b.bracket) order = std::max(order, b.bracket->lower - b.bracket->upper);
  }
  v.clause(audited >= 9, std::to_string(audited) + " deficit-free profiles");
  v.clause(sub <= 1e-12, "worst subadditivity excess " + num(sub, 3));
  v.clause(mono <= 1e-12, "worst monotonicity excess " + num(mono, 3));
  v.clause(order <= 1e-12, "worst lower - upper " + num(order, 3));
  return v;
}

Verdict lamplighter_continuity() {
  Verdict v;
  Group g = Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(3)));
  ProbMeasure mu = switch_walk(g);
  v.clause(mu.size() == 13, std::to_string(mu.size()) + " atoms");
  Element contaminant = g.parse_element("{(1,0,0):1}@(1,0,0)");
  ContinuityTable t = continuity_experiment(point_mixture_family(mu, contaminant, WeightSchedule::inverse),
                                            {2, 4, 8, 16, 32}, 4);
  collected_profiles().push_back(t.limit.profile);
  bool decreasing = true;
  std::string diffs;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    collected_profiles().push_back(t.rows[i].profile);
    double d = t.rows[i].differences.back();
    diffs += (i ? " " : "") + num(d, 4);
    if (i > 0 && !(d < t.rows[i - 1].differences.back())) decreasing = false;
  }
  v.clause(decreasing, "|dH(n=4)| over k: " + diffs);
  v.clause(t.rows.back().differences.back() <= 0.02, "at k=32 " + num(t.rows.back().differences.back(), 4));
  SemicontinuityVerdict s = semicontinuity_check(t, 1e-9);
  v.clause(s.pass, "semicontinuity margin " + num(s.margin, 4) + " at k=" + std::to_string(s.k));
  return v;
}

Verdict comparison_pipeline() {
  Verdict v;
  Group z3 = Z(3);
  ComparisonReport r = verify_comparison(simple_random_walk(z3), simple_random_walk(z3, 0.5), 3.0, 200);
  v.clause(r.bound.pass && r.ratios.size() == 200, "bound clause margin " + num(r.bound.margin, 5) + " over n <= 200");
  v.clause(std::abs(r.C1 - 2.0) <= 1e-12, "C1 = " + num(r.C1, 17));
  v.clause(r.trace && r.trace->max_residual() <= 1e-10 && r.trace->C_out >= r.C2,
           r.trace ? "fitted trace K=" + std::to_string(r.trace->K) + " residual " + num(r.trace->max_residual(), 3) +
                         " C_out " + num(r.trace->C_out) + " >= C2 " + num(r.C2)
                   : std::string("no trace"));
  CSCTrace anchor = csc_constant({2.0, 1.0, 3.0});
  v.clause(anchor.K == 4 && std::abs(anchor.C_out - 70.092795635500224) <= 1e-12 && anchor.max_residual() <= 1e-10,
           "anchor K=" + std::to_string(anchor.K) + " C_out " + num(anchor.C_out, 17));
  return v;
}

Group micro_group() {
  return Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(1)));
}

ProbMeasure micro_measure(const Group& g) {
  return uniform_measure({g.parse_element("{}@1"), g.parse_element("{}@-1"), g.parse_element("{0:1}@0")});
}

CoarseSpec micro_spec(const Group& g) {
  CoarseSpec s;
  s.t0 = 2;
  s.N = 1;
  s.n0 = 1;
  s.L = {g.lamp_group().identity(), g.lamp_group().cyclic_element(1)};
  s.R = {g.base_group().identity(), g.base_group().lattice_element({1})};
  return s;
}

Verdict coarse_identities() {
  Verdict v;
  Group g = micro_group();
  ProbMeasure mu = micro_measure(g);
  std::vector<Statistic> all;
  for (const auto& [s, name] : statistic_names()) all.push_back(s);
  ExactLaw law = enumerate_exact(mu, all, 6, micro_spec(g));
  v.clause(law.words() == 729, std::to_string(law.words()) + " words");

  const std::size_t slices = law.position(Statistic::coarse_slices_wreath);
  const double expect = 3.0 * shannon_entropy(convolve(mu, mu));
  const double h = law.entropy({slices});
  v.clause(std::abs(h - expect) <= 1e-12, "H(slices) " + num(h, 10) + " = 3 H(mu*2) " + num(expect, 10));

  double out = law.conditional_entropy({law.position(Statistic::lamps_out_coarse)},
                                       {law.position(Statistic::coarse_trajectory), law.position(Statistic::bad_increments)});
  v.clause(std::abs(out) <= 1e-12, "H(outside lamps | trajectory, beta) = " + num(out, 3));

  double chain = 0.0, cond = 0.0;
  const std::size_t m = all.size();
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) continue;
      double ha_b = law.conditional_entropy({a}, {b});
      chain = std::max(chain, std::abs(law.entropy({a, b}) - law.entropy({b}) - ha_b));
      cond = std::max(cond, ha_b - law.entropy({a}));
      for (std::size_t c = 0; c < m; ++c)
        if (c != a && c != b) cond = std::max(cond, law.conditional_entropy({a}, {b, c}) - ha_b);
    }
  v.clause(chain <= 1e-12, "chain rule error " + num(chain, 3));
  v.clause(cond <= 1e-12, "conditioning excess " + num(cond, 3));
  return v;
}

Verdict plugin_consistency() {
  Verdict v;
  Group g = micro_group();
  ProbMeasure mu = micro_measure(g);
  const double exact = exact_partition_entropy(mu, Statistic::bad_increments, 6, micro_spec(g)).point;
  int closer = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PluginResult r = plugin_partition_entropy(mu, Statistic::bad_increments, 6, micro_spec(g), walk(6, 10'000, seed));
    worst = std::max(worst, std::abs(r.plugin.point - exact));
    closer += std::abs(r.miller_madow.point - exact) <= std::abs(r.plugin.point - exact);
  }
  v.clause(worst <= 0.05, "exact " + num(exact, 7) + ", worst plug-in error " + num(worst, 3));
  v.clause(closer >= 3, "Miller-Madow closer in " + std::to_string(closer) + " of 5 seeds");
  return v;
}

Verdict tail_visits() {
  Verdict v;
  Group z3 = Z(3);
  std::vector<EstimateWithCI> p = tail_visit_profile(simple_random_walk(z3), {z3.identity()}, {10, 50, 200}, walk(1'000, 2'000));
  std::string vals;
  for (std::size_t i = 0; i < p.size(); ++i) vals += (i ? " " : "") + num(p[i].point, 4);
  v.clause(true, "P(visit e after n0) = " + vals);
  for (std::size_t i = 1; i < p.size(); ++i) {
    double sigma = std::hypot(p[i].std_error, p[i - 1].std_error);
    double gap = (p[i - 1].point - p[i].point) / sigma;
    v.clause(gap >= 2.0, "gap " + num(gap, 3) + " sigma");
  }
  return v;
}

// Counts distinct endpoints of every word of length <= n over the generators.
std::size_t brute_ball(const Group& g, std::size_t n) {
  const auto gens = g.standard_generators();
  std::set<std::string> seen{g.identity().key()};
  std::vector<Element> layer{g.identity()};
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<Element> next;
    next.reserve(layer.size() * gens.size());
    for (const auto& x : layer)
      for (const auto& s : gens) {
        Element y = g.mul(x, s);
        seen.insert(y.key());
        next.push_back(std::move(y));
      }
    layer = std::move(next);
  }
  return seen.size();
}

Element random_word(const Group& g, std::mt19937_64& rng) {
  const auto gens = g.standard_generators();
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<std::size_t> pick(0, gens.size() - 1);
  Element x = g.identity();
  for (int i = len(rng); i > 0; --i) x = g.mul(x, gens[pick(rng)]);
  return x;
}

Verdict group_algebra() {
  Verdict v;
  std::vector<Group> kinds = {
      Z(1),
      Z(3),
      Group::make(GroupSpec::cyclic_group(7)),
      Group::make(GroupSpec::infinite_dihedral()),
      Group::make(GroupSpec::free_group(2)),
      Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(1))),
      Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(3), GroupSpec::integer_lattice(2))),
  };
  std::mt19937_64 rng(10);
  for (const auto& g : kinds) {
    std::size_t failures = 0;
    for (int i = 0; i < 10'000; ++i) {
      Element a = random_word(g, rng), b = random_word(g, rng), c = random_word(g, rng);
      failures += !(g.mul(g.mul(a, b), c) == g.mul(a, g.mul(b, c)));
      failures += !(g.mul(a, g.identity()) == a && g.mul(g.identity(), a) == a);
      failures += !g.mul(a, g.inv(a)).is_identity() || !g.mul(g.inv(a), a).is_identity();
      // canonical keys: equal elements reached by different products share a key
      failures += g.mul(g.mul(a, b), g.inv(b)).key() != a.key();
      failures += !(g.parse_element(g.format(a)) == a);
      if (g.is_wreath()) {
        Group base = g.base_group();
        failures += !(g.project_to_base(g.mul(a, b)) == base.mul(g.project_to_base(a), g.project_to_base(b)));
      }
    }
    v.clause(failures == 0, g.name() + " " + std::to_string(failures) + " failures");
  }
  std::vector<Group> ball_groups = {Z(2), Z(3), Group::make(GroupSpec::infinite_dihedral()),
                                    Group::make(GroupSpec::free_group(2))};
  for (const auto& g : ball_groups) {
    std::size_t mismatches = 0;
    for (std::size_t n = 0; n <= 6; ++n) mismatches += ball_size(GeneratingSet::standard(g), n) != brute_ball(g, n);
    v.clause(mismatches == 0, "ball " + g.name() + " n<=6 " + std::to_string(mismatches) + " mismatches");
  }
  return v;
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0: no runtime clause
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "escape probability of SRW on Z^3", 120, escape_cubic},
      {2, "biased walk on Z, expected returns", 30, biased_line},
      {3, "escape discontinuity along power-law truncations", 180, power_law_discontinuity},
      {4, "entropy laws on deficit-free profiles", 0, entropy_laws},
      {5, "fixed-n entropy continuity on Z/2 wr Z^3", 300, lamplighter_continuity},
      {6, "heat-kernel comparison pipeline", 120, comparison_pipeline},
      {7, "exact coarse identities at micro scale", 10, coarse_identities},
      {8, "plug-in entropy consistency", 30, plugin_consistency},
      {9, "tail visit probability decreases", 60, tail_visits},
      {10, "group algebra and ball sizes", 0, group_algebra},
  };
  // criterion 4 audits the profiles of criterion 5 as well, so it runs last
  const std::vector<std::size_t> order = {0, 1, 2, 4, 5, 6, 7, 8, 9, 3};
  std::vector<std::string> lines(criteria.size());
  int failed = 0;
  for (std::size_t idx : order) {
    const Criterion& c = criteria[idx];
    auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.clause(false, std::string("threw: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0) v.clause(secs <= c.budget_s, "runtime " + num(secs, 3) + " s <= " + num(c.budget_s) + " s");
    std::string line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" + c.name + "):";
    for (std::size_t i = 0; i < v.notes.size(); ++i) line += (i ? "; " : " ") + v.notes[i];
    if (c.budget_s == 0) line += "; runtime " + num(secs, 3) + " s";
    lines[idx] = line;
    failed += !v.pass;
    std::fprintf(stderr, "[done] criterion %d in %.1f s\n", c.id, secs);
  }
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
