#pragma once

// Config-driven experiment runs: dispatch, hypothesis audit, report/CSV
// output written atomically, and plot-ready series emission.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "rwg/audit.hpp"
#include "rwg/chung_fuchs.hpp"
#include "rwg/coarse.hpp"
#include "rwg/config.hpp"
#include "rwg/entropy_lab.hpp"
#include "rwg/heat_kernel.hpp"
#include "rwg/walk.hpp"

namespace rwg {

inline constexpr const char* kToolVersion = "rwg 0.1.0";

struct Axis {
  std::string label;
  std::string unit;
};

struct Series {
  std::string name;
  Axis x;
  Axis y;
  bool has_error = false;
  std::vector<std::vector<double>> rows;  // {x, y} or {x, y, y_err}
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int timing_column = -1;  // excluded from determinism comparisons and the digest

  std::string render(bool with_timing = true) const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      bool first = true;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!with_timing && static_cast<int>(i) == timing_column) continue;
        out += (first ? "" : ",") + cells[i];
        first = false;
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

struct RunReport {
  std::string tool_version = kToolVersion;
  std::string config_digest;
  std::string experiment;
  nlohmann::json config;
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json audit = nlohmann::json::object();
  nlohmann::json timing = nlohmann::json::object();  // wall-clock only; never digested
  std::vector<Series> series;
  CsvTable csv;
  std::string status = "complete";
  std::string error;
  double wall_time_ms = 0.0;
  std::vector<std::string> files;

  const Series* find_series(const std::string& name) const {
    for (const auto& s : series)
      if (s.name == name) return &s;
    return nullptr;
  }

  /// Digest over everything that must be reproducible for a fixed config.
  std::string digest() const {
    nlohmann::json j = {{"config_digest", config_digest}, {"experiment", experiment}, {"results", results},
                        {"audit", audit},                 {"series", series_json()}, {"csv", csv.render(false)},
                        {"status", status}};
    return detail::hex64(detail::fnv1a64(j.dump()));
  }

  nlohmann::json series_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& s : series)
      out[s.name] = {{"x", {{"label", s.x.label}, {"unit", s.x.unit}}},
                     {"y", {{"label", s.y.label}, {"unit", s.y.unit}}},
                     {"has_error", s.has_error},
                     {"rows", s.rows}};
    return out;
  }

  nlohmann::json to_json() const {
    return {{"tool_version", tool_version}, {"config_digest", config_digest}, {"report_digest", digest()},
            {"experiment", experiment},     {"config", config},               {"results", results},
            {"audit", audit},               {"series", series_json()},        {"timing", timing},
            {"status", status},             {"error", error},                 {"wall_time_ms", wall_time_ms}};
  }
};

/// Thrown when a module refuses on a budget; carries the report built so far.
class PartialRunError : public ResourceError {
 public:
  PartialRunError(const ResourceError& cause, std::shared_ptr<RunReport> partial)
      : ResourceError(cause.what(), cause.progress()), partial_(std::move(partial)) {}
  const RunReport& partial() const { return *partial_; }

 private:
  std::shared_ptr<RunReport> partial_;
};

// -- atomic file output ---------------------------------------------------------------

/// Writes through a temp file and a rename. The temp file goes to RWG_SCRATCH
/// when set; a cross-device scratch falls back to a temp file beside the target.
inline void write_atomic(const std::filesystem::path& target, const std::string& content) {
  namespace fs = std::filesystem;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp_name = "." + target.filename().string() + ".tmp." + std::to_string(::getpid());
  auto write_file = [&](const fs::path& p) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + p.string() + " for writing");
    f << content;
    f.close();
    if (!f) throw Error("write failed for " + p.string());
  };
  fs::path beside = target.parent_path() / tmp_name;
  if (const char* scratch = std::getenv("RWG_SCRATCH"); scratch && *scratch) {
    fs::path tmp = fs::path(scratch) / tmp_name;
    fs::create_directories(tmp.parent_path());
    write_file(tmp);
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (!ec) return;
    fs::copy_file(tmp, beside, fs::copy_options::overwrite_existing);
    fs::remove(tmp);
  } else {
    write_file(beside);
  }
  fs::rename(beside, target);
}

// -- experiment runners ---------------------------------------------------------------

namespace detail {

inline std::string fmt(double x) { return shortest_double(x); }
inline std::string fmt(std::size_t x) { return std::to_string(x); }

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline nlohmann::json estimate_json(const EstimateWithCI& e) {
  return {{"method", e.method}, {"point", e.point}, {"std_error", e.std_error}, {"samples", e.samples}};
}

inline nlohmann::json certificate_json(const SemigroupCertificate& c) {
  return {{"certified", c.certified}, {"depth", c.depth}, {"max_depth", c.max_depth}, {"missing", c.missing}};
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, RunReport& report) : cfg_(cfg), r_(report) {}

  void note_deficit(double d) { max_deficit_ = std::max(max_deficit_, d); }

  void audit(const ProbMeasure& mu) {
    r_.audit["nondegeneracy"] = certificate_json(nondegeneracy_witness(mu, 6));
    r_.audit["symmetry"] = certificate_json(symmetry_certificate(mu, 6));
    r_.audit["declared_growth"] = cfg_.group_spec.growth().to_string();
    r_.audit["policy"] = cfg_.policy.to_string();
    r_.audit["step_deficit"] = mu.mass_deficit();
    note_deficit(mu.mass_deficit());
  }

  void finish_audit() { r_.audit["max_truncation_deficit"] = max_deficit_; }

  WalkConfig walk(std::size_t steps, std::uint64_t seed) const {
    WalkConfig w;
    w.steps = steps;
    w.samples = cfg_.scales.samples;
    w.master_seed = seed;
    w.threads = cfg_.threads;
    w.validate();
    return w;
  }

  void escape() {
    const ProbMeasure mu = cfg_.step_measure();
    audit(mu);
    const Scales& s = cfg_.scales;
    r_.csv.header = {"method", "point", "std_error", "samples", "seed", "wall_time_ms"};
    r_.csv.timing_column = 5;
    auto row = [&](const EstimateWithCI& e, double ms) {
      r_.csv.rows.push_back({e.method, fmt(e.point), fmt(e.std_error), fmt(e.samples), std::to_string(cfg_.seed), fmt(ms)});
    };
    nlohmann::json& res = r_.results;

    if (cfg_.group.kind() == GroupKind::lattice) {
      auto t0 = std::chrono::steady_clock::now();
      try {
        ChungFuchsOptions opt;
        opt.grid = s.grid;
        opt.refinements = s.refinements;
        ChungFuchsResult cf = chung_fuchs_escape(mu, opt);
        double ms = elapsed_ms(t0);
        res["chung_fuchs"] = {{"recurrent", cf.recurrent}, {"grids", cf.grids},         {"integrals", cf.integrals},
                              {"extrapolants", cf.extrapolants}, {"integral", cf.integral}, {"note", cf.note},
                              {"estimate", estimate_json(cf.estimate)}};
        r_.timing["chung_fuchs_ms"] = ms;
        EstimateWithCI e = cf.estimate;
        if (cf.recurrent) e = {0.0, 0.0, cf.grids.empty() ? 0 : cf.grids.back(), "chung-fuchs-recurrent"};
        row(e, ms);
      } catch (const UsageError& e) {
        res["chung_fuchs"] = {{"applicable", false}, {"reason", e.what()}};
      }
    } else {
      res["chung_fuchs"] = {{"applicable", false}, {"reason", "quadrature needs an integer lattice"}};
    }

    {
      auto t0 = std::chrono::steady_clock::now();
      std::optional<TailModel> tail;
      const double d = cfg_.dimension();
      nlohmann::json tail_json = nullptr;
      if (d > 2.0 && mu.is_exact() && mu.is_symmetric(1e-15)) {
        const std::size_t hi = s.fit_hi == 0 ? 4 * s.n_max : s.fit_hi;
        KernelProfile prof = sup_kernel_profile(mu, hi, cfg_.policy);
        if (!prof.lower_bound_only()) {
          tail = TailModel{fit_decay_constant(prof, d, s.fit_lo, hi), d};
          tail_json = {{"C", tail->C}, {"d", d}, {"fit_range", {s.fit_lo, hi}}};
        }
      }
      GreenEscape g = escape_from_green(mu, s.n_max, tail, cfg_.policy, cfg_.tolerances.stable_threshold);
      GreenSum gs = green_sum(mu, s.n_max, cfg_.policy);
      note_deficit(gs.deficit);
      double ms = elapsed_ms(t0);
      res["green"] = {{"conclusive", g.conclusive}, {"verdict", g.verdict},       {"lower", g.lower},
                      {"upper", g.upper},           {"partial_sum", g.partial_sum}, {"last_term", g.last_term},
                      {"tail_bound", g.tail_bound}, {"period", g.period},         {"lower_bound_only", g.lower_bound_only},
                      {"tail_model", tail_json},    {"estimate", estimate_json(g.estimate)}};
      r_.timing["green_ms"] = ms;
      if (g.conclusive) row(g.estimate, ms);
      Series ret{"return_probability", {"n", "steps"}, {"mu^{*n}(e)", "probability"}, false, {}};
      Series part{"green_partial_sum", {"n", "steps"}, {"sum_{j<=n} mu^{*j}(e)", "expected visits"}, false, {}};
      double acc = 0.0;
      for (std::size_t n = 0; n < gs.terms.size(); ++n) {
        acc += gs.terms[n];
        ret.rows.push_back({static_cast<double>(n), gs.terms[n]});
        part.rows.push_back({static_cast<double>(n), acc});
      }
      r_.series.push_back(std::move(ret));
      r_.series.push_back(std::move(part));
    }

    {
      EscapeEstimates mc = escape_mc(mu, walk(s.steps, cfg_.seed));
      res["monte_carlo"] = {{"first_return", estimate_json(mc.first_return)},
                            {"range", estimate_json(mc.range)},
                            {"range_corrected", estimate_json(mc.range_corrected)},
                            {"steps", s.steps},
                            {"first_return_bias", "horizon-truncated; biased upward"}};
      r_.timing["monte_carlo_ms"] = mc.wall_time_ms;
      row(mc.first_return, mc.wall_time_ms);
      row(mc.range, mc.wall_time_ms);
      row(mc.range_corrected, mc.wall_time_ms);
    }

    // P(w_l = e for some l in (n0, steps]); start times at or past `steps` are skipped
    std::vector<std::size_t> n0s;
    for (auto n0 : s.n0_list)
      if (n0 < s.steps) n0s.push_back(n0);
    if (!n0s.empty()) {
      auto t0 = std::chrono::steady_clock::now();
      auto tv = tail_visit_profile(mu, {mu.group().identity()}, n0s, walk(s.steps, cfg_.seed));
      r_.timing["tail_visit_ms"] = elapsed_ms(t0);
      Series ser{"tail_visit", {"n0", "steps"}, {"P(visit e after n0)", "probability"}, true, {}};
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < n0s.size(); ++i) {
        rows.push_back({{"n0", n0s[i]}, {"estimate", estimate_json(tv[i])}});
        ser.rows.push_back({static_cast<double>(n0s[i]), tv[i].point, tv[i].std_error});
      }
      res["tail_visit"] = rows;
      r_.series.push_back(std::move(ser));
    }
  }

  void entropy_profile() {
    const ProbMeasure mu = cfg_.step_measure();
    audit(mu);
    EntropyProfile p = avez_profile(mu, cfg_.scales.n_max, cfg_.policy);
    for (const auto& e : p.entries) note_deficit(e.deficit);
    BracketResult b = entropy_bracket(p);
    nlohmann::json bj = nullptr;
    if (b.bracket) bj = {{"lower", b.bracket->lower}, {"upper", b.bracket->upper}, {"n_used", b.bracket->n_used},
                         {"caveat", b.bracket->caveat}};
    r_.results = {{"entries", p.entries.size()},
                  {"requested_n", p.requested_n},
                  {"truncation_marker", p.truncation_marker},
                  {"bracket", bj},
                  {"bracket_diagnostic", b.diagnostic},
                  {"subadditivity_violation", subadditivity_violation(p)},
                  {"monotonicity_violation", monotonicity_violation(p)}};
    r_.csv.header = {"n", "entropy", "deficit"};
    Series h{"entropy_profile", {"n", "steps"}, {"H(mu^{*n})", "nats"}, false, {}};
    Series inc{"entropy_increment", {"n", "steps"}, {"H(mu^{*n}) - H(mu^{*(n-1)})", "nats"}, false, {}};
    double prev = 0.0;
    for (const auto& e : p.entries) {
      r_.csv.rows.push_back({fmt(e.n), fmt(e.entropy), fmt(e.deficit)});
      h.rows.push_back({static_cast<double>(e.n), e.entropy});
      inc.rows.push_back({static_cast<double>(e.n), e.entropy - prev});
      prev = e.entropy;
    }
    r_.series.push_back(std::move(h));
    r_.series.push_back(std::move(inc));
    if (!p.truncation_marker.empty()) throw ResourceError(p.truncation_marker, static_cast<long long>(p.entries.size()));
  }

  void continuity() {
    MeasureFamily fam = cfg_.measure_family();
    audit(fam.limit);
    const std::size_t n_max = cfg_.scales.n_max;
    ContinuityTable t = continuity_experiment(fam, cfg_.scales.k_list, n_max, cfg_.policy);
    SemicontinuityVerdict v = semicontinuity_check(t, cfg_.tolerances.semicontinuity);
    auto upper = [](const ContinuityRow& r) { return r.bracket ? r.bracket->upper : std::nan(""); };
    auto lower = [](const ContinuityRow& r) { return r.bracket ? r.bracket->lower : std::nan(""); };
    nlohmann::json rows = nlohmann::json::array();
    r_.csv.header = {"k", "step_entropy", "tail_entropy", "upper", "lower", "difference_at_n_max"};
    Series diff{"continuity_difference", {"k", "family index"}, {"|H(mu_k^{*n}) - H(mu^{*n})| at n_max", "nats"}, false, {}};
    auto add_row = [&](const ContinuityRow& r) {
      for (const auto& e : r.profile.entries) note_deficit(e.deficit);
      double dn = r.differences.empty() ? std::nan("") : r.differences.back();
      rows.push_back({{"k", r.k}, {"step_entropy", r.step_entropy}, {"tail_entropy", r.tail_entropy},
                      {"upper", upper(r)}, {"lower", lower(r)}, {"differences", r.differences},
                      {"truncation_marker", r.profile.truncation_marker}});
      r_.csv.rows.push_back({fmt(r.k), fmt(r.step_entropy), fmt(r.tail_entropy), fmt(upper(r)), fmt(lower(r)), fmt(dn)});
      if (r.k > 0) diff.rows.push_back({static_cast<double>(r.k), dn});
    };
    add_row(t.limit);
    for (const auto& r : t.rows) add_row(r);
    r_.results = {{"family", t.family},
                  {"group", t.group},
                  {"n_max", t.n_max},
                  {"rows", rows},
                  {"warnings", t.warnings},
                  {"semicontinuity",
                   {{"pass", v.pass},
                    {"margin", v.margin},
                    {"k", v.k},
                    {"n_common", v.n_common},
                    {"entropy_converges", v.entropy_converges},
                    {"notes", v.notes},
                    {"scope", "fixed finite n; consistent with, not a proof of, continuity of the limit"}}}};
    Series h{"entropy_profile", {"n", "steps"}, {"H(mu^{*n}) of the limit measure", "nats"}, false, {}};
    for (const auto& e : t.limit.profile.entries) h.rows.push_back({static_cast<double>(e.n), e.entropy});
    r_.series.push_back(std::move(diff));
    r_.series.push_back(std::move(h));
  }

  void discontinuity_demo() {
    MeasureFamily fam = cfg_.measure_family();
    audit(fam.limit);
    const Scales& s = cfg_.scales;
    r_.csv.header = {"k", "n", "range", "std_error", "range_corrected", "corrected_std_error", "samples", "seed"};
    std::vector<std::size_t> ks = s.k_list;
    const std::size_t limit_k = cfg_.family->kind == FamilySpec::Kind::power_law ? cfg_.family->limit_k : 0;
    nlohmann::json rows = nlohmann::json::array();
    Series esc{"escape_vs_k", {"k", "family index"}, {"R_n/n at the largest n", "probability"}, true, {}};
    std::vector<std::size_t> ns = s.n_list;
    std::sort(ns.begin(), ns.end());
    auto run_member = [&](std::size_t k, const ProbMeasure& m, bool is_limit) {
      note_deficit(m.mass_deficit());
      for (std::size_t n : ns) {
        EscapeEstimates e = escape_mc(m, walk(n, cfg_.seed));
        rows.push_back({{"k", k}, {"limit", is_limit}, {"n", n}, {"range", estimate_json(e.range)},
                        {"range_corrected", estimate_json(e.range_corrected)}});
        r_.csv.rows.push_back({fmt(k), fmt(n), fmt(e.range.point), fmt(e.range.std_error), fmt(e.range_corrected.point),
                               fmt(e.range_corrected.std_error), fmt(e.range.samples), std::to_string(cfg_.seed)});
        if (n == ns.back()) esc.rows.push_back({static_cast<double>(k), e.range.point, e.range.std_error});
      }
    };
    for (std::size_t k : ks) run_member(k, fam.at(k), false);
    run_member(limit_k, fam.limit, true);
    r_.results = {{"family", fam.description}, {"rows", rows}, {"limit_k", limit_k},
                  {"estimator", "range R_n/n; converges to the escape probability"}};
    r_.series.push_back(std::move(esc));
  }

  void heat_kernel_compare() {
    const ProbMeasure mu1 = cfg_.step_measure(), mu2 = cfg_.second_measure();
    audit(mu1);
    const double d = cfg_.dimension();
    ComparisonReport c = verify_comparison(mu1, mu2, d, cfg_.scales.n_max, cfg_.policy);
    auto clause = [](const ClauseVerdict& v) { return nlohmann::json{{"pass", v.pass}, {"margin", v.margin}, {"detail", v.detail}}; };
    r_.results = {{"symmetric", clause(c.symmetric)}, {"dominance", clause(c.dominance)}, {"decay_fit", clause(c.decay_fit)},
                  {"constant", clause(c.constant)},   {"bound", clause(c.bound)},         {"C1", c.C1},
                  {"C1_clamped", c.C1_clamped},       {"C2", c.C2},                       {"all_pass", c.all_pass()},
                  {"dimension", d},                   {"n_max", cfg_.scales.n_max}};
    if (c.trace) r_.results["trace"] = to_json(*c.trace);
    r_.csv.header = {"n", "sup_mu2", "bound", "ratio"};
    Series ratio{"kernel_ratio", {"n", "steps"}, {"sup mu2^{*n} / (C_out n^{-d/2})", "ratio"}, false, {}};
    Series sup{"kernel_sup", {"n", "steps"}, {"max_g mu2^{*n}(g)", "probability"}, false, {}};
    for (std::size_t i = 0; i < c.ratios.size() && c.trace; ++i) {
      double n = static_cast<double>(i + 1);
      double bound = c.trace->C_out * std::pow(n, -d / 2.0);
      double sv = c.ratios[i] * bound;
      r_.csv.rows.push_back({fmt(i + 1), fmt(sv), fmt(bound), fmt(c.ratios[i])});
      ratio.rows.push_back({n, c.ratios[i]});
      sup.rows.push_back({n, sv});
    }
    r_.series.push_back(std::move(ratio));
    r_.series.push_back(std::move(sup));
  }

  void coarse_diagnostics() {
    const ProbMeasure mu = cfg_.step_measure();
    audit(mu);
    const CoarseConfig& cc = *cfg_.coarse;
    const CoarseSpec spec = cfg_.coarse_spec();
    r_.csv.header = {"statistic", "method", "seed", "point", "std_error", "size", "support"};
    nlohmann::json& res = r_.results;
    res["n"] = cc.n;
    Series ex{"coarse_entropy_exact", {"statistic index", "position in the statistics list"}, {"H", "nats"}, false, {}};
    if (cc.mode == "exact" || cc.mode == "both") {
      ExactLaw law = enumerate_exact(mu, cc.statistics, cc.n, spec);
      nlohmann::json ent = nlohmann::json::object();
      for (std::size_t i = 0; i < cc.statistics.size(); ++i) {
        double h = law.entropy({i});
        ent[statistic_name(cc.statistics[i])] = h;
        r_.csv.rows.push_back({statistic_name(cc.statistics[i]), "exact-enumeration", "", fmt(h), "0", fmt(law.words()), ""});
        ex.rows.push_back({static_cast<double>(i), h});
      }
      res["exact"] = {{"entropies", ent}, {"words", law.words()}};
      res["identities"] = identities(law, mu, cc, spec);
      r_.series.push_back(std::move(ex));
    }
    if (cc.mode == "plugin" || cc.mode == "both") {
      nlohmann::json pj = nlohmann::json::array();
      for (std::size_t i = 0; i < cc.statistics.size(); ++i) {
        for (std::size_t s = 0; s < cc.seeds; ++s) {
          std::uint64_t seed = cfg_.seed + s;
          PluginResult p = plugin_partition_entropy(mu, cc.statistics[i], cc.n, spec, walk(cc.n, seed));
          for (const EntropyEstimate* e : {&p.plugin, &p.miller_madow}) {
            r_.csv.rows.push_back({statistic_name(cc.statistics[i]), e->method, std::to_string(seed), fmt(e->point),
                                   fmt(e->std_error), fmt(e->size), fmt(e->support)});
            pj.push_back({{"statistic", statistic_name(cc.statistics[i])}, {"method", e->method}, {"seed", seed},
                          {"point", e->point}, {"std_error", e->std_error}, {"support", e->support},
                          {"low_confidence", e->low_confidence}, {"bias_note", e->bias_note}});
          }
        }
      }
      res["plugin"] = pj;
    }
  }

 private:
  // Checks that hold exactly on any enumerated joint law.
  nlohmann::json identities(const ExactLaw& law, const ProbMeasure& mu, const CoarseConfig& cc, const CoarseSpec& spec) {
    nlohmann::json out = nlohmann::json::object();
    const std::size_t m = cc.statistics.size();
    double chain = 0.0, monotone = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        if (a == b) continue;
        double hab = law.entropy({a, b}), ha = law.entropy({a}), hb = law.entropy({b});
        double cond = law.conditional_entropy({b}, {a});
        chain = std::max(chain, std::abs(hab - ha - cond));
        monotone = std::max(monotone, cond - hb);
      }
    out["chain_rule_max_error"] = chain;
    out["conditioning_max_violation"] = m >= 2 ? monotone : 0.0;
    auto has = [&](Statistic s) {
      for (std::size_t i = 0; i < m; ++i)
        if (cc.statistics[i] == s) return true;
      return false;
    };
    if (has(Statistic::coarse_slices_wreath)) {
      const std::size_t block = spec.N * spec.t0;
      double h_block = shannon_entropy(convolve_power(mu, block, cfg_.policy));
      double lhs = law.entropy({law.position(Statistic::coarse_slices_wreath)});
      double rhs = static_cast<double>(cc.n / block) * h_block;
      out["slice_additivity"] = {{"lhs", lhs}, {"rhs", rhs}, {"error", std::abs(lhs - rhs)}};
    }
    if (has(Statistic::lamps_out_coarse) && has(Statistic::coarse_trajectory) && has(Statistic::bad_increments)) {
      double h = law.conditional_entropy(
          {law.position(Statistic::lamps_out_coarse)},
          {law.position(Statistic::coarse_trajectory), law.position(Statistic::bad_increments)});
      out["outside_lamps_given_trajectory_and_bad"] = h;
    }
    return out;
  }

  const ExperimentConfig& cfg_;
  RunReport& r_;
  double max_deficit_ = 0.0;
};

}  // namespace detail

struct RunOptions {
  std::optional<std::string> output_dir;  // overrides output.dir
  bool write_files = true;
};

inline void write_report_files(RunReport& r, const std::filesystem::path& dir) {
  r.files.clear();
  const std::filesystem::path csv = dir / (r.experiment + ".csv");
  const std::filesystem::path json = dir / "report.json";
  write_atomic(csv, r.csv.render(true));
  r.files.push_back(csv.string());
  r.files.push_back(json.string());
  write_atomic(json, r.to_json().dump(2) + "\n");
}

/// Runs one experiment. A budget refusal still writes the partial report
/// (status "partial") and rethrows it as PartialRunError.
inline RunReport run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  auto report = std::make_shared<RunReport>();
  RunReport& r = *report;
  r.config_digest = cfg.digest();
  r.experiment = experiment_name(cfg.kind);
  r.config = cfg.canonical();
  detail::Runner runner(cfg, r);
  const std::filesystem::path dir = opt.output_dir.value_or(cfg.output_dir);
  auto finish = [&] {
    runner.finish_audit();
    r.wall_time_ms = detail::elapsed_ms(t0);
    if (opt.write_files) write_report_files(r, dir);
  };
  try {
    switch (cfg.kind) {
      case ExperimentKind::escape: runner.escape(); break;
      case ExperimentKind::entropy_profile: runner.entropy_profile(); break;
      case ExperimentKind::continuity: runner.continuity(); break;
      case ExperimentKind::discontinuity_demo: runner.discontinuity_demo(); break;
      case ExperimentKind::heat_kernel_compare: runner.heat_kernel_compare(); break;
      case ExperimentKind::coarse_diagnostics: runner.coarse_diagnostics(); break;
    }
  } catch (const ResourceError& e) {
    r.status = "partial";
    r.error = e.what();
    finish();
    throw PartialRunError(e, report);
  }
  finish();
  return r;
}

// -- series emission ------------------------------------------------------------------

/// Writes one series as a whitespace-separated text file and returns its path.
inline std::filesystem::path emit_series(const nlohmann::json& report, const std::string& which,
                                         const std::filesystem::path& out_dir) {
  std::vector<std::string> available;
  if (report.contains("series") && report["series"].is_object())
    for (auto it = report["series"].begin(); it != report["series"].end(); ++it)
      if (!it.value()["rows"].empty()) available.push_back(it.key());
  if (std::find(available.begin(), available.end(), which) == available.end()) {
    std::string list;
    for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
    throw UsageError("series '" + which + "' not in report; available: " + (list.empty() ? "(none)" : list));
  }
  const nlohmann::json& s = report["series"][which];
  std::ostringstream out;
  out << "# series: " << which << "\n";
  out << "# experiment: " << report.value("experiment", "") << "\n";
  out << "# config_digest: " << report.value("config_digest", "") << "\n";
  out << "# x: " << s["x"]["label"].get<std::string>() << " [" << s["x"]["unit"].get<std::string>() << "]\n";
  out << "# y: " << s["y"]["label"].get<std::string>() << " [" << s["y"]["unit"].get<std::string>() << "]\n";
  const bool err = s.value("has_error", false);
  out << "# columns: x y" << (err ? " y_err" : "") << "\n";
  for (const auto& row : s["rows"]) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ' ';
      out << (row[i].is_null() ? std::string("nan") : shortest_double(row[i].get<double>()));
    }
    out << '\n';
  }
  std::filesystem::path p = out_dir / (which + ".dat");
  write_atomic(p, out.str());
  return p;
}

}  // namespace rwg
