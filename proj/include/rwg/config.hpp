#pragma once

// Experiment configuration: a YAML document with strict key checking,
// materialized defaults and a canonical JSON form used for digesting.

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwg/coarse.hpp"
#include "rwg/errors.hpp"
#include "rwg/family.hpp"
#include "rwg/group.hpp"
#include "rwg/measure.hpp"

namespace rwg {

enum class ExperimentKind { escape, entropy_profile, continuity, discontinuity_demo, heat_kernel_compare, coarse_diagnostics };

inline const std::vector<std::pair<ExperimentKind, std::string>>& experiment_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names = {
      {ExperimentKind::escape, "escape"},
      {ExperimentKind::entropy_profile, "entropy-profile"},
      {ExperimentKind::continuity, "continuity"},
      {ExperimentKind::discontinuity_demo, "discontinuity-demo"},
      {ExperimentKind::heat_kernel_compare, "heat-kernel-compare"},
      {ExperimentKind::coarse_diagnostics, "coarse-diagnostics"},
  };
  return names;
}

inline std::string experiment_name(ExperimentKind k) {
  for (const auto& [kind, name] : experiment_names())
    if (kind == k) return name;
  return "?";
}

struct ConfigIssue {
  int line = 0;  // 1-based; 0 when unknown
  std::string field;
  std::string reason;

  std::string to_string() const {
    return "line " + std::to_string(line) + ": " + field + ": " + reason;
  }
};

/// Thrown by load_config when parse_config reports any issue.
class ConfigErrors : public ConfigError {
 public:
  explicit ConfigErrors(std::vector<ConfigIssue> issues)
      : ConfigError(issues.empty() ? "config" : issues.front().field, summarize(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<ConfigIssue>& issues) {
    std::string s = std::to_string(issues.size()) + " config error(s)";
    for (const auto& i : issues) s += "\n  " + i.to_string();
    return s;
  }
  std::vector<ConfigIssue> issues_;
};

/// How a step law is written in the config; kept textual for the canonical form.
struct MeasureSpec {
  enum class Kind { atoms, uniform, simple_random_walk };
  Kind kind = Kind::simple_random_walk;
  std::vector<std::pair<std::string, std::string>> atoms;  // element text, mass text
  std::vector<std::string> uniform;
  double laziness = 0.0;
};

struct FamilySpec {
  enum class Kind { constant, mixture, power_law };
  enum class Contaminant { point, uniform_powers };
  Kind kind = Kind::mixture;
  Contaminant contaminant = Contaminant::point;
  std::string element;  // contaminant element or power-law generator
  WeightSchedule schedule = WeightSchedule::inverse;
  double schedule_constant = 0.0;
  double alpha = 1.5;
  std::size_t limit_k = 4096;
};

struct Scales {
  std::size_t n_max = 20;
  std::size_t steps = 10000;
  std::size_t samples = 1000;
  std::vector<std::size_t> k_list = {2, 4, 8, 16, 32};
  std::vector<std::size_t> n_list = {1000, 10000};
  std::vector<std::size_t> n0_list = {10, 50, 200};
  std::size_t grid = 64;
  std::size_t refinements = 3;
  std::size_t fit_lo = 1;
  std::size_t fit_hi = 0;  // 0: 4 * n_max
  double dimension = 0.0;  // 0: declared growth degree of the group
};

struct CoarseConfig {
  std::size_t n = 6;
  std::size_t t0 = 2;
  std::size_t N = 1;
  std::size_t n0 = 1;
  std::vector<std::string> L;
  std::vector<std::string> R;
  std::optional<std::vector<std::string>> F;
  std::vector<Statistic> statistics;
  std::string mode = "exact";  // exact | plugin | both
  std::size_t seeds = 1;       // plug-in repetitions, seeds seed .. seed+seeds-1
};

struct Tolerances {
  double stable_threshold = 5e-3;
  double semicontinuity = 1e-9;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::escape;
  GroupSpec group_spec;
  Group group;
  MeasureSpec measure;
  std::optional<MeasureSpec> measure2;
  std::optional<FamilySpec> family;
  Scales scales;
  std::optional<CoarseConfig> coarse;
  TruncationPolicy policy;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  Tolerances tolerances;
  std::string output_dir = "rwg-out";

  ProbMeasure step_measure() const;
  ProbMeasure second_measure() const;
  MeasureFamily measure_family() const;
  CoarseSpec coarse_spec() const;
  double dimension() const;

  nlohmann::json canonical() const;
  std::string digest() const;
};

// -- realization ------------------------------------------------------------------

inline double parse_mass(const std::string& text, const std::string& field) {
  auto parse_one = [&](std::string_view s) {
    s = detail::trim(s);
    std::string str(s);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(str, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != str.size()) throw ConfigError(field, "cannot parse mass '" + text + "'");
    return v;
  };
  auto slash = text.find('/');
  if (slash == std::string::npos) return parse_one(text);
  double num = parse_one(std::string_view(text).substr(0, slash));
  double den = parse_one(std::string_view(text).substr(slash + 1));
  if (den == 0.0) throw ConfigError(field, "zero denominator in mass '" + text + "'");
  return num / den;
}

inline Element parse_config_element(const Group& g, const std::string& text, const std::string& field) {
  try {
    return g.parse_element(text);
  } catch (const Error& e) {
    throw ConfigError(field, "element '" + text + "' does not parse in " + g.name() + ": " + e.what());
  }
}

inline ProbMeasure realize_measure(const Group& g, const MeasureSpec& m, const std::string& field) {
  switch (m.kind) {
    case MeasureSpec::Kind::simple_random_walk:
      if (!(m.laziness >= 0.0 && m.laziness < 1.0)) throw ConfigError(field + ".laziness", "must lie in [0, 1)");
      return simple_random_walk(g, m.laziness);
    case MeasureSpec::Kind::uniform: {
      std::vector<Element> pts;
      for (std::size_t i = 0; i < m.uniform.size(); ++i)
        pts.push_back(parse_config_element(g, m.uniform[i], field + ".uniform[" + std::to_string(i) + "]"));
      try {
        return uniform_measure(pts);
      } catch (const ValidationError& e) {
        throw ConfigError(field, e.what());
      }
    }
    case MeasureSpec::Kind::atoms: {
      std::vector<std::pair<Element, double>> pairs;
      for (std::size_t i = 0; i < m.atoms.size(); ++i) {
        std::string f = field + ".atoms[" + std::to_string(i) + "]";
        pairs.emplace_back(parse_config_element(g, m.atoms[i].first, f + ".element"),
                           parse_mass(m.atoms[i].second, f + ".mass"));
      }
      try {
        return make_measure(g, pairs);
      } catch (const ValidationError& e) {
        throw ConfigError(field, e.what());
      }
    }
  }
  throw ConfigError(field, "unknown measure kind");
}

inline ProbMeasure ExperimentConfig::step_measure() const { return realize_measure(group, measure, "measure"); }

inline ProbMeasure ExperimentConfig::second_measure() const {
  if (!measure2) throw UsageError("config has no measure2");
  return realize_measure(group, *measure2, "measure2");
}

inline MeasureFamily ExperimentConfig::measure_family() const {
  if (!family) throw UsageError("config has no family");
  const FamilySpec& f = *family;
  if (f.kind == FamilySpec::Kind::power_law)
    return power_law_family(parse_config_element(group, f.element, "family.element"), f.alpha, f.limit_k);
  ProbMeasure mu = step_measure();
  if (f.kind == FamilySpec::Kind::constant) return constant_family(mu);
  Element g = parse_config_element(group, f.element, "family.element");
  if (f.contaminant == FamilySpec::Contaminant::point)
    return point_mixture_family(mu, g, f.schedule, f.schedule_constant);
  return uniform_powers_mixture_family(mu, g, f.schedule, f.schedule_constant);
}

inline CoarseSpec ExperimentConfig::coarse_spec() const {
  if (!coarse) throw UsageError("config has no coarse section");
  if (!group.is_wreath()) throw ConfigError("coarse", "coarse diagnostics need a wreath product group");
  const CoarseConfig& c = *coarse;
  CoarseSpec s;
  s.t0 = c.t0;
  s.N = c.N;
  s.n0 = c.n0;
  const Group lamp = group.lamp_group(), base = group.base_group();
  for (std::size_t i = 0; i < c.L.size(); ++i)
    s.L.push_back(parse_config_element(lamp, c.L[i], "coarse.L[" + std::to_string(i) + "]"));
  for (std::size_t i = 0; i < c.R.size(); ++i)
    s.R.push_back(parse_config_element(base, c.R[i], "coarse.R[" + std::to_string(i) + "]"));
  if (c.F) {
    s.F.emplace();
    for (std::size_t i = 0; i < c.F->size(); ++i)
      s.F->push_back(parse_config_element(base, (*c.F)[i], "coarse.F[" + std::to_string(i) + "]"));
  }
  s.validate(group);
  return s;
}

inline double ExperimentConfig::dimension() const {
  if (scales.dimension > 0.0) return scales.dimension;
  GrowthDegree g = group_spec.growth();
  return g.exponential ? 0.0 : static_cast<double>(g.degree);
}

// -- canonical form -----------------------------------------------------------------

namespace detail {

inline nlohmann::json group_json(const GroupSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
    case GroupKind::lattice: j = {{"kind", "lattice"}, {"dim", s.dim}}; break;
    case GroupKind::cyclic: j = {{"kind", "cyclic"}, {"modulus", s.modulus}}; break;
    case GroupKind::dihedral: j = {{"kind", "dihedral"}}; break;
    case GroupKind::free_group: j = {{"kind", "free"}, {"rank", s.rank}}; break;
    case GroupKind::wreath: j = {{"kind", "wreath"}, {"lamp", group_json(*s.lamp)}, {"base", group_json(*s.base)}}; break;
  }
  j["growth"] = s.growth().to_string();
  return j;
}

inline nlohmann::json measure_json(const MeasureSpec& m) {
  switch (m.kind) {
    case MeasureSpec::Kind::simple_random_walk: return {{"simple_random_walk", {{"laziness", m.laziness}}}};
    case MeasureSpec::Kind::uniform: return {{"uniform", m.uniform}};
    case MeasureSpec::Kind::atoms: {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& [e, w] : m.atoms) a.push_back({{"element", e}, {"mass", w}});
      return {{"atoms", a}};
    }
  }
  return nullptr;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// nlohmann objects keep keys sorted, so the dump is independent of the
/// order fields were written in.
inline nlohmann::json ExperimentConfig::canonical() const {
  nlohmann::json j;
  j["experiment"] = experiment_name(kind);
  j["group"] = detail::group_json(group_spec);
  j["measure"] = detail::measure_json(measure);
  if (measure2) j["measure2"] = detail::measure_json(*measure2);
  if (family) {
    const FamilySpec& f = *family;
    nlohmann::json fj;
    switch (f.kind) {
      case FamilySpec::Kind::constant: fj["kind"] = "constant"; break;
      case FamilySpec::Kind::mixture:
        fj["kind"] = "mixture";
        fj["contaminant"] = f.contaminant == FamilySpec::Contaminant::point ? "point" : "uniform-powers";
        fj["element"] = f.element;
        fj["schedule"] = schedule_name(f.schedule);
        if (f.schedule == WeightSchedule::constant) fj["weight"] = f.schedule_constant;
        break;
      case FamilySpec::Kind::power_law:
        fj["kind"] = "power-law";
        fj["element"] = f.element;
        fj["alpha"] = f.alpha;
        fj["limit_k"] = f.limit_k;
        break;
    }
    j["family"] = fj;
  }
  const Scales& s = scales;
  j["scales"] = {{"n_max", s.n_max},     {"steps", s.steps},   {"samples", s.samples},
                 {"k_list", s.k_list},   {"n_list", s.n_list}, {"n0_list", s.n0_list},
                 {"grid", s.grid},       {"refinements", s.refinements},
                 {"fit_range", {s.fit_lo, s.fit_hi == 0 ? 4 * s.n_max : s.fit_hi}},
                 {"dimension", dimension()}};
  if (coarse) {
    const CoarseConfig& c = *coarse;
    std::vector<std::string> stats;
    for (auto st : c.statistics) stats.push_back(statistic_name(st));
    j["coarse"] = {{"n", c.n}, {"t0", c.t0}, {"N", c.N},         {"n0", c.n0},       {"L", c.L},
                   {"R", c.R}, {"statistics", stats}, {"mode", c.mode}, {"seeds", c.seeds}};
    j["coarse"]["F"] = c.F ? nlohmann::json(*c.F) : nlohmann::json(nullptr);
  }
  j["policy"] = policy.to_string();
  j["seed"] = seed;
  j["tolerances"] = {{"stable_threshold", tolerances.stable_threshold}, {"semicontinuity", tolerances.semicontinuity}};
  j["output"] = {{"dir", output_dir}};
  return j;
}

/// The thread count only affects speed, so it stays out of the digest.
inline std::string ExperimentConfig::digest() const { return detail::hex64(detail::fnv1a64(canonical().dump())); }

// -- YAML parsing -------------------------------------------------------------------

namespace detail {

class ConfigReader {
 public:
  std::vector<ConfigIssue> issues;

  static int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

  void add(const YAML::Node& n, const std::string& field, const std::string& reason) {
    issues.push_back({line_of(n), field, reason});
  }

  /// Rejects unknown and duplicate keys; returns false when `n` is not a mapping.
  bool check_map(const YAML::Node& n, const std::string& field, const std::set<std::string>& allowed) {
    if (!n.IsMap()) {
      add(n, field, "expected a mapping");
      return false;
    }
    std::set<std::string> seen;
    for (auto it = n.begin(); it != n.end(); ++it) {
      std::string key = it->first.Scalar();
      std::string path = field.empty() ? key : field + "." + key;
      if (!seen.insert(key).second) add(it->first, path, "duplicate field");
      if (!allowed.count(key)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        add(it->first, path, "unknown field (allowed: " + list + ")");
      }
    }
    return true;
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& field) {
    if (!n.IsScalar()) throw ConfigError(field, "expected a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field, "cannot convert '" + n.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& n, const std::string& field) {
    long long v = scalar<long long>(n, field);
    if (v < 0) throw ConfigError(field, "must be non-negative");
    return static_cast<std::size_t>(v);
  }

  std::vector<std::string> strings(const YAML::Node& n, const std::string& field) {
    if (!n.IsSequence()) throw ConfigError(field, "expected a list");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<std::string>(n[i], field + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<std::size_t> counts(const YAML::Node& n, const std::string& field) {
    if (!n.IsSequence()) throw ConfigError(field, "expected a list");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(count(n[i], field + "[" + std::to_string(i) + "]"));
    return out;
  }

  /// Runs `f`, turning a thrown error into an issue located at `n`.
  template <class F>
  void guarded(const YAML::Node& n, const std::string& field, F&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      issues.push_back({line_of(n), e.field(), strip_field(e.what(), e.field())});
    } catch (const Error& e) {
      add(n, field, e.what());
    }
  }

  static std::string strip_field(const std::string& what, const std::string& field) {
    std::string prefix = field + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
  }

  GroupSpec group(const YAML::Node& n, const std::string& field) {
    if (n.IsScalar()) {
      try {
        return parse_group_spec(n.Scalar());
      } catch (const ConfigError& e) {
        throw ConfigError(field, e.what());
      }
    }
    if (!check_map(n, field, {"kind", "dim", "modulus", "rank", "lamp", "base", "growth"}))
      throw ConfigError(field, "invalid group record");
    if (!n["kind"]) throw ConfigError(field + ".kind", "missing");
    std::string kind = scalar<std::string>(n["kind"], field + ".kind");
    GroupSpec s;
    auto forbid = [&](std::initializer_list<const char*> keys) {
      for (const char* k : keys)
        if (n[k]) throw ConfigError(field + "." + k, "not applicable to kind " + kind);
    };
    if (kind == "lattice") {
      forbid({"modulus", "rank", "lamp", "base"});
      s = GroupSpec::integer_lattice(n["dim"] ? scalar<int>(n["dim"], field + ".dim") : 1);
    } else if (kind == "cyclic") {
      forbid({"dim", "rank", "lamp", "base"});
      if (!n["modulus"]) throw ConfigError(field + ".modulus", "missing");
      long long m = scalar<long long>(n["modulus"], field + ".modulus");
      if (m < 1) throw ConfigError(field + ".modulus", "cyclic modulus must be >= 1");
      s = GroupSpec::cyclic_group(static_cast<std::uint64_t>(m));
    } else if (kind == "dihedral") {
      forbid({"dim", "modulus", "rank", "lamp", "base"});
      s = GroupSpec::infinite_dihedral();
    } else if (kind == "free") {
      forbid({"dim", "modulus", "lamp", "base"});
      s = GroupSpec::free_group(n["rank"] ? scalar<int>(n["rank"], field + ".rank") : 2);
    } else if (kind == "wreath") {
      forbid({"dim", "modulus", "rank"});
      if (!n["lamp"]) throw ConfigError(field + ".lamp", "missing");
      if (!n["base"]) throw ConfigError(field + ".base", "missing");
      s = GroupSpec::wreath_product(group(n["lamp"], field + ".lamp"), group(n["base"], field + ".base"));
    } else {
      throw ConfigError(field + ".kind", "unknown group kind '" + kind + "' (lattice, cyclic, dihedral, free, wreath)");
    }
    if (n["growth"]) {
      std::string g = scalar<std::string>(n["growth"], field + ".growth");
      if (g == "exponential") {
        s.declared_growth = GrowthDegree{true, 0};
      } else {
        int d = 0;
        try {
          d = std::stoi(g);
        } catch (const std::exception&) {
          throw ConfigError(field + ".growth", "expected an integer degree or 'exponential'");
        }
        s.declared_growth = GrowthDegree{false, d};
      }
    }
    s.validate(field);
    return s;
  }

  MeasureSpec measure(const YAML::Node& n, const std::string& field) {
    if (!check_map(n, field, {"atoms", "uniform", "simple_random_walk"})) throw ConfigError(field, "invalid measure");
    int forms = (n["atoms"] ? 1 : 0) + (n["uniform"] ? 1 : 0) + (n["simple_random_walk"] ? 1 : 0);
    if (forms != 1) throw ConfigError(field, "give exactly one of atoms, uniform, simple_random_walk");
    MeasureSpec m;
    if (n["simple_random_walk"]) {
      m.kind = MeasureSpec::Kind::simple_random_walk;
      const YAML::Node s = n["simple_random_walk"];
      if (s.IsMap()) {
        check_map(s, field + ".simple_random_walk", {"laziness"});
        if (s["laziness"]) m.laziness = scalar<double>(s["laziness"], field + ".simple_random_walk.laziness");
      } else if (!s.IsNull() && !(s.IsScalar() && (s.Scalar() == "true" || s.Scalar().empty()))) {
        throw ConfigError(field + ".simple_random_walk", "expected a mapping with optional laziness");
      }
    } else if (n["uniform"]) {
      m.kind = MeasureSpec::Kind::uniform;
      m.uniform = strings(n["uniform"], field + ".uniform");
    } else {
      m.kind = MeasureSpec::Kind::atoms;
      const YAML::Node a = n["atoms"];
      if (!a.IsSequence()) throw ConfigError(field + ".atoms", "expected a list");
      for (std::size_t i = 0; i < a.size(); ++i) {
        std::string f = field + ".atoms[" + std::to_string(i) + "]";
        if (!check_map(a[i], f, {"element", "mass"})) continue;
        if (!a[i]["element"] || !a[i]["mass"]) throw ConfigError(f, "needs element and mass");
        m.atoms.emplace_back(scalar<std::string>(a[i]["element"], f + ".element"),
                             scalar<std::string>(a[i]["mass"], f + ".mass"));
      }
    }
    return m;
  }

  FamilySpec family(const YAML::Node& n) {
    if (!check_map(n, "family", {"kind", "contaminant", "element", "schedule", "weight", "alpha", "limit_k"}))
      throw ConfigError("family", "invalid family");
    FamilySpec f;
    std::string kind = n["kind"] ? scalar<std::string>(n["kind"], "family.kind") : "mixture";
    if (kind == "constant") {
      f.kind = FamilySpec::Kind::constant;
    } else if (kind == "mixture") {
      f.kind = FamilySpec::Kind::mixture;
      std::string c = n["contaminant"] ? scalar<std::string>(n["contaminant"], "family.contaminant") : "point";
      if (c == "point") f.contaminant = FamilySpec::Contaminant::point;
      else if (c == "uniform-powers") f.contaminant = FamilySpec::Contaminant::uniform_powers;
      else throw ConfigError("family.contaminant", "expected point or uniform-powers");
      std::string s = n["schedule"] ? scalar<std::string>(n["schedule"], "family.schedule") : "1/k";
      if (s == "1/k") f.schedule = WeightSchedule::inverse;
      else if (s == "1/log2(k+1)") f.schedule = WeightSchedule::inverse_log2;
      else if (s == "constant") f.schedule = WeightSchedule::constant;
      else throw ConfigError("family.schedule", "expected 1/k, 1/log2(k+1) or constant");
      if (f.schedule == WeightSchedule::constant) {
        if (!n["weight"]) throw ConfigError("family.weight", "constant schedule needs a weight");
        f.schedule_constant = scalar<double>(n["weight"], "family.weight");
        if (!(f.schedule_constant >= 0.0 && f.schedule_constant <= 1.0))
          throw ConfigError("family.weight", "must lie in [0, 1]");
      }
    } else if (kind == "power-law") {
      f.kind = FamilySpec::Kind::power_law;
      if (n["alpha"]) f.alpha = scalar<double>(n["alpha"], "family.alpha");
      if (!(f.alpha > 0.0)) throw ConfigError("family.alpha", "must be positive");
      if (n["limit_k"]) f.limit_k = count(n["limit_k"], "family.limit_k");
      if (f.limit_k < 1) throw ConfigError("family.limit_k", "must be >= 1");
    } else {
      throw ConfigError("family.kind", "expected constant, mixture or power-law");
    }
    if (f.kind != FamilySpec::Kind::constant) {
      if (!n["element"]) throw ConfigError("family.element", "missing");
      f.element = scalar<std::string>(n["element"], "family.element");
    }
    return f;
  }

  void scales(const YAML::Node& n, Scales& s) {
    if (!check_map(n, "scales", {"n_max", "steps", "samples", "k_list", "n_list", "n0_list", "grid", "refinements",
                                 "fit_range", "dimension"}))
      return;
    auto one = [&](const char* key, auto&& f) {
      if (n[key]) guarded(n[key], std::string("scales.") + key, f);
    };
    one("n_max", [&] { s.n_max = count(n["n_max"], "scales.n_max"); });
    one("steps", [&] { s.steps = count(n["steps"], "scales.steps"); });
    one("samples", [&] { s.samples = count(n["samples"], "scales.samples"); });
    one("k_list", [&] { s.k_list = counts(n["k_list"], "scales.k_list"); });
    one("n_list", [&] { s.n_list = counts(n["n_list"], "scales.n_list"); });
    one("n0_list", [&] { s.n0_list = counts(n["n0_list"], "scales.n0_list"); });
    one("grid", [&] { s.grid = count(n["grid"], "scales.grid"); });
    one("refinements", [&] { s.refinements = count(n["refinements"], "scales.refinements"); });
    one("dimension", [&] { s.dimension = scalar<double>(n["dimension"], "scales.dimension"); });
    one("fit_range", [&] {
      auto r = counts(n["fit_range"], "scales.fit_range");
      if (r.size() != 2 || r[0] < 1 || r[1] < r[0]) throw ConfigError("scales.fit_range", "expected [lo, hi] with 1 <= lo <= hi");
      s.fit_lo = r[0];
      s.fit_hi = r[1];
    });
  }

  CoarseConfig coarse(const YAML::Node& n) {
    if (!check_map(n, "coarse", {"n", "t0", "N", "n0", "L", "R", "F", "statistics", "mode", "seeds"}))
      throw ConfigError("coarse", "invalid coarse record");
    CoarseConfig c;
    if (n["n"]) c.n = count(n["n"], "coarse.n");
    if (n["t0"]) c.t0 = count(n["t0"], "coarse.t0");
    if (n["N"]) c.N = count(n["N"], "coarse.N");
    if (n["n0"]) c.n0 = count(n["n0"], "coarse.n0");
    if (n["seeds"]) c.seeds = count(n["seeds"], "coarse.seeds");
    if (!n["L"]) throw ConfigError("coarse.L", "missing");
    if (!n["R"]) throw ConfigError("coarse.R", "missing");
    c.L = strings(n["L"], "coarse.L");
    c.R = strings(n["R"], "coarse.R");
    if (n["F"]) c.F = strings(n["F"], "coarse.F");
    if (n["statistics"]) {
      for (const auto& s : strings(n["statistics"], "coarse.statistics")) {
        try {
          c.statistics.push_back(parse_statistic(s));
        } catch (const Error& e) {
          throw ConfigError("coarse.statistics", e.what());
        }
      }
    } else {
      for (const auto& [s, name] : statistic_names()) c.statistics.push_back(s);
    }
    if (n["mode"]) c.mode = scalar<std::string>(n["mode"], "coarse.mode");
    if (c.mode != "exact" && c.mode != "plugin" && c.mode != "both")
      throw ConfigError("coarse.mode", "expected exact, plugin or both");
    if (c.t0 < 1 || c.N < 1 || c.n0 < 1 || c.n < 1) throw ConfigError("coarse", "n, t0, N and n0 must be >= 1");
    if (c.seeds < 1) throw ConfigError("coarse.seeds", "must be >= 1");
    return c;
  }

  TruncationPolicy policy(const YAML::Node& n) {
    if (!check_map(n, "policy", {"mode", "threshold", "max_atoms", "budget"})) throw ConfigError("policy", "invalid policy");
    std::string mode = n["mode"] ? scalar<std::string>(n["mode"], "policy.mode") : "exact";
    TruncationPolicy p;
    if (mode == "exact") {
      p = TruncationPolicy::exact(n["budget"] ? count(n["budget"], "policy.budget") : 5'000'000);
    } else if (mode == "mass-threshold") {
      if (!n["threshold"]) throw ConfigError("policy.threshold", "missing");
      p = TruncationPolicy::mass_threshold_at(scalar<double>(n["threshold"], "policy.threshold"));
    } else if (mode == "support-cap") {
      if (!n["max_atoms"]) throw ConfigError("policy.max_atoms", "missing");
      p = TruncationPolicy::support_cap(count(n["max_atoms"], "policy.max_atoms"));
    } else {
      throw ConfigError("policy.mode", "expected exact, mass-threshold or support-cap");
    }
    return p;
  }
};

}  // namespace detail

struct ParseOutcome {
  std::optional<ExperimentConfig> config;
  std::vector<ConfigIssue> issues;

  bool ok() const { return config.has_value(); }
};

/// Validates everything it can and reports every problem found, each with
/// the 1-based line of the offending node.
inline ParseOutcome parse_config(const std::string& text) {
  ParseOutcome out;
  detail::ConfigReader rd;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    out.issues.push_back({e.mark.line + 1, "config", e.msg});
    return out;
  }
  if (!root.IsMap()) {
    out.issues.push_back({1, "config", "expected a mapping at the top level"});
    return out;
  }
  ExperimentConfig c;
  rd.check_map(root, "", {"experiment", "group", "measure", "measure2", "family", "scales", "coarse", "policy", "seed",
                          "threads", "tolerances", "output"});

  auto required = [&](const char* key) {
    if (!root[key]) {
      rd.issues.push_back({1, key, "missing required field"});
      return false;
    }
    return true;
  };

  if (required("experiment")) {
    rd.guarded(root["experiment"], "experiment", [&] {
      std::string k = rd.scalar<std::string>(root["experiment"], "experiment");
      bool found = false;
      for (const auto& [kind, name] : experiment_names())
        if (name == k) {
          c.kind = kind;
          found = true;
        }
      if (!found)
        throw ConfigError("experiment", "unknown experiment kind '" + k +
                                            "' (escape, entropy-profile, continuity, discontinuity-demo, "
                                            "heat-kernel-compare, coarse-diagnostics)");
    });
  }
  bool group_ok = false;
  if (required("group")) {
    rd.guarded(root["group"], "group", [&] {
      c.group_spec = rd.group(root["group"], "group");
      c.group = Group::make(c.group_spec);
      group_ok = true;
    });
  }
  if (root["measure"]) rd.guarded(root["measure"], "measure", [&] { c.measure = rd.measure(root["measure"], "measure"); });
  if (root["measure2"]) rd.guarded(root["measure2"], "measure2", [&] { c.measure2 = rd.measure(root["measure2"], "measure2"); });
  if (root["family"]) rd.guarded(root["family"], "family", [&] { c.family = rd.family(root["family"]); });
  if (root["scales"]) rd.scales(root["scales"], c.scales);
  if (root["coarse"]) rd.guarded(root["coarse"], "coarse", [&] { c.coarse = rd.coarse(root["coarse"]); });
  if (root["policy"]) rd.guarded(root["policy"], "policy", [&] { c.policy = rd.policy(root["policy"]); });
  if (root["seed"]) rd.guarded(root["seed"], "seed", [&] { c.seed = rd.scalar<std::uint64_t>(root["seed"], "seed"); });
  if (root["threads"]) rd.guarded(root["threads"], "threads", [&] { c.threads = rd.count(root["threads"], "threads"); });
  if (root["tolerances"]) {
    const YAML::Node t = root["tolerances"];
    if (rd.check_map(t, "tolerances", {"stable_threshold", "semicontinuity"})) {
      if (t["stable_threshold"])
        rd.guarded(t["stable_threshold"], "tolerances.stable_threshold", [&] {
          c.tolerances.stable_threshold = rd.scalar<double>(t["stable_threshold"], "tolerances.stable_threshold");
        });
      if (t["semicontinuity"])
        rd.guarded(t["semicontinuity"], "tolerances.semicontinuity", [&] {
          c.tolerances.semicontinuity = rd.scalar<double>(t["semicontinuity"], "tolerances.semicontinuity");
        });
    }
  }
  if (root["output"]) {
    const YAML::Node o = root["output"];
    if (rd.check_map(o, "output", {"dir"}) && o["dir"])
      rd.guarded(o["dir"], "output.dir", [&] { c.output_dir = rd.scalar<std::string>(o["dir"], "output.dir"); });
  }

  // Cross-field checks need a parsed group and a clean first pass.
  if (group_ok && rd.issues.empty()) {
    auto at = [&](const char* key) { return root[key] ? root[key] : root; };
    rd.guarded(at("measure"), "measure", [&] {
      if (c.kind != ExperimentKind::discontinuity_demo || !c.family) (void)c.step_measure();
    });
    if (c.measure2) rd.guarded(at("measure2"), "measure2", [&] { (void)c.second_measure(); });
    if (c.family) rd.guarded(at("family"), "family", [&] { (void)c.measure_family().at(1); });
    if (c.coarse) rd.guarded(at("coarse"), "coarse", [&] { (void)c.coarse_spec(); });
    const Scales& s = c.scales;
    if (s.n_max < 1) rd.issues.push_back({detail::ConfigReader::line_of(root["scales"] ? root["scales"] : root), "scales.n_max", "must be >= 1"});
    if (s.samples < 1) rd.issues.push_back({detail::ConfigReader::line_of(root["scales"] ? root["scales"] : root), "scales.samples", "must be >= 1"});
    if (s.steps < 1) rd.issues.push_back({detail::ConfigReader::line_of(root["scales"] ? root["scales"] : root), "scales.steps", "must be >= 1"});
    for (auto k : s.k_list)
      if (k < 1) rd.issues.push_back({detail::ConfigReader::line_of(root["scales"] ? root["scales"] : root), "scales.k_list", "family indices must be >= 1"});
    switch (c.kind) {
      case ExperimentKind::continuity:
        if (!c.family) rd.issues.push_back({1, "family", "continuity needs a family"});
        break;
      case ExperimentKind::discontinuity_demo:
        if (!c.family) rd.issues.push_back({1, "family", "discontinuity-demo needs a family"});
        break;
      case ExperimentKind::heat_kernel_compare:
        if (!c.measure2) rd.issues.push_back({1, "measure2", "heat-kernel-compare needs measure2"});
        if (c.dimension() <= 0.0)
          rd.issues.push_back({detail::ConfigReader::line_of(root["scales"] ? root["scales"] : root), "scales.dimension",
                               "needs a polynomial growth degree or an explicit dimension"});
        break;
      case ExperimentKind::coarse_diagnostics:
        if (!c.coarse) rd.issues.push_back({1, "coarse", "coarse-diagnostics needs a coarse section"});
        break;
      default: break;
    }
  }
  out.issues = std::move(rd.issues);
  if (out.issues.empty()) out.config = std::move(c);
  return out;
}

inline ExperimentConfig load_config(const std::string& text) {
  ParseOutcome p = parse_config(text);
  if (!p.ok()) throw ConfigErrors(p.issues);
  return std::move(*p.config);
}

}  // namespace rwg
