#pragma once

// Coarse-grained observables of wreath-product trajectories and the entropy
// of the partitions they induce, by Monte Carlo or exact enumeration.
//
// Index conventions: n steps, coarse spacing t0, J = floor(n/t0) coarse
// instants. Interval I_j covers steps (j-1)t0+1 .. j t0 for j = 1..J, and
// I_final covers J t0 + 1 .. n.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/group.hpp"
#include "rwg/measure.hpp"
#include "rwg/parallel.hpp"
#include "rwg/walk.hpp"

namespace rwg {

struct CoarseSpec {
  std::size_t t0 = 1;
  std::size_t N = 1;
  std::size_t n0 = 1;
  std::vector<Element> L;                 // lamp values allowed in good increments; contains the lamp identity
  std::vector<Element> R;                 // base moves and lamp supports allowed; contains the base identity
  std::optional<std::vector<Element>> F;  // instability window; R^{t0} when absent

  void validate(const Group& g) const {
    if (!g.is_wreath()) throw UsageError("coarse diagnostics need a wreath product, got " + g.name());
    if (t0 < 1) throw ConfigError("coarse.t0", "must be >= 1");
    if (N < 1) throw ConfigError("coarse.N", "must be >= 1");
    if (n0 < 1) throw ConfigError("coarse.n0", "must be >= 1");
    const Group lamp = g.lamp_group(), base = g.base_group();
    for (const auto& x : L)
      if (!(x.group() == lamp)) throw ConfigError("coarse.L", "element not in the lamp group");
    for (const auto& x : R)
      if (!(x.group() == base)) throw ConfigError("coarse.R", "element not in the base group");
    if (std::none_of(L.begin(), L.end(), [](const Element& e) { return e.is_identity(); }))
      throw ConfigError("coarse.L", "must contain the lamp identity");
    if (std::none_of(R.begin(), R.end(), [](const Element& e) { return e.is_identity(); }))
      throw ConfigError("coarse.R", "must contain the base identity");
    if (F)
      for (const auto& x : *F)
        if (!(x.group() == base)) throw ConfigError("coarse.F", "element not in the base group");
  }
};

/// Precomputed key sets for a spec.
class CoarseContext {
 public:
  CoarseContext(const Group& g, CoarseSpec spec) : group_(g), spec_(std::move(spec)) {
    spec_.validate(g);
    base_ = g.base_group();
    for (const auto& x : spec_.L) l_keys_.insert(x.key());
    for (const auto& x : spec_.R) r_keys_.insert(x.key());
    r_power_ = product_set(spec_.R, spec_.t0);
    f_ = spec_.F ? *spec_.F : r_power_;
  }

  const Group& group() const { return group_; }
  const Group& base() const { return base_; }
  const CoarseSpec& spec() const { return spec_; }
  const std::vector<Element>& r_power() const { return r_power_; }
  const std::vector<Element>& f() const { return f_; }

  bool good_increment(const Element& g) const {
    if (!r_keys_.count(g.position().key())) return false;
    for (const auto& e : g.lamps())
      if (!r_keys_.count(e.base.key()) || !l_keys_.count(e.value.key())) return false;
    return true;
  }

 private:
  Group group_;
  Group base_;
  CoarseSpec spec_;
  std::unordered_set<std::string, KeyHash> l_keys_, r_keys_;
  std::vector<Element> r_power_;
  std::vector<Element> f_;
};

inline std::size_t coarse_count(std::size_t n, std::size_t t0) { return n / t0; }

/// (w_{t0}, w_{2 t0}, ..., w_{J t0}); empty when n < t0.
inline std::vector<Element> coarse_trajectory(const Trajectory& t, std::size_t t0) {
  if (t0 < 1) throw UsageError("t0 must be >= 1");
  std::vector<Element> out;
  for (std::size_t j = 1; j * t0 <= t.length(); ++j) out.push_back(t.elements[j * t0]);
  return out;
}

/// Base positions X_0 .. X_n of a wreath trajectory.
inline std::vector<Element> base_path(const Trajectory& t) {
  std::vector<Element> out;
  out.reserve(t.elements.size());
  for (const auto& w : t.elements) out.push_back(project_to_base(w));
  return out;
}

inline std::vector<Element> coarse_base_trajectory(const Trajectory& t, std::size_t t0) {
  std::vector<Element> out;
  for (const auto& w : coarse_trajectory(t, t0)) out.push_back(project_to_base(w));
  return out;
}

struct BadIncrements {
  std::vector<bool> good;                      // per interval I_1..I_J
  std::vector<std::vector<Element>> blocks;    // verbatim increments of bad intervals; empty for good ones
  std::vector<Element> final_block;            // increments of I_final
};

inline BadIncrements classify_increments(const Trajectory& t, const CoarseContext& ctx) {
  const std::size_t t0 = ctx.spec().t0, n = t.length(), J = coarse_count(n, t0);
  BadIncrements b;
  for (std::size_t j = 1; j <= J; ++j) {
    bool good = true;
    for (std::size_t i = (j - 1) * t0; i < j * t0 && good; ++i) good = ctx.good_increment(t.increments[i]);
    b.good.push_back(good);
    if (good) b.blocks.emplace_back();
    else b.blocks.emplace_back(t.increments.begin() + static_cast<std::ptrdiff_t>((j - 1) * t0),
                               t.increments.begin() + static_cast<std::ptrdiff_t>(j * t0));
  }
  b.final_block.assign(t.increments.begin() + static_cast<std::ptrdiff_t>(J * t0), t.increments.end());
  return b;
}

/// Keyed base-element set.
struct BaseSet {
  std::map<std::string, Element> items;

  bool contains(const Element& b) const { return items.count(b.key()) > 0; }
  void insert(const Element& b) { items.emplace(b.key(), b); }
  std::size_t size() const { return items.size(); }
};

/// Union over j = 0 .. coarse_steps-1 of X_{j t0} R^{t0}, where `base` holds X_0..X_n.
inline BaseSet coarse_neighborhood(const std::vector<Element>& base, const CoarseContext& ctx,
                                   std::optional<std::size_t> coarse_steps = std::nullopt) {
  const std::size_t t0 = ctx.spec().t0;
  const std::size_t n = base.size() - 1;
  const std::size_t J = coarse_steps.value_or(coarse_count(n, t0));
  BaseSet out;
  const Group& bg = ctx.base();
  for (std::size_t j = 0; j < J; ++j)
    for (const auto& r : ctx.r_power()) out.insert(bg.mul(base[j * t0], r));
  return out;
}

struct LampSplit {
  std::vector<LampEntry> inside;
  std::vector<LampEntry> outside;
};

inline LampSplit lamp_split(const Element& state, const BaseSet& neighborhood) {
  LampSplit s;
  for (const auto& e : state.lamps()) (neighborhood.contains(e.base) ? s.inside : s.outside).push_back(e);
  return s;
}

/// Lamp value of a wreath element at base position b.
inline Element lamp_at(const Element& w, const Element& b, const Group& lamp) {
  auto lamps = w.lamps();
  auto it = std::lower_bound(lamps.begin(), lamps.end(), b.key(),
                             [](const LampEntry& e, const std::string& k) { return e.base.key() < k; });
  return (it != lamps.end() && it->base.key() == b.key()) ? it->value : lamp.identity();
}

/// Coarse indices j in 0..J with b in X_{j t0} F, grouped by b.
inline std::map<std::string, std::pair<Element, std::vector<std::size_t>>> coarse_cover(
    const std::vector<Element>& base, const CoarseContext& ctx) {
  const std::size_t t0 = ctx.spec().t0, J = coarse_count(base.size() - 1, t0);
  std::map<std::string, std::pair<Element, std::vector<std::size_t>>> cover;
  for (std::size_t j = 0; j <= J; ++j) {
    for (const auto& f : ctx.f()) {
      Element b = ctx.base().mul(base[j * t0], f);
      auto& slot = cover[b.key()];
      if (slot.second.empty() || slot.second.back() != j) {
        slot.first = b;
        slot.second.push_back(j);
      }
    }
  }
  return cover;
}

/// b is unstable when it lies in X_{j t0} F and X_{l t0} F with l > j + n0.
inline BaseSet unstable_points(const std::vector<Element>& base, const CoarseContext& ctx) {
  BaseSet u;
  for (const auto& [key, entry] : coarse_cover(base, ctx)) {
    const auto& js = entry.second;
    if (js.back() > js.front() + ctx.spec().n0) u.insert(entry.first);
  }
  return u;
}

/// { j <= J - n0 : X_{j t0} F meets U }.
inline std::vector<std::size_t> unstable_visits(const std::vector<Element>& base, const CoarseContext& ctx,
                                                const BaseSet& u) {
  const std::size_t t0 = ctx.spec().t0, J = coarse_count(base.size() - 1, t0), n0 = ctx.spec().n0;
  std::vector<std::size_t> out;
  if (J < n0) return out;
  for (std::size_t j = 0; j <= J - n0; ++j) {
    for (const auto& f : ctx.f()) {
      if (u.contains(ctx.base().mul(base[j * t0], f))) {
        out.push_back(j);
        break;
      }
    }
  }
  return out;
}

/// Delta(b, j) for b in U and j = 1..J: the lamp change at b over a good
/// interval I_j, or nullopt (the bad-interval symbol).
struct UnstableIncrements {
  std::vector<Element> points;                          // U in key order
  std::vector<std::vector<std::optional<Element>>> delta;  // [point][j-1]
};

inline UnstableIncrements unstable_increments(const Trajectory& t, const CoarseContext& ctx, const BaseSet& u) {
  const std::size_t t0 = ctx.spec().t0, J = coarse_count(t.length(), t0);
  const Group lamp = ctx.group().lamp_group();
  BadIncrements bad = classify_increments(t, ctx);
  UnstableIncrements out;
  for (const auto& [key, b] : u.items) {
    out.points.push_back(b);
    std::vector<std::optional<Element>> row;
    for (std::size_t j = 1; j <= J; ++j) {
      if (!bad.good[j - 1]) {
        row.emplace_back(std::nullopt);
      } else {
        Element before = lamp_at(t.elements[(j - 1) * t0], b, lamp);
        Element after = lamp_at(t.elements[j * t0], b, lamp);
        row.emplace_back(lamp.mul(lamp.inv(before), after));
      }
    }
    out.delta.push_back(std::move(row));
  }
  return out;
}

// -- statistics and their injective serialization ------------------------------------

enum class Statistic {
  coarse_trajectory,     // base-projected t0-coarse trajectory (full trajectory off wreath groups)
  bad_increments,        // the beta partition
  lamps_out_coarse,      // lamps outside the neighborhood at instants l N t0
  lamps_in_coarse,       // lamps inside the neighborhood at instants l N t0
  unstable_points,
  unstable_visits,
  unstable_increments,
  coarse_slices_wreath,  // (w_{N t0}, w_{2 N t0}, ...) in the wreath product
  endpoint,              // w_n
};

inline const std::vector<std::pair<Statistic, std::string>>& statistic_names() {
  static const std::vector<std::pair<Statistic, std::string>> names = {
      {Statistic::coarse_trajectory, "coarse_trajectory"},
      {Statistic::bad_increments, "bad_increments"},
      {Statistic::lamps_out_coarse, "lamps_out_coarse"},
      {Statistic::lamps_in_coarse, "lamps_in_coarse"},
      {Statistic::unstable_points, "unstable_points"},
      {Statistic::unstable_visits, "unstable_visits"},
      {Statistic::unstable_increments, "unstable_increments"},
      {Statistic::coarse_slices_wreath, "coarse_slices_wreath"},
      {Statistic::endpoint, "endpoint"},
  };
  return names;
}

inline std::string statistic_name(Statistic s) {
  for (const auto& [k, v] : statistic_names())
    if (k == s) return v;
  return "?";
}

inline Statistic parse_statistic(const std::string& name) {
  for (const auto& [k, v] : statistic_names())
    if (v == name) return k;
  std::string all;
  for (const auto& [k, v] : statistic_names()) all += (all.empty() ? "" : ", ") + v;
  throw ConfigError("coarse.statistic", "unknown statistic '" + name + "' (known: " + all + ")");
}

namespace detail {

// Reserved single-byte symbols; element keys start with a kind tag in 1..5.
inline constexpr char kGoodSymbol = static_cast<char>(0xF0);
inline constexpr char kBadSymbol = static_cast<char>(0xF1);
inline constexpr char kBlockTag = static_cast<char>(0xF2);
inline constexpr char kIndexTag = static_cast<char>(0xF3);

class Serializer {
 public:
  void element(const Element& e) {
    append_u32(out_, static_cast<std::uint32_t>(e.key().size()));
    out_ += e.key();
  }
  void count(std::size_t n) { append_u32(out_, static_cast<std::uint32_t>(n)); }
  void index(std::size_t j) {
    out_.push_back(kIndexTag);
    append_u32(out_, static_cast<std::uint32_t>(j));
  }
  void symbol(char c) { out_.push_back(c); }
  void block(const std::vector<Element>& xs) {
    out_.push_back(kBlockTag);
    count(xs.size());
    for (const auto& x : xs) element(x);
  }
  void lamps(const std::vector<LampEntry>& xs) {
    count(xs.size());
    for (const auto& e : xs) {
      element(e.base);
      element(e.value);
    }
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

}  // namespace detail

/// Injective byte encoding of a statistic's realization on one trajectory.
inline std::string serialize_statistic(Statistic s, const Trajectory& t, const CoarseContext& ctx) {
  detail::Serializer out;
  const std::size_t t0 = ctx.spec().t0, n = t.length();
  switch (s) {
    case Statistic::coarse_trajectory: {
      auto xs = coarse_base_trajectory(t, t0);
      out.block(xs);
      break;
    }
    case Statistic::bad_increments: {
      BadIncrements b = classify_increments(t, ctx);
      out.count(b.good.size());
      for (std::size_t j = 0; j < b.good.size(); ++j) {
        if (b.good[j]) out.symbol(detail::kGoodSymbol);
        else out.block(b.blocks[j]);
      }
      out.block(b.final_block);
      break;
    }
    case Statistic::lamps_out_coarse:
    case Statistic::lamps_in_coarse: {
      const std::size_t step = ctx.spec().N * t0;
      auto base = base_path(t);
      out.count(n / step);
      for (std::size_t l = 1; l * step <= n; ++l) {
        BaseSet nb = coarse_neighborhood(base, ctx, l * ctx.spec().N);
        LampSplit split = lamp_split(t.elements[l * step], nb);
        out.lamps(s == Statistic::lamps_out_coarse ? split.outside : split.inside);
      }
      break;
    }
    case Statistic::unstable_points: {
      BaseSet u = unstable_points(base_path(t), ctx);
      out.count(u.size());
      for (const auto& [k, b] : u.items) out.element(b);
      break;
    }
    case Statistic::unstable_visits: {
      auto base = base_path(t);
      auto v = unstable_visits(base, ctx, unstable_points(base, ctx));
      out.count(v.size());
      for (auto j : v) out.index(j);
      break;
    }
    case Statistic::unstable_increments: {
      auto base = base_path(t);
      UnstableIncrements d = unstable_increments(t, ctx, unstable_points(base, ctx));
      out.count(d.points.size());
      for (std::size_t i = 0; i < d.points.size(); ++i) {
        out.element(d.points[i]);
        for (const auto& x : d.delta[i]) {
          if (x) out.element(*x);
          else out.symbol(detail::kBadSymbol);
        }
      }
      break;
    }
    case Statistic::coarse_slices_wreath: {
      out.block(coarse_trajectory(t, ctx.spec().N * t0));
      break;
    }
    case Statistic::endpoint: out.element(t.elements.back()); break;
  }
  return out.take();
}

// -- entropy estimation -------------------------------------------------------------

struct EntropyEstimate {
  double point = 0.0;
  double std_error = 0.0;
  std::string method;  // plug-in, plug-in+miller-madow, exact-enumeration
  std::size_t size = 0;  // samples or enumerated words
  std::size_t support = 0;
  bool low_confidence = false;
  std::string bias_note;
};

struct PluginResult {
  EntropyEstimate plugin;
  EntropyEstimate miller_madow;
};

inline PluginResult plugin_from_counts(const std::unordered_map<std::string, std::size_t>& counts, std::size_t samples) {
  const double n = static_cast<double>(samples);
  std::vector<std::size_t> cs;
  cs.reserve(counts.size());
  for (const auto& [k, c] : counts) cs.push_back(c);
  std::sort(cs.begin(), cs.end());  // fixed summation order
  double h = 0.0, h2 = 0.0;
  std::size_t singletons = 0;
  for (auto c : cs) {
    double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
    h2 += p * std::log(p) * std::log(p);
    if (c == 1) ++singletons;
  }
  PluginResult r;
  r.plugin.point = h;
  r.plugin.std_error = std::sqrt(std::max(0.0, h2 - h * h) / n);
  r.plugin.method = "plug-in";
  r.plugin.size = samples;
  r.plugin.support = cs.size();
  r.plugin.low_confidence = !cs.empty() && static_cast<double>(singletons) > 0.9 * static_cast<double>(cs.size());
  r.plugin.bias_note = "plug-in entropy is biased low";
  r.miller_madow = r.plugin;
  r.miller_madow.point = h + (static_cast<double>(cs.size()) - 1.0) / (2.0 * n);
  r.miller_madow.method = "plug-in+miller-madow";
  r.miller_madow.bias_note = "first-order bias correction (m-1)/(2N)";
  return r;
}

inline PluginResult plugin_partition_entropy(const ProbMeasure& mu, Statistic stat, std::size_t n, const CoarseSpec& spec,
                                             WalkConfig cfg) {
  if (cfg.samples < 100) throw UsageError("plug-in entropy needs at least 100 samples");
  CoarseContext ctx(mu.group(), spec);
  cfg.steps = n;
  std::vector<std::string> values(cfg.samples);
  parallel_for(cfg.samples, cfg.threads,
               [&](std::size_t i) { values[i] = serialize_statistic(stat, sample_path(mu, cfg, i), ctx); });
  std::unordered_map<std::string, std::size_t> counts;
  for (auto& v : values) ++counts[v];
  return plugin_from_counts(counts, cfg.samples);
}

/// Exact joint law of several statistics over all length-n increment words.
class ExactLaw {
 public:
  ExactLaw(std::vector<Statistic> stats, std::vector<std::vector<std::string>> values, std::vector<double> probs,
           std::size_t words)
      : stats_(std::move(stats)), values_(std::move(values)), probs_(std::move(probs)), words_(words) {}

  const std::vector<Statistic>& statistics() const { return stats_; }
  std::size_t words() const { return words_; }

  /// H(A) for the listed statistic positions taken jointly.
  double entropy(const std::vector<std::size_t>& a) const {
    std::unordered_map<std::string, double> law;
    for (std::size_t w = 0; w < probs_.size(); ++w) law[joint_key(w, a)] += probs_[w];
    return entropy_of(law);
  }

  /// H(A | B) = sum_b P(b) H(A | B = b), grouped per conditioning value so a
  /// determined A contributes exactly zero.
  double conditional_entropy(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
    std::unordered_map<std::string, std::unordered_map<std::string, double>> groups;
    for (std::size_t w = 0; w < probs_.size(); ++w) groups[joint_key(w, b)][joint_key(w, a)] += probs_[w];
    double h = 0.0;
    for (const auto& [bk, law] : groups) {
      if (law.size() == 1) continue;
      double pb = 0.0;
      for (const auto& [ak, p] : law) pb += p;
      double hb = 0.0;
      for (const auto& [ak, p] : law) hb -= (p / pb) * std::log(p / pb);
      h += pb * hb;
    }
    return h;
  }

  std::size_t position(Statistic s) const {
    for (std::size_t i = 0; i < stats_.size(); ++i)
      if (stats_[i] == s) return i;
    throw UsageError("statistic " + statistic_name(s) + " not enumerated");
  }

 private:
  std::string joint_key(std::size_t w, const std::vector<std::size_t>& idx) const {
    std::string k;
    for (auto i : idx) {
      append_u32(k, static_cast<std::uint32_t>(values_[w][i].size()));
      k += values_[w][i];
    }
    return k;
  }
  static void append_u32(std::string& s, std::uint32_t v) { detail::append_u32(s, v); }

  // a single realization has entropy exactly 0, whatever rounding did to its mass
  static double entropy_of(const std::unordered_map<std::string, double>& law) {
    if (law.size() <= 1) return 0.0;
    std::vector<double> ps;
    for (const auto& [k, p] : law) ps.push_back(p);
    std::sort(ps.begin(), ps.end());
    double h = 0.0;
    for (double p : ps)
      if (p > 0.0) h -= p * std::log(p);
    return h;
  }

  std::vector<Statistic> stats_;
  std::vector<std::vector<std::string>> values_;  // [word][statistic]
  std::vector<double> probs_;
  std::size_t words_ = 0;
};

inline ExactLaw enumerate_exact(const ProbMeasure& mu, const std::vector<Statistic>& stats, std::size_t n,
                                const CoarseSpec& spec, double budget = 2e7) {
  CoarseContext ctx(mu.group(), spec);
  const double required = std::pow(static_cast<double>(mu.size()), static_cast<double>(n));
  if (required > budget)
    throw ResourceError("exact enumeration needs " + shortest_double(required) + " words, budget " + shortest_double(budget),
                        static_cast<long long>(required));
  const Group& g = mu.group();
  std::vector<std::vector<std::string>> values;
  std::vector<double> probs;
  Trajectory t;
  t.elements.assign(n + 1, g.identity());
  t.increments.assign(n, g.identity());
  std::vector<double> weight(n + 1, 1.0);
  // depth-first over words with shared prefixes
  auto rec = [&](auto&& self, std::size_t depth) -> void {
    if (depth == n) {
      std::vector<std::string> row;
      for (auto s : stats) row.push_back(serialize_statistic(s, t, ctx));
      values.push_back(std::move(row));
      probs.push_back(weight[n]);
      return;
    }
    for (const auto& a : mu.atoms()) {
      t.increments[depth] = a.element;
      t.elements[depth + 1] = g.mul(t.elements[depth], a.element);
      weight[depth + 1] = weight[depth] * a.mass;
      self(self, depth + 1);
    }
  };
  rec(rec, 0);
  const std::size_t words = probs.size();
  return ExactLaw(stats, std::move(values), std::move(probs), words);
}

inline EntropyEstimate exact_partition_entropy(const ProbMeasure& mu, Statistic stat, std::size_t n, const CoarseSpec& spec,
                                               double budget = 2e7) {
  ExactLaw law = enumerate_exact(mu, {stat}, n, spec, budget);
  EntropyEstimate e;
  e.point = law.entropy({0});
  e.method = "exact-enumeration";
  e.size = law.words();
  e.bias_note = "exact";
  return e;
}

}  // namespace rwg
