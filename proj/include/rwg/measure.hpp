#pragma once

// Finitely supported probability measures on a Group.
//
// Atoms are kept sorted by canonical key. Mass discarded by truncation is
// tracked in `mass_deficit`, so atoms-sum + deficit == 1 holds after every
// operation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/group.hpp"

namespace rwg {

struct Atom {
  Element element;
  double mass = 0.0;
};

struct TruncationPolicy {
  enum class Mode { exact, mass_threshold, support_cap };
  Mode mode = Mode::exact;
  double threshold = 0.0;           // mass_threshold: drop atoms below this mass
  std::size_t max_atoms = 0;        // support_cap: keep the heaviest atoms
  std::size_t exact_budget = 5'000'000;  // exact: refuse larger supports

  static TruncationPolicy exact(std::size_t budget = 5'000'000) {
    TruncationPolicy p;
    p.exact_budget = budget;
    return p;
  }
  static TruncationPolicy mass_threshold_at(double eps) {
    TruncationPolicy p;
    p.mode = Mode::mass_threshold;
    p.threshold = eps;
    p.validate();
    return p;
  }
  static TruncationPolicy support_cap(std::size_t atoms) {
    TruncationPolicy p;
    p.mode = Mode::support_cap;
    p.max_atoms = atoms;
    p.validate();
    return p;
  }

  bool is_exact() const { return mode == Mode::exact; }

  void validate() const {
    if (mode == Mode::mass_threshold && !(threshold >= 0.0 && threshold <= 1e-3))
      throw ConfigError("policy.threshold", "truncation threshold must lie in [0, 1e-3]");
    if (mode == Mode::support_cap && max_atoms < 1) throw ConfigError("policy.max_atoms", "must be >= 1");
  }

  std::string to_string() const {
    switch (mode) {
      case Mode::exact: return "exact";
      case Mode::mass_threshold: {
        std::ostringstream s;
        s << "mass-threshold(" << threshold << ")";
        return s.str();
      }
      case Mode::support_cap: return "support-cap(" + std::to_string(max_atoms) + ")";
    }
    return "?";
  }
};

class ProbMeasure {
 public:
  ProbMeasure() = default;

  const Group& group() const { return group_; }
  std::span<const Atom> atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double mass_deficit() const { return deficit_; }
  bool is_exact() const { return deficit_ == 0.0; }

  double mass_of_key(std::string_view key) const {
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), key,
                               [](const Atom& a, std::string_view k) { return a.element.key() < k; });
    return (it != atoms_.end() && it->element.key() == key) ? it->mass : 0.0;
  }
  double mass_of(const Element& g) const { return mass_of_key(g.key()); }

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.mass;
    return s;
  }

  bool is_symmetric(double tol = 0.0) const {
    for (const auto& a : atoms_)
      if (std::abs(mass_of(group_.inv(a.element)) - a.mass) > tol) return false;
    return true;
  }

  /// Builds from atoms already merged, positive and sorted by key.
  static ProbMeasure from_sorted(Group g, std::vector<Atom> atoms, double deficit) {
    ProbMeasure m;
    m.group_ = std::move(g);
    m.atoms_ = std::move(atoms);
    m.deficit_ = std::clamp(deficit, 0.0, 1.0);
    return m;
  }

  friend bool operator==(const ProbMeasure& a, const ProbMeasure& b) {
    if (!(a.group_ == b.group_) || a.atoms_.size() != b.atoms_.size() || a.deficit_ != b.deficit_) return false;
    for (std::size_t i = 0; i < a.atoms_.size(); ++i)
      if (a.atoms_[i].element.key() != b.atoms_[i].element.key() || a.atoms_[i].mass != b.atoms_[i].mass) return false;
    return true;
  }

 private:
  Group group_;
  std::vector<Atom> atoms_;
  double deficit_ = 0.0;
};

namespace detail {

inline void sort_atoms(std::vector<Atom>& v) {
  std::sort(v.begin(), v.end(), [](const Atom& a, const Atom& b) { return a.element.key() < b.element.key(); });
}

// Applies the policy to a freshly merged, key-sorted atom list; returns discarded mass.
inline double truncate(std::vector<Atom>& atoms, const TruncationPolicy& policy) {
  switch (policy.mode) {
    case TruncationPolicy::Mode::exact:
      if (atoms.size() > policy.exact_budget)
        throw ResourceError("exact support of " + std::to_string(atoms.size()) + " atoms exceeds budget " +
                                std::to_string(policy.exact_budget),
                            static_cast<long long>(atoms.size()));
      return 0.0;
    case TruncationPolicy::Mode::mass_threshold: {
      double dropped = 0.0;
      std::vector<Atom> kept;
      kept.reserve(atoms.size());
      for (auto& a : atoms) {
        if (a.mass < policy.threshold) dropped += a.mass;
        else kept.push_back(std::move(a));
      }
      atoms = std::move(kept);
      return dropped;
    }
    case TruncationPolicy::Mode::support_cap: {
      if (atoms.size() <= policy.max_atoms) return 0.0;
      std::vector<std::size_t> order(atoms.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      // heaviest first; ties keep the smaller key
      std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return atoms[i].mass > atoms[j].mass; });
      std::vector<char> keep(atoms.size(), 0);
      for (std::size_t i = 0; i < policy.max_atoms; ++i) keep[order[i]] = 1;
      double dropped = 0.0;
      std::vector<Atom> kept;
      kept.reserve(policy.max_atoms);
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (keep[i]) kept.push_back(std::move(atoms[i]));
        else dropped += atoms[i].mass;
      }
      atoms = std::move(kept);
      return dropped;
    }
  }
  return 0.0;
}

// Accumulates (element, mass) contributions keyed by canonical key.
class AtomAccumulator {
 public:
  void reserve(std::size_t n) {
    index_.reserve(n);
    atoms_.reserve(n);
  }
  void add(Element g, double mass) {
    auto [it, fresh] = index_.try_emplace(g.key(), atoms_.size());
    if (fresh) atoms_.push_back({std::move(g), mass});
    else atoms_[it->second].mass += mass;
  }
  std::vector<Atom> take_sorted() {
    index_.clear();
    std::vector<Atom> out = std::move(atoms_);
    sort_atoms(out);
    return out;
  }

 private:
  std::unordered_map<std::string, std::size_t, KeyHash> index_;
  std::vector<Atom> atoms_;
};

}  // namespace detail

/// Merges duplicates and drops zero masses. The total must be 1 within 1e-9;
/// the result is renormalized to exactly that total.
inline ProbMeasure make_measure(const Group& g, const std::vector<std::pair<Element, double>>& pairs) {
  detail::AtomAccumulator acc;
  double total = 0.0;
  for (const auto& [e, m] : pairs) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("negative or non-finite mass " + std::to_string(m));
    if (!(e.group() == g)) throw UsageError("atom from " + e.group().name() + " in a measure on " + g.name());
    total += m;
    if (m > 0.0) acc.add(e, m);
  }
  std::vector<Atom> atoms = acc.take_sorted();
  if (atoms.empty()) throw ValidationError("measure has empty support");
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream s;
    s << std::setprecision(17) << "masses sum to " << total << ", expected 1 within 1e-9";
    throw ValidationError(s.str());
  }
  for (auto& a : atoms) a.mass /= total;
  return ProbMeasure::from_sorted(g, std::move(atoms), 0.0);
}

inline ProbMeasure point_mass(const Element& a) { return make_measure(a.group(), {{a, 1.0}}); }

inline ProbMeasure uniform_measure(const std::vector<Element>& support) {
  if (support.empty()) throw ValidationError("uniform measure on an empty set");
  std::vector<std::pair<Element, double>> pairs;
  for (const auto& e : support) pairs.emplace_back(e, 1.0 / static_cast<double>(support.size()));
  return make_measure(support.front().group(), pairs);
}

/// Simple random walk on the standard generators, optionally lazy.
inline ProbMeasure simple_random_walk(const Group& g, double laziness = 0.0) {
  auto gens = g.standard_generators();
  if (!(laziness >= 0.0 && laziness < 1.0)) throw ConfigError("measure.laziness", "must lie in [0,1)");
  std::vector<std::pair<Element, double>> pairs;
  if (laziness > 0.0) pairs.emplace_back(g.identity(), laziness);
  for (const auto& s : gens) pairs.emplace_back(s, (1.0 - laziness) / static_cast<double>(gens.size()));
  return make_measure(g, pairs);
}

/// Uniform law on wreath increments: a lamp move a at the identity, a base
/// move b, and a then b. On Z/2 wr Z^3 this has 1 + 6 + 6 = 13 atoms.
inline ProbMeasure switch_walk(const Group& g) {
  if (!g.is_wreath()) throw UsageError("switch_walk requires a wreath product");
  Group base = g.base_group();
  std::vector<Element> support;
  auto lamps = g.lamp_group().standard_generators();
  for (const auto& a : lamps) support.push_back(g.embed_lamp(a, base.identity()));
  for (const auto& b : base.standard_generators()) {
    support.push_back(g.embed_base(b));
    for (const auto& a : lamps) support.push_back(g.wreath_element({{base.identity(), a}}, b));
  }
  return uniform_measure(support);
}

/// Convex combination (1-w)·mu + w·nu of two exact measures.
inline ProbMeasure mix(const ProbMeasure& mu, const ProbMeasure& nu, double w) {
  if (!(mu.group() == nu.group())) throw UsageError("mix: measures on different groups");
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("mixture weight outside [0,1]");
  std::vector<std::pair<Element, double>> pairs;
  for (const auto& a : mu.atoms()) pairs.emplace_back(a.element, (1.0 - w) * a.mass);
  for (const auto& a : nu.atoms()) pairs.emplace_back(a.element, w * a.mass);
  double deficit = (1.0 - w) * mu.mass_deficit() + w * nu.mass_deficit();
  detail::AtomAccumulator acc;
  for (auto& [e, m] : pairs)
    if (m > 0.0) acc.add(e, m);
  return ProbMeasure::from_sorted(mu.group(), acc.take_sorted(), deficit);
}

inline ProbMeasure convolve(const ProbMeasure& mu, const ProbMeasure& nu,
                            const TruncationPolicy& policy = TruncationPolicy::exact()) {
  if (!(mu.group() == nu.group())) throw UsageError("convolve: measures on different groups");
  const Group& g = mu.group();
  detail::AtomAccumulator acc;
  acc.reserve(mu.size() * nu.size() / 2 + 1);
  for (const auto& a : mu.atoms())
    for (const auto& b : nu.atoms()) acc.add(g.mul(a.element, b.element), a.mass * b.mass);
  std::vector<Atom> atoms = acc.take_sorted();
  double dropped = detail::truncate(atoms, policy);
  double dm = mu.mass_deficit(), dn = nu.mass_deficit();
  return ProbMeasure::from_sorted(g, std::move(atoms), dm + dn - dm * dn + dropped);
}

/// mu^{*n}, folded left: ((mu * mu) * mu) ...
inline ProbMeasure convolve_power(const ProbMeasure& mu, std::size_t n,
                                  const TruncationPolicy& policy = TruncationPolicy::exact()) {
  ProbMeasure acc = point_mass(mu.group().identity());
  for (std::size_t i = 0; i < n; ++i) acc = convolve(acc, mu, policy);
  return acc;
}

/// Calls `visit(n, mu^{*n})` for n = 1..n_max without keeping earlier powers.
template <class Visit>
void for_each_power(const ProbMeasure& mu, std::size_t n_max, const TruncationPolicy& policy, Visit&& visit) {
  ProbMeasure acc = mu;
  for (std::size_t n = 1; n <= n_max; ++n) {
    if (n > 1) acc = convolve(acc, mu, policy);
    visit(n, static_cast<const ProbMeasure&>(acc));
  }
}

inline ProbMeasure reflect(const ProbMeasure& mu) {
  std::vector<Atom> atoms;
  atoms.reserve(mu.size());
  for (const auto& a : mu.atoms()) atoms.push_back({mu.group().inv(a.element), a.mass});
  detail::sort_atoms(atoms);
  return ProbMeasure::from_sorted(mu.group(), std::move(atoms), mu.mass_deficit());
}

/// Shannon entropy in nats over the retained atoms.
inline double shannon_entropy(const ProbMeasure& mu) {
  double h = 0.0;
  for (const auto& a : mu.atoms()) h -= a.mass * std::log(a.mass);
  return h;
}

struct EntropyValue {
  double nats = 0.0;
  double mass_deficit = 0.0;
  bool uncertain() const { return mass_deficit > 0.0; }
};

inline EntropyValue entropy_with_deficit(const ProbMeasure& mu) { return {shannon_entropy(mu), mu.mass_deficit()}; }

/// Sum over the union of supports of |mu(g) - nu(g)|.
inline double tv_distance(const ProbMeasure& mu, const ProbMeasure& nu) {
  if (!(mu.group() == nu.group())) throw UsageError("tv_distance: measures on different groups");
  auto a = mu.atoms(), b = nu.atoms();
  std::size_t i = 0, j = 0;
  double s = 0.0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].element.key() < b[j].element.key())) s += a[i++].mass;
    else if (i == a.size() || b[j].element.key() < a[i].element.key()) s += b[j++].mass;
    else s += std::abs(a[i++].mass - b[j++].mass);
  }
  return s;
}

enum class PushforwardKind { base_projection };

inline ProbMeasure pushforward(const ProbMeasure& mu, PushforwardKind = PushforwardKind::base_projection) {
  if (!mu.group().is_wreath()) throw UsageError("pushforward to base requires a wreath product, got " + mu.group().name());
  detail::AtomAccumulator acc;
  for (const auto& a : mu.atoms()) acc.add(a.element.position(), a.mass);
  return ProbMeasure::from_sorted(mu.group().base_group(), acc.take_sorted(), mu.mass_deficit());
}

/// Entropy contribution of atoms outside F.
inline double entropy_tail(const ProbMeasure& mu, const std::vector<Element>& f) {
  std::unordered_set<std::string, KeyHash> inside;
  for (const auto& e : f) inside.insert(e.key());
  double h = 0.0;
  for (const auto& a : mu.atoms())
    if (!inside.count(a.element.key())) h -= a.mass * std::log(a.mass);
  return h;
}

/// A limit measure plus a lazily materialized approximating sequence k >= 1.
struct MeasureFamily {
  std::string description;
  ProbMeasure limit;
  std::function<ProbMeasure(std::size_t)> member;

  ProbMeasure at(std::size_t k) const {
    if (k < 1) throw UsageError("family index must be >= 1");
    ProbMeasure m = member(k);
    if (!(m.group() == limit.group())) throw UsageError("family member on a different group than its limit");
    return m;
  }
};

struct ConvergenceRow {
  std::size_t k = 0;
  double tv_step = 0.0;        // tv(mu_k, mu)
  double tv_power = 0.0;       // tv(mu_k^{*n}, mu^{*n})
  double entropy_step = 0.0;   // |H(mu_k) - H(mu)|
  double entropy_power = 0.0;  // |H(mu_k^{*n}) - H(mu^{*n})|
  double deficit = 0.0;
  bool deficit_flag = false;   // deficit above 1e-6
};

inline std::vector<ConvergenceRow> convergence_report(const MeasureFamily& family, std::size_t k_max, std::size_t n,
                                                      const TruncationPolicy& policy = TruncationPolicy::exact()) {
  if (k_max < 1 || n < 1) throw UsageError("convergence_report needs k_max >= 1 and n >= 1");
  const ProbMeasure& mu = family.limit;
  ProbMeasure mun = convolve_power(mu, n, policy);
  double h = shannon_entropy(mu), hn = shannon_entropy(mun);
  std::vector<ConvergenceRow> rows;
  for (std::size_t k = 1; k <= k_max; ++k) {
    ProbMeasure mk = family.at(k);
    ProbMeasure mkn = convolve_power(mk, n, policy);
    ConvergenceRow r;
    r.k = k;
    r.tv_step = tv_distance(mk, mu);
    r.tv_power = tv_distance(mkn, mun);
    r.entropy_step = std::abs(shannon_entropy(mk) - h);
    r.entropy_power = std::abs(shannon_entropy(mkn) - hn);
    r.deficit = std::max(mkn.mass_deficit(), mun.mass_deficit());
    r.deficit_flag = r.deficit > 1e-6;
    rows.push_back(r);
  }
  return rows;
}

// -- text serialization --------------------------------------------------------

inline std::string shortest_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

inline std::string to_hex(std::string_view bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 15]);
  }
  return out;
}

inline std::string from_hex(std::string_view hex) {
  if (hex.size() % 2) throw ValidationError("odd-length hex key");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ValidationError(std::string("bad hex digit '") + c + "'");
  };
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<char>(nib(hex[2 * i]) * 16 + nib(hex[2 * i + 1]));
  return out;
}

/// Header "# group <spec> deficit <x>", then one "hexkey mass" line per atom.
inline std::string serialize_measure(const ProbMeasure& mu) {
  std::string out = "# group " + mu.group().name() + " deficit " + shortest_double(mu.mass_deficit()) + "\n";
  for (const auto& a : mu.atoms()) out += to_hex(a.element.key()) + " " + shortest_double(a.mass) + "\n";
  return out;
}

inline ProbMeasure deserialize_measure(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# group ", 0) != 0) throw ValidationError("missing measure header");
  std::size_t d = line.rfind(" deficit ");
  if (d == std::string::npos) throw ValidationError("header lacks deficit");
  Group g = make_group(parse_group_spec(line.substr(8, d - 8)));
  double deficit = std::stod(line.substr(d + 9));
  std::vector<Atom> atoms;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw ValidationError("bad atom line '" + line + "'");
    double m = 0.0;
    auto [p, ec] = std::from_chars(line.data() + sp + 1, line.data() + line.size(), m);
    if (ec != std::errc()) throw ValidationError("bad mass in '" + line + "'");
    atoms.push_back({g.decode_key(from_hex(std::string_view(line).substr(0, sp))), m});
  }
  detail::sort_atoms(atoms);
  for (std::size_t i = 1; i < atoms.size(); ++i)
    if (atoms[i].element.key() == atoms[i - 1].element.key()) throw ValidationError("duplicate atom in measure text");
  return ProbMeasure::from_sorted(g, std::move(atoms), deficit);
}

}  // namespace rwg
