#pragma once

// Sample paths, range and return statistics, Green sums and tail visits.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/group.hpp"
#include "rwg/lattice_fast.hpp"
#include "rwg/measure.hpp"
#include "rwg/parallel.hpp"
#include "rwg/rng.hpp"

namespace rwg {

struct WalkConfig {
  std::size_t steps = 1000;
  std::size_t samples = 1000;
  std::uint64_t master_seed = 1;
  std::size_t return_horizon = 0;  // first-return window; 0 means `steps`
  std::size_t threads = 0;         // 0: RWG_THREADS or hardware concurrency

  void validate() const {
    if (steps < 1) throw ConfigError("scales.steps", "must be >= 1");
    if (samples < 1) throw ConfigError("scales.samples", "must be >= 1");
    if (return_horizon > steps) throw ConfigError("scales.return_horizon", "must not exceed steps");
  }
  std::size_t horizon() const { return return_horizon == 0 ? steps : return_horizon; }
};

struct Trajectory {
  std::vector<Element> elements;    // w_0 .. w_n
  std::vector<Element> increments;  // g_1 .. g_n
  std::uint64_t seed_tag = 0;

  std::size_t length() const { return increments.size(); }
};

struct EstimateWithCI {
  double point = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::string method;
};

/// Inverse-CDF sampler over atoms in canonical-key order. A measure with a
/// deficit is sampled conditionally on its retained atoms.
class StepSampler {
 public:
  explicit StepSampler(const ProbMeasure& mu) : mu_(&mu) {
    if (mu.size() == 0) throw ValidationError("cannot sample from an empty measure");
    cdf_.reserve(mu.size());
    double s = 0.0;
    for (const auto& a : mu.atoms()) cdf_.push_back(s += a.mass);
  }
  std::size_t draw(double u) const {
    double target = u * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }
  const Element& element(std::size_t i) const { return mu_->atoms()[i].element; }

 private:
  const ProbMeasure* mu_;
  std::vector<double> cdf_;
};

inline Trajectory sample_path(const ProbMeasure& mu, const WalkConfig& cfg, std::size_t index) {
  if (index >= cfg.samples) throw UsageError("sample index out of range");
  StepSampler sampler(mu);
  const Group& g = mu.group();
  Trajectory t;
  t.seed_tag = sample_seed(cfg.master_seed, index);
  t.elements.reserve(cfg.steps + 1);
  t.increments.reserve(cfg.steps);
  t.elements.push_back(g.identity());
  for (std::size_t i = 1; i <= cfg.steps; ++i) {
    const Element& s = sampler.element(sampler.draw(uniform01(t.seed_tag, i)));
    t.increments.push_back(s);
    t.elements.push_back(g.mul(t.elements.back(), s));
  }
  return t;
}

inline std::size_t range_stat(const Trajectory& t) {
  std::unordered_set<std::string, KeyHash> seen;
  for (const auto& w : t.elements) seen.insert(w.key());
  return seen.size();
}

namespace detail {

// Walkers expose key(), advance(atom index) and a key() type usable in hash sets.
class GenericWalker {
 public:
  using Key = std::string;
  explicit GenericWalker(const StepSampler& s, const Group& g) : s_(&s), g_(g), w_(g.identity()) {}
  void reset() { w_ = g_.identity(); }
  void advance(std::size_t atom) { w_ = g_.mul(w_, s_->element(atom)); }
  const Key& key() const { return w_.key(); }
  std::optional<Key> encode(const Element& e) const { return e.key(); }

 private:
  const StepSampler* s_;
  Group g_;
  Element w_;
};

// Integer lattice positions packed into 64 bits with a fixed per-axis bias.
class LatticeWalker {
 public:
  using Key = std::uint64_t;

  static std::optional<LatticeWalker> try_make(const ProbMeasure& mu, std::size_t steps) {
    if (mu.group().kind() != GroupKind::lattice) return std::nullopt;
    int d = mu.group().spec().dim;
    std::int64_t rinf = 0;
    for (const auto& a : mu.atoms())
      for (auto c : a.element.coords()) rinf = std::max<std::int64_t>(rinf, std::abs(c));
    long double reach = static_cast<long double>(rinf) * static_cast<long double>(steps);
    int bits = 1;
    while (bits < 62 && std::ldexp(1.0L, bits) < 2 * reach + 1) ++bits;
    if (bits * d > 64) return std::nullopt;
    LatticeWalker w;
    w.d_ = d;
    w.bits_ = bits;
    w.bias_ = (std::int64_t{1} << (bits - 1));
    for (const auto& a : mu.atoms()) {
      std::vector<std::int64_t> v(a.element.coords().begin(), a.element.coords().end());
      w.steps_.push_back(std::move(v));
    }
    w.pos_.assign(d, 0);
    return w;
  }

  void reset() { std::fill(pos_.begin(), pos_.end(), 0); }
  void advance(std::size_t atom) {
    for (int i = 0; i < d_; ++i) pos_[i] += steps_[atom][i];
  }
  Key key() const { return pack(pos_); }
  std::optional<Key> encode(const Element& e) const {
    auto c = e.coords();
    std::vector<std::int64_t> v(c.begin(), c.end());
    for (auto x : v)
      if (x + bias_ < 0 || x + bias_ >= (std::int64_t{1} << bits_)) return std::nullopt;  // unreachable
    return pack(v);
  }

 private:
  Key pack(const std::vector<std::int64_t>& v) const {
    Key k = 0;
    for (int i = 0; i < d_; ++i) k |= static_cast<Key>(v[i] + bias_) << (bits_ * i);
    return k;
  }

  int d_ = 1;
  int bits_ = 1;
  std::int64_t bias_ = 0;
  std::vector<std::vector<std::int64_t>> steps_;
  std::vector<std::int64_t> pos_;
};

struct SampleStats {
  bool returned = false;           // w_l = e for some 1 <= l <= horizon
  std::size_t range_n = 0;         // R_n
  std::size_t range_quarter = 0;   // R_{floor(n/4)}
  std::size_t last_visit = 0;      // last l in [1, n] with w_l in F; 0 if none
};

template <class Walker>
SampleStats run_sample(Walker& walker, const StepSampler& sampler, const WalkConfig& cfg, std::size_t index,
                       const std::unordered_set<typename Walker::Key>* f_keys, bool want_range) {
  SampleStats st;
  std::uint64_t seed = sample_seed(cfg.master_seed, index);
  walker.reset();
  const typename Walker::Key origin = walker.key();
  std::unordered_set<typename Walker::Key> seen;
  if (want_range) {
    seen.reserve(cfg.steps + 1);
    seen.insert(origin);
  }
  const std::size_t quarter = cfg.steps / 4, horizon = cfg.horizon();
  if (quarter == 0) st.range_quarter = 1;
  for (std::size_t i = 1; i <= cfg.steps; ++i) {
    walker.advance(sampler.draw(uniform01(seed, i)));
    const auto& k = walker.key();
    if (i <= horizon && !st.returned && k == origin) st.returned = true;
    if (want_range) {
      seen.insert(k);
      if (i == quarter) st.range_quarter = seen.size();
    }
    if (f_keys && f_keys->count(k)) st.last_visit = i;
  }
  st.range_n = seen.size();
  return st;
}

// Runs all samples, preferring packed lattice keys when they are exact.
inline std::vector<SampleStats> collect_stats(const ProbMeasure& mu, const WalkConfig& cfg,
                                              const std::vector<Element>* f, bool want_range) {
  cfg.validate();
  StepSampler sampler(mu);
  std::vector<SampleStats> out(cfg.samples);
  auto drive = [&](auto make_walker) {
    auto proto = make_walker();
    using Key = typename decltype(proto)::Key;
    std::unordered_set<Key> f_keys;
    if (f)
      for (const auto& e : *f)
        if (auto k = proto.encode(e)) f_keys.insert(*k);
    parallel_for(cfg.samples, cfg.threads, [&](std::size_t i) {
      auto w = make_walker();
      out[i] = run_sample(w, sampler, cfg, i, f ? &f_keys : nullptr, want_range);
    });
  };
  if (LatticeWalker::try_make(mu, cfg.steps)) {
    drive([&] { return *LatticeWalker::try_make(mu, cfg.steps); });
  } else {
    drive([&] { return GenericWalker(sampler, mu.group()); });
  }
  return out;
}

inline EstimateWithCI mean_estimate(const std::vector<double>& xs, std::string method) {
  EstimateWithCI e;
  e.samples = xs.size();
  e.method = std::move(method);
  double s = 0.0;
  for (double x : xs) s += x;
  e.point = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - e.point) * (x - e.point);
    e.std_error = std::sqrt(v / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

}  // namespace detail

struct EscapeEstimates {
  EstimateWithCI first_return;     // horizon-truncated, biased upward
  EstimateWithCI range;            // mean R_n / n
  EstimateWithCI range_corrected;  // mean of 2 R_n/n - R_{n/4}/(n/4)
  std::uint64_t seed = 0;
  double wall_time_ms = 0.0;
};

/// Monte Carlo escape estimates. The corrected range estimator cancels the
/// leading n^{-1/2} finite-size term of R_n/n for transient lattice walks.
inline EscapeEstimates escape_mc(const ProbMeasure& mu, const WalkConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  auto stats = detail::collect_stats(mu, cfg, nullptr, true);
  const double n = static_cast<double>(cfg.steps);
  const double q = static_cast<double>(std::max<std::size_t>(cfg.steps / 4, 1));
  std::vector<double> esc, rng, corr;
  for (const auto& s : stats) {
    esc.push_back(s.returned ? 0.0 : 1.0);
    rng.push_back(static_cast<double>(s.range_n) / n);
    corr.push_back(2.0 * static_cast<double>(s.range_n) / n - static_cast<double>(s.range_quarter) / q);
  }
  EscapeEstimates r;
  r.first_return = detail::mean_estimate(esc, "first-return");
  double p = r.first_return.point;
  r.first_return.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(esc.size()));
  r.range = detail::mean_estimate(rng, "range");
  r.range_corrected = detail::mean_estimate(corr, "range-corrected");
  r.seed = cfg.master_seed;
  r.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// P(exists l in (n0, steps] with w_l in F) for each n0, on one shared sample set.
inline std::vector<EstimateWithCI> tail_visit_profile(const ProbMeasure& mu, const std::vector<Element>& f,
                                                      const std::vector<std::size_t>& n0s, const WalkConfig& cfg) {
  for (auto n0 : n0s)
    if (n0 >= cfg.steps) throw UsageError("tail_visit_prob needs n0 < steps");
  std::vector<EstimateWithCI> out;
  if (f.empty()) {
    for (std::size_t i = 0; i < n0s.size(); ++i) out.push_back({0.0, 0.0, cfg.samples, "tail-visit"});
    return out;
  }
  auto stats = detail::collect_stats(mu, cfg, &f, false);
  for (auto n0 : n0s) {
    std::size_t hits = 0;
    for (const auto& s : stats) hits += s.last_visit > n0 ? 1 : 0;
    double p = static_cast<double>(hits) / static_cast<double>(stats.size());
    out.push_back({p, std::sqrt(p * (1.0 - p) / static_cast<double>(stats.size())), stats.size(), "tail-visit"});
  }
  return out;
}

inline EstimateWithCI tail_visit_prob(const ProbMeasure& mu, const std::vector<Element>& f, std::size_t n0,
                                      const WalkConfig& cfg) {
  return tail_visit_profile(mu, f, {n0}, cfg).front();
}

// -- Green sums ------------------------------------------------------------------

struct GreenSum {
  double partial_sum = 0.0;
  double last_term = 0.0;
  std::vector<double> terms;  // mu^{*n}(e), n = 0..n_max
  double deficit = 0.0;
  bool lower_bound_only = false;  // truncation lost mass
  std::size_t period = 0;         // gcd of n >= 1 with a positive term; 0 if none

  double last_nonzero_term() const {
    for (std::size_t i = terms.size(); i-- > 1;)
      if (terms[i] > 0.0) return terms[i];
    return 0.0;
  }
};

inline GreenSum green_sum(const ProbMeasure& mu, std::size_t n_max,
                          const TruncationPolicy& policy = TruncationPolicy::exact()) {
  GreenSum r;
  r.terms.push_back(1.0);
  std::optional<SymmetricLatticePowers> fast;
  if (policy.is_exact()) fast = SymmetricLatticePowers::try_make(mu);
  if (fast) {
    for (std::size_t n = 1; n <= n_max; ++n) {
      fast->step();
      r.terms.push_back(fast->return_probability());
    }
  } else if (n_max > 0) {
    const Element e = mu.group().identity();
    for_each_power(mu, n_max, policy, [&](std::size_t, const ProbMeasure& p) {
      r.terms.push_back(p.mass_of(e));
      r.deficit = p.mass_deficit();
    });
  }
  for (double t : r.terms) r.partial_sum += t;
  r.last_term = r.terms.back();
  r.lower_bound_only = r.deficit > 0.0;
  for (std::size_t n = 1; n < r.terms.size(); ++n)
    if (r.terms[n] > 0.0) r.period = std::gcd(r.period, n);
  return r;
}

/// Return-probability tail model mu^{*n}(e) <= C n^{-d/2}.
struct TailModel {
  double C = 0.0;
  double d = 3.0;
};

/// Upper bound on sum_{n > n_max, period | n} C n^{-d/2}; infinite for d <= 2.
inline double period_tail_bound(const TailModel& m, std::size_t n_max, std::size_t period) {
  if (m.d <= 2.0) return std::numeric_limits<double>::infinity();
  if (period == 0) period = 1;
  const double a = m.d / 2.0;
  const std::size_t first = n_max / period + 1;
  const std::size_t last = first + 200'000;
  double s = 0.0;
  for (std::size_t j = last; j >= first; --j) s += std::pow(static_cast<double>(j * period), -a);
  // remaining terms j > last are dominated by the integral from `last`
  s += std::pow(static_cast<double>(period), -a) * std::pow(static_cast<double>(last), 1.0 - a) / (a - 1.0);
  return m.C * s;
}

struct GreenEscape {
  bool conclusive = false;
  EstimateWithCI estimate;
  double lower = 0.0;  // 1/(S + tail)
  double upper = 1.0;  // 1/S
  double partial_sum = 0.0;
  double last_term = 0.0;
  double tail_bound = 0.0;
  std::size_t period = 0;
  bool lower_bound_only = false;
  std::string verdict;
};

/// p_esc = 1/G. Without a tail model the result is conclusive only when the
/// last computed return term is below `stable_threshold`.
inline GreenEscape escape_from_green(const ProbMeasure& mu, std::size_t n_max, std::optional<TailModel> tail,
                                     const TruncationPolicy& policy = TruncationPolicy::exact(),
                                     double stable_threshold = 5e-3) {
  GreenSum g = green_sum(mu, n_max, policy);
  GreenEscape r;
  r.partial_sum = g.partial_sum;
  r.last_term = g.last_nonzero_term();
  r.period = g.period;
  r.lower_bound_only = g.lower_bound_only;
  r.upper = 1.0 / g.partial_sum;
  r.estimate.point = r.upper;
  r.estimate.samples = n_max;
  if (g.period == 0) {
    // the walk never returns: G = 1 exactly
    r.conclusive = true;
    r.lower = r.upper = 1.0;
    r.estimate = {1.0, 0.0, n_max, "green-exact"};
    r.verdict = "never returns";
    return r;
  }
  if (tail) {
    r.tail_bound = period_tail_bound(*tail, n_max, g.period);
    r.lower = std::isfinite(r.tail_bound) ? 1.0 / (g.partial_sum + r.tail_bound) : 0.0;
    r.conclusive = std::isfinite(r.tail_bound) && !g.lower_bound_only;
    r.estimate.std_error = (r.upper - r.lower) / 2.0;
    r.estimate.method = "green-with-tail";
    r.verdict = r.conclusive ? "bracketed" : "tail unbounded";
  } else {
    r.lower = 0.0;
    r.conclusive = r.last_term <= stable_threshold && !g.lower_bound_only;
    r.estimate.std_error = 0.0;
    r.estimate.method = "green-partial";
    r.verdict = r.conclusive ? "partial sum stabilized" : "inconclusive: partial sum not stabilized";
  }
  return r;
}

}  // namespace rwg
