#pragma once

// Concrete measure families k -> mu_k with an explicit limit.

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/measure.hpp"

namespace rwg {

enum class WeightSchedule { inverse, inverse_log2, constant };

inline double schedule_weight(WeightSchedule s, std::size_t k, double constant = 0.0) {
  switch (s) {
    case WeightSchedule::inverse: return 1.0 / static_cast<double>(k);
    case WeightSchedule::inverse_log2: return 1.0 / std::log2(static_cast<double>(k) + 1.0);
    case WeightSchedule::constant: return constant;
  }
  return 0.0;
}

inline std::string schedule_name(WeightSchedule s) {
  switch (s) {
    case WeightSchedule::inverse: return "1/k";
    case WeightSchedule::inverse_log2: return "1/log2(k+1)";
    case WeightSchedule::constant: return "constant";
  }
  return "?";
}

inline MeasureFamily constant_family(const ProbMeasure& mu) {
  return {"constant", mu, [mu](std::size_t) { return mu; }};
}

/// mu_k = (1 - w_k) mu + w_k delta_g.
inline MeasureFamily point_mixture_family(const ProbMeasure& mu, const Element& g, WeightSchedule s,
                                          double constant = 0.0) {
  ProbMeasure delta = point_mass(g);
  return {"mixture(point " + mu.group().format(g) + ", " + schedule_name(s) + ")", mu,
          [mu, delta, s, constant](std::size_t k) { return mix(mu, delta, schedule_weight(s, k, constant)); }};
}

/// Uniform law on g, g^2, ..., g^k; requires these to be distinct.
inline ProbMeasure uniform_powers(const Element& g, std::size_t k) {
  const Group grp = g.group();
  std::vector<Element> pts;
  std::unordered_set<std::string> keys;
  Element x = g;
  for (std::size_t i = 0; i < k; ++i) {
    if (!keys.insert(x.key()).second) throw ValidationError("uniform_powers: element has finite order");
    pts.push_back(x);
    x = grp.mul(x, g);
  }
  return uniform_measure(pts);
}

/// mu_k = (1 - w_k) mu + w_k uniform{g, ..., g^k}. With w_k = 1/log2(k+1)
/// the contaminant's entropy contribution does not vanish.
inline MeasureFamily uniform_powers_mixture_family(const ProbMeasure& mu, const Element& g, WeightSchedule s,
                                                   double constant = 0.0) {
  return {"mixture(uniform powers of " + mu.group().format(g) + ", " + schedule_name(s) + ")", mu,
          [mu, g, s, constant](std::size_t k) { return mix(mu, uniform_powers(g, k), schedule_weight(s, k, constant)); }};
}

/// Law proportional to (1 + |m|)^{-alpha} on g^m, |m| <= k.
inline ProbMeasure truncated_power_law(const Element& g, double alpha, std::size_t k) {
  const Group grp = g.group();
  std::vector<std::pair<Element, double>> pairs;
  double z = 0.0;
  for (std::size_t m = 0; m <= k; ++m) z += (m == 0 ? 1.0 : 2.0) * std::pow(1.0 + static_cast<double>(m), -alpha);
  pairs.emplace_back(grp.identity(), 1.0 / z);
  Element pos = g, neg = grp.inv(g), ginv = grp.inv(g);
  for (std::size_t m = 1; m <= k; ++m) {
    double w = std::pow(1.0 + static_cast<double>(m), -alpha) / z;
    pairs.emplace_back(pos, w);
    pairs.emplace_back(neg, w);
    pos = grp.mul(pos, g);
    neg = grp.mul(neg, ginv);
  }
  return make_measure(grp, pairs);
}

/// Power-law truncations at k; the limit is represented by the truncation at `limit_k`.
inline MeasureFamily power_law_family(const Element& g, double alpha, std::size_t limit_k) {
  return {"power-law(alpha=" + shortest_double(alpha) + ", limit proxy k=" + std::to_string(limit_k) + ")",
          truncated_power_law(g, alpha, limit_k), [g, alpha](std::size_t k) { return truncated_power_law(g, alpha, k); }};
}

}  // namespace rwg
