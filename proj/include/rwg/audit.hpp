#pragma once

// Finite-depth certificates for hypotheses that concern the semigroup
// generated by a support: non-degeneracy and symmetry.

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "rwg/measure.hpp"

namespace rwg {

struct SemigroupCertificate {
  bool certified = false;
  std::size_t depth = 0;            // word length at which every target was reached
  std::size_t max_depth = 0;
  std::vector<std::string> missing; // formatted targets not reached
};

/// Searches products s_1 ... s_j (j <= max_depth) of support atoms for every target.
inline SemigroupCertificate semigroup_reaches(const ProbMeasure& mu, const std::vector<Element>& targets,
                                              std::size_t max_depth = 6, std::size_t budget = 2'000'000) {
  const Group& g = mu.group();
  SemigroupCertificate c;
  c.max_depth = max_depth;
  std::unordered_set<std::string, KeyHash> want;
  for (const auto& t : targets) want.insert(t.key());
  std::unordered_set<std::string, KeyHash> seen;
  std::vector<Element> frontier;
  for (const auto& a : mu.atoms())
    if (seen.insert(a.element.key()).second) frontier.push_back(a.element);
  for (std::size_t depth = 1; depth <= max_depth; ++depth) {
    for (const auto& x : frontier) want.erase(x.key());
    if (want.empty()) {
      c.certified = true;
      c.depth = depth;
      return c;
    }
    if (depth == max_depth) break;
    std::vector<Element> next;
    for (const auto& x : frontier)
      for (const auto& a : mu.atoms()) {
        Element y = g.mul(x, a.element);
        if (seen.insert(y.key()).second) next.push_back(std::move(y));
      }
    if (seen.size() > budget) break;
    frontier = std::move(next);
  }
  for (const auto& t : targets)
    if (want.count(t.key())) c.missing.push_back(g.format(t));
  return c;
}

/// The support generates the whole group as a semigroup when it reaches
/// every standard generator.
inline SemigroupCertificate nondegeneracy_witness(const ProbMeasure& mu, std::size_t max_depth = 6) {
  return semigroup_reaches(mu, mu.group().standard_generators(), max_depth);
}

/// The generated semigroup is symmetric when it contains every inverse of a support atom.
inline SemigroupCertificate symmetry_certificate(const ProbMeasure& mu, std::size_t max_depth = 6) {
  std::vector<Element> inverses;
  for (const auto& a : mu.atoms()) inverses.push_back(mu.group().inv(a.element));
  return semigroup_reaches(mu, inverses, max_depth);
}

}  // namespace rwg
