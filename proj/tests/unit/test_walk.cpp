#include <gtest/gtest.h>

#include <cmath>

#include "rwg/heat_kernel.hpp"
#include "rwg/walk.hpp"

using namespace rwg;

namespace {

Group Z(int d = 1) { return Group::make(GroupSpec::integer_lattice(d)); }

ProbMeasure biased(double p) {
  Group z = Z();
  return make_measure(z, {{z.lattice_element({1}), p}, {z.lattice_element({-1}), 1.0 - p}});
}

WalkConfig config(std::size_t steps, std::size_t samples, std::uint64_t seed = 1) {
  WalkConfig c;
  c.steps = steps;
  c.samples = samples;
  c.master_seed = seed;
  return c;
}

// sum_n C(2n, n) (pq)^n, accumulated in log space
double binomial_green(double p, std::size_t n_max) {
  double s = 1.0, q = 1.0 - p;
  for (std::size_t n = 1; 2 * n <= n_max; ++n)
    s += std::exp(std::lgamma(2.0 * n + 1) - 2.0 * std::lgamma(n + 1.0) + n * std::log(p * q));
  return s;
}

}  // namespace

TEST(WalkConfigTest, Validation) {
  EXPECT_THROW(config(0, 1).validate(), ConfigError);
  EXPECT_THROW(config(1, 0).validate(), ConfigError);
  WalkConfig c = config(10, 1);
  c.return_horizon = 11;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SamplePathTest, DegenerateAndDeterministicLaws) {
  Group z = Z();
  Trajectory t = sample_path(point_mass(z.identity()), config(5, 1), 0);
  for (const auto& w : t.elements) EXPECT_TRUE(w.is_identity());
  EXPECT_EQ(range_stat(t), 1u);

  Trajectory d = sample_path(point_mass(z.lattice_element({2})), config(7, 1), 0);
  EXPECT_EQ(d.elements.back(), z.lattice_element({14}));
  EXPECT_EQ(range_stat(d), 8u);

  ProbMeasure srw = simple_random_walk(z);
  Trajectory a = sample_path(srw, config(10, 4, 99), 3), b = sample_path(srw, config(10, 4, 99), 3);
  EXPECT_EQ(a.elements, b.elements);
  EXPECT_EQ(a.seed_tag, b.seed_tag);
  EXPECT_NE(sample_path(srw, config(10, 4, 99), 2).seed_tag, a.seed_tag);
  // w_i = w_{i-1} g_i
  for (std::size_t i = 1; i < a.elements.size(); ++i) EXPECT_EQ(a.elements[i], z.mul(a.elements[i - 1], a.increments[i - 1]));
}

TEST(SamplePathTest, RangeOfAlternatingPath) {
  Group z = Z();
  Trajectory t;
  for (int x : {0, 1, 0, 1}) t.elements.push_back(z.lattice_element({x}));
  EXPECT_EQ(range_stat(t), 2u);
}

TEST(EscapeMcTest, DeterministicDriftEscapes) {
  Group z3 = Z(3);
  EscapeEstimates e = escape_mc(point_mass(z3.lattice_element({1, 0, 0})), config(100, 50));
  EXPECT_EQ(e.first_return.point, 1.0);
  // R_n counts w_0..w_n, so a ray gives (n + 1)/n
  EXPECT_DOUBLE_EQ(e.range.point, 101.0 / 100.0);
  EXPECT_NEAR(e.range_corrected.point, 2.0 * 101.0 / 100.0 - 26.0 / 25.0, 1e-12);
  EXPECT_NEAR(e.range.std_error, 0.0, 1e-12);
}

TEST(EscapeMcTest, RecurrentLineHasVanishingRange) {
  EscapeEstimates e = escape_mc(simple_random_walk(Z()), config(10000, 200));
  EXPECT_LE(e.range.point, 0.05);
}

TEST(EscapeMcTest, BiasedLineMatchesGamblersRuin) {
  // gambler's ruin: a p-biased walk never returns with probability 2p - 1
  EscapeEstimates e = escape_mc(biased(2.0 / 3.0), config(10000, 1000));
  EXPECT_LE(std::abs(e.range.point - 1.0 / 3.0), 3.0 * e.range.std_error + 1e-3);
  EXPECT_LE(std::abs(e.first_return.point - 1.0 / 3.0), 3.0 * e.first_return.std_error);
}

TEST(EscapeMcTest, IndependentOfWorkerCount) {
  ProbMeasure mu = simple_random_walk(Z(3));
  WalkConfig one = config(2000, 64, 5), many = one;
  one.threads = 1;
  many.threads = 4;
  EscapeEstimates a = escape_mc(mu, one), b = escape_mc(mu, many);
  EXPECT_EQ(a.range.point, b.range.point);
  EXPECT_EQ(a.range.std_error, b.range.std_error);
  EXPECT_EQ(a.first_return.point, b.first_return.point);
  EXPECT_EQ(a.range_corrected.point, b.range_corrected.point);
}

TEST(GreenSumTest, SmallCases) {
  Group z = Z();
  EXPECT_EQ(green_sum(simple_random_walk(z), 0).partial_sum, 1.0);
  EXPECT_DOUBLE_EQ(green_sum(simple_random_walk(z), 4).partial_sum, 1.875);
  GreenEscape drift = escape_from_green(point_mass(z.lattice_element({1})), 20, std::nullopt);
  EXPECT_TRUE(drift.conclusive);
  EXPECT_EQ(drift.estimate.point, 1.0);
}

TEST(GreenSumTest, BiasedLineAgainstBinomialOracle) {
  ProbMeasure mu = biased(2.0 / 3.0);
  for (std::size_t n : {10, 30, 60}) EXPECT_NEAR(green_sum(mu, n).partial_sum, binomial_green(2.0 / 3.0, n), 1e-12);
  // the full series sums to 1/|p - q| = 3
  EXPECT_NEAR(binomial_green(2.0 / 3.0, 4000), 3.0, 1e-12);
  EXPECT_NEAR(green_sum(mu, 400).partial_sum, 3.0, 1e-6);
  GreenEscape g = escape_from_green(mu, 60, std::nullopt);
  EXPECT_NEAR(g.estimate.point, 1.0 / 3.0, 1e-2);
}

TEST(GreenSumTest, UnstabilizedSumWithoutTailIsInconclusive) {
  GreenEscape g = escape_from_green(simple_random_walk(Z(3)), 10, std::nullopt);
  EXPECT_FALSE(g.conclusive);
  GreenEscape t = escape_from_green(simple_random_walk(Z(3)), 10, TailModel{1.0, 2.0});
  EXPECT_FALSE(t.conclusive);  // d <= 2 tails are infinite
}

TEST(GreenSumTest, TruncationMakesSumALowerBound) {
  GreenSum g = green_sum(simple_random_walk(Z(2)), 20, TruncationPolicy::mass_threshold_at(1e-4));
  EXPECT_TRUE(g.lower_bound_only);
  EXPECT_LE(g.partial_sum, green_sum(simple_random_walk(Z(2)), 20).partial_sum);
}

TEST(GreenSumTest, PeriodAwareTailBound) {
  // sum over even n > 10 of n^{-3/2}, by direct summation to 2e6 plus an integral
  double direct = 0.0;
  for (std::size_t n = 12; n <= 2'000'000; n += 2) direct += std::pow(static_cast<double>(n), -1.5);
  direct += std::pow(2.0, -1.5) * 2.0 / std::sqrt(1'000'000.0);
  EXPECT_NEAR(period_tail_bound({1.0, 3.0}, 10, 2), direct, 1e-6);
  EXPECT_GE(period_tail_bound({1.0, 3.0}, 10, 2), direct - 1e-9);
}

TEST(TailVisitTest, Examples) {
  Group z3 = Z(3);
  ProbMeasure mu = simple_random_walk(z3);
  EXPECT_EQ(tail_visit_prob(mu, {}, 0, config(10, 100)).point, 0.0);
  std::vector<Element> support;
  for (const auto& a : mu.atoms()) support.push_back(a.element);
  EXPECT_EQ(tail_visit_prob(mu, support, 0, config(5, 100)).point, 1.0);
  EXPECT_THROW(tail_visit_prob(mu, support, 5, config(5, 100)), UsageError);
}

TEST(TailVisitProperty, NonincreasingInStartTime) {
  Group z3 = Z(3);
  auto v = tail_visit_profile(simple_random_walk(z3), {z3.identity()}, {0, 2, 5, 10, 50, 100}, config(300, 500, 3));
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LE(v[i].point, v[i - 1].point);
}

// Green sums see return probabilities only, which reflection preserves.
TEST(GreenProperty, ReflectionInvariance) {
  Group z2 = Z(2);
  ProbMeasure mu = make_measure(z2, {{z2.lattice_element({1, 0}), 0.4},
                                     {z2.lattice_element({-1, 0}), 0.1},
                                     {z2.lattice_element({0, 1}), 0.3},
                                     {z2.lattice_element({0, -1}), 0.2}});
  GreenSum a = green_sum(mu, 16), b = green_sum(reflect(mu), 16);
  for (std::size_t n = 0; n < a.terms.size(); ++n) EXPECT_NEAR(a.terms[n], b.terms[n], 1e-15);
}

// Cauchy-Schwarz: a symmetric law's even powers peak at the identity.
TEST(GreenProperty, SymmetricEvenPowersPeakAtIdentity) {
  Group g = Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(1)));
  ProbMeasure lamp = uniform_measure({g.parse_element("{0:1}@0"), g.parse_element("{}@1"), g.parse_element("{}@-1")});
  Group z2 = Z(2);
  ProbMeasure lazy = simple_random_walk(z2, 0.3);
  for (const ProbMeasure* mu : {&lamp, &lazy}) {
    ProbMeasure p = point_mass(mu->group().identity());
    for (std::size_t n = 1; n <= 10; ++n) {
      p = convolve(p, *mu);
      if (n % 2) continue;
      double top = 0.0;
      for (const auto& a : p.atoms()) top = std::max(top, a.mass);
      EXPECT_EQ(top, p.mass_of(mu->group().identity())) << "n=" << n;
    }
  }
}

// |mean R_n/n - 1/G| within three times the combined uncertainty.
TEST(GreenProperty, RangeAgreesWithGreenEstimate) {
  ProbMeasure mu = biased(0.75);
  GreenEscape g = escape_from_green(mu, 200, std::nullopt);
  ASSERT_TRUE(g.conclusive);
  EscapeEstimates e = escape_mc(mu, config(10000, 1000));
  EXPECT_LE(std::abs(e.range.point - g.estimate.point), 3.0 * (e.range.std_error + g.last_term));

  Group z3 = Z(3);
  ProbMeasure srw = simple_random_walk(z3);
  KernelProfile prof = sup_kernel_profile(srw, 240);
  GreenEscape b = escape_from_green(srw, 60, TailModel{fit_decay_constant(prof, 3.0, 1, 240), 3.0});
  ASSERT_TRUE(b.conclusive);
  EscapeEstimates s = escape_mc(srw, config(10000, 1000));
  double width = b.upper - b.lower;
  EXPECT_LE(std::abs(s.range.point - b.estimate.point), 3.0 * (s.range.std_error + width));
}
