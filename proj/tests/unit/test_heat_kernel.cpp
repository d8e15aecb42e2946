#include <gtest/gtest.h>

#include <cmath>

#include "rwg/heat_kernel.hpp"

using namespace rwg;

namespace {

Group Z(int d) { return Group::make(GroupSpec::integer_lattice(d)); }

// (x/n) ln(x n^{d/2} / C2) peaks over real n at n* = e (C2/x)^{2/d}, so the
// integer maximum sits at floor(n*) or ceil(n*), or at 1 when n* < 1.
double theta_oracle(double x, double c2, double d) {
  auto f = [&](double n) { return (x / n) * std::log(x * std::pow(n, d / 2.0) / c2); };
  double star = std::exp(1.0) * std::pow(c2 / x, 2.0 / d);
  if (star <= 1.0) return f(1.0);
  return std::max(f(std::floor(star)), f(std::ceil(star)));
}

}  // namespace

TEST(KernelProfileTest, ClosedFormsOnTheLine) {
  KernelProfile p = sup_kernel_profile(simple_random_walk(Z(1)), 6);
  ASSERT_EQ(p.entries.size(), 6u);
  // sup over x of C(n, (n+x)/2) 2^{-n}
  EXPECT_DOUBLE_EQ(p.entries[0].sup, 0.5);
  EXPECT_DOUBLE_EQ(p.entries[1].sup, 0.5);
  EXPECT_DOUBLE_EQ(p.entries[2].sup, 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(p.entries[3].sup, 6.0 / 16.0);
  EXPECT_DOUBLE_EQ(p.entries[5].sup, 20.0 / 64.0);
  EXPECT_FALSE(p.lower_bound_only());
}

TEST(KernelProfileTest, FitIsTheWorstScaledValue) {
  KernelProfile p = sup_kernel_profile(simple_random_walk(Z(1)), 6);
  // sqrt(n) sup grows toward sqrt(2/pi), so the last entry wins
  EXPECT_DOUBLE_EQ(fit_decay_constant(p, 1.0, 1, 6), 20.0 / 64.0 * std::sqrt(6.0));
  EXPECT_DOUBLE_EQ(fit_decay_constant(p, 1.0, 1, 2), 0.5 * std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(fit_decay_constant(p, 1.0, 3, 3), 3.0 / 8.0 * std::sqrt(3.0));
}

TEST(ThetaTildeTest, MatchesContinuousMaximizer) {
  for (double d : {1.0, 2.0, 3.0, 5.0})
    for (double c2 : {0.3, 1.0, 4.0, 50.0})
      for (double x : {1.0, 2.0}) {
        std::size_t at = 0;
        EXPECT_NEAR(theta_tilde(x, c2, d, &at), theta_oracle(x, c2, d), 1e-14) << d << " " << c2 << " " << x;
        EXPECT_GE(at, 1u);
      }
  std::size_t at = 0;
  EXPECT_NEAR(theta_tilde(1.0, 1.0, 3.0, &at), std::log(std::pow(3.0, 1.5)) / 3.0, 1e-15);
  EXPECT_EQ(at, 3u);
}

TEST(CscConstantTest, RegressionAnchor) {
  CSCTrace t = csc_constant({2.0, 1.0, 3.0});
  EXPECT_EQ(t.K, 4u);
  EXPECT_DOUBLE_EQ(t.C_out, std::pow(17.0, 1.5));
  EXPECT_NEAR(t.C_out, 70.092795635500224, 1e-12);
  EXPECT_LE(t.max_residual(), 1e-10);
  EXPECT_GT(static_cast<double>(t.K), t.K_lower);
  nlohmann::json j = to_json(t);
  EXPECT_EQ(j["K"], 4);
  EXPECT_EQ(j["m_sequence"].size(), 4u);
}

TEST(CscConstantTest, RejectsInvalidInputs) {
  EXPECT_THROW(csc_constant({1.0, 1.0, 3.0}), ValidationError);
  EXPECT_THROW(csc_constant({2.0, 0.0, 3.0}), ValidationError);
  EXPECT_THROW(csc_constant({2.0, 1.0, 0.5}), ValidationError);
  EXPECT_THROW(csc_constant({2.0, std::nan(""), 3.0}), ValidationError);
}

// Over a grid of inputs: the recursion is solved to 1e-10, m decreases, the
// stopping rule holds at K and C_out dominates C2.
TEST(CscConstantProperty, TraceInvariants) {
  for (double c1 : {1.01, 2.0, 10.0, 100.0})
    for (double c2 : {0.05, 1.0, 20.0})
      for (double d : {1.0, 3.0, 4.0}) {
        CSCTrace t = csc_constant({c1, c2, d});
        EXPECT_LE(t.max_residual(), 1e-10);
        ASSERT_EQ(t.m_sequence.size(), t.K);
        for (std::size_t j = 1; j < t.K; ++j) EXPECT_LT(t.m_sequence[j], t.m_sequence[j - 1]);
        EXPECT_LE(t.m_sequence.back(), c2);
        EXPECT_GT(static_cast<double>(t.K), t.K_lower);
        EXPECT_GE(t.C_out, c2);
        EXPECT_TRUE(std::isfinite(t.C_out));
      }
}

TEST(CscConstantProperty, MonotoneInComparisonConstant) {
  std::size_t prev = 0;
  for (double c1 : {1.5, 3.0, 6.0, 12.0, 24.0}) {
    CSCTrace t = csc_constant({c1, 1.0, 3.0});
    EXPECT_GE(t.K, prev);
    prev = t.K;
  }
}

TEST(ComparisonTest, LazyCubicWalkIsDominated) {
  ProbMeasure srw = simple_random_walk(Z(3));
  ComparisonReport r = verify_comparison(srw, simple_random_walk(Z(3), 0.5), 3.0, 60);
  EXPECT_TRUE(r.all_pass());
  EXPECT_DOUBLE_EQ(r.C1, 2.0);
  EXPECT_FALSE(r.C1_clamped);
  EXPECT_GT(r.bound.margin, 0.0);
  ASSERT_EQ(r.ratios.size(), 60u);
  for (double x : r.ratios) EXPECT_LE(x, 1.0);
}

TEST(ComparisonTest, SelfComparisonClampsConstant) {
  ProbMeasure srw = simple_random_walk(Z(3));
  ComparisonReport r = verify_comparison(srw, srw, 3.0, 30);
  EXPECT_TRUE(r.C1_clamped);
  EXPECT_GT(r.C1, 1.0);
  EXPECT_TRUE(r.bound.pass);
}

TEST(ComparisonTest, HypothesisFailures) {
  Group z3 = Z(3);
  ProbMeasure srw = simple_random_walk(z3);
  ProbMeasure thin = make_measure(z3, {{z3.lattice_element({1, 0, 0}), 0.5}, {z3.lattice_element({-1, 0, 0}), 0.5}});
  ComparisonReport r = verify_comparison(srw, thin, 3.0, 10);
  EXPECT_FALSE(r.dominance.pass);
  EXPECT_FALSE(r.bound.pass);
  EXPECT_FALSE(r.trace.has_value());

  ProbMeasure drift = make_measure(z3, {{z3.lattice_element({1, 0, 0}), 0.5},
                                        {z3.lattice_element({0, 1, 0}), 0.25},
                                        {z3.lattice_element({0, 0, 1}), 0.25}});
  EXPECT_FALSE(verify_comparison(drift, drift, 3.0, 10).symmetric.pass);
  EXPECT_THROW(verify_comparison(srw, simple_random_walk(Z(2)), 3.0, 10), UsageError);
}
