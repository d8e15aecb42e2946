#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "random_elements.hpp"
#include "rwg/group.hpp"

using namespace rwg;

namespace {

Group lamplighter() {
  return Group::make(GroupSpec::wreath_product(GroupSpec::cyclic_group(2), GroupSpec::integer_lattice(1)));
}

}  // namespace

TEST(GroupSpecTest, RejectsMalformedSpecsNamingTheField) {
  try {
    GroupSpec::integer_lattice(0).validate();
    FAIL() << "d = 0 accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "group.dim");
  }
  EXPECT_THROW(GroupSpec::free_group(0).validate(), ConfigError);
  EXPECT_THROW(GroupSpec::cyclic_group(0).validate(), ConfigError);
  GroupSpec s = GroupSpec::integer_lattice(3);
  s.declared_growth = GrowthDegree{false, 2};
  EXPECT_THROW(s.validate(), ConfigError);
  s.declared_growth = GrowthDegree{false, 3};
  EXPECT_NO_THROW(s.validate());
}

TEST(GroupSpecTest, ParsesShorthand) {
  EXPECT_EQ(parse_group_spec("Z^3").to_string(), "Z^3");
  EXPECT_EQ(parse_group_spec("Z/2 wr Z").to_string(), "(Z/2 wr Z)");
  EXPECT_EQ(parse_group_spec("Z/2 wr (Z/2 wr Z)").to_string(), "(Z/2 wr (Z/2 wr Z))");
  EXPECT_EQ(parse_group_spec("F2").to_string(), "F2");
  EXPECT_EQ(parse_group_spec("Dinf").to_string(), "Dinf");
  EXPECT_THROW(parse_group_spec("Z^0"), ConfigError);
  EXPECT_THROW(parse_group_spec("Q"), ConfigError);
}

TEST(GroupTest, Identities) {
  Group z3 = Group::make(GroupSpec::integer_lattice(3));
  auto c = z3.identity().coords();
  EXPECT_EQ(std::vector<std::int64_t>(c.begin(), c.end()), (std::vector<std::int64_t>{0, 0, 0}));
  Group f2 = Group::make(GroupSpec::free_group(2));
  EXPECT_TRUE(f2.identity().letters().empty());
  EXPECT_TRUE(lamplighter().is_wreath());
  for (const auto& g : fixtures::all_kinds()) EXPECT_EQ(g.identity().key().size(), 5u) << g.name();
}

TEST(GroupTest, LatticeProductAndInverse) {
  Group z3 = Group::make(GroupSpec::integer_lattice(3));
  EXPECT_EQ(z3.mul(z3.lattice_element({1, 0, 0}), z3.lattice_element({0, 2, 0})), z3.lattice_element({1, 2, 0}));
  EXPECT_EQ(z3.inv(z3.lattice_element({1, -2, 0})), z3.lattice_element({-1, 2, 0}));
}

TEST(GroupTest, LamplighterProducts) {
  Group g = lamplighter();
  // a lamp toggle followed by a move keeps the lamp where it was switched
  EXPECT_EQ(g.format(g.mul(g.parse_element("{0:1}@0"), g.parse_element("{}@1"))), "{0:1}@1");
  // a move followed by a toggle switches the lamp at the new position
  EXPECT_EQ(g.format(g.mul(g.parse_element("{}@1"), g.parse_element("{0:1}@0"))), "{1:1}@1");
  EXPECT_EQ(g.format(g.inv(g.parse_element("{1:1}@1"))), "{0:1}@-1");
  // lamps toggled twice are pruned from the normal form
  Element t = g.parse_element("{0:1}@0");
  EXPECT_TRUE(g.mul(t, t).is_identity());
}

TEST(GroupTest, FreeGroupReduction) {
  Group f = Group::make(GroupSpec::free_group(2));
  EXPECT_EQ(f.format(f.inv(f.parse_element("aB"))), "bA");
  EXPECT_TRUE(f.mul(f.parse_element("aB"), f.parse_element("bA")).is_identity());
  EXPECT_EQ(f.format(f.mul(f.parse_element("ab"), f.parse_element("Ba"))), "aa");
}

TEST(GroupTest, DihedralLaw) {
  Group d = Group::make(GroupSpec::infinite_dihedral());
  // (t1,f1)(t2,f2) = (t1 + (-1)^f1 t2, f1 xor f2)
  EXPECT_EQ(d.mul(d.dihedral_element(3, true), d.dihedral_element(5, false)), d.dihedral_element(-2, true));
  EXPECT_EQ(d.mul(d.dihedral_element(3, false), d.dihedral_element(5, true)), d.dihedral_element(8, true));
  Element r = d.dihedral_element(4, true);
  EXPECT_TRUE(d.mul(r, r).is_identity());
}

TEST(GroupTest, CanonicalKeysAgreeAcrossProductOrders) {
  Group z2 = Group::make(GroupSpec::integer_lattice(2));
  Element a = z2.mul(z2.lattice_element({3, 0}), z2.lattice_element({0, -1}));
  Element b = z2.mul(z2.lattice_element({1, -1}), z2.lattice_element({2, 0}));
  EXPECT_EQ(a.key(), b.key());

  Group g = lamplighter();
  // both realize lamps {0:1, 1:1} at position 1
  Element p = g.mul(g.mul(g.parse_element("{0:1}@0"), g.parse_element("{}@1")), g.parse_element("{0:1}@0"));
  Element q = g.mul(g.parse_element("{}@1"), g.mul(g.parse_element("{0:1}@0"), g.parse_element("{-1:1}@0")));
  EXPECT_EQ(g.format(p), "{0:1,1:1}@1");
  EXPECT_EQ(p.key(), q.key());
}

TEST(GroupTest, FormatParseAndDecodeRoundTrip) {
  std::mt19937_64 rng(11);
  for (const auto& g : fixtures::all_kinds()) {
    for (int i = 0; i < 200; ++i) {
      Element x = fixtures::random_element(g, rng);
      EXPECT_EQ(g.parse_element(g.format(x)), x) << g.name() << " " << g.format(x);
      EXPECT_EQ(g.decode_key(x.key()), x) << g.name();
    }
  }
}

TEST(GroupTest, MixedGroupOperandsAreRejected) {
  Group a = Group::make(GroupSpec::integer_lattice(2));
  Group b = Group::make(GroupSpec::integer_lattice(3));
  EXPECT_THROW(a.mul(a.identity(), b.identity()), UsageError);
  EXPECT_THROW(project_to_base(a.identity()), UsageError);
}

TEST(GroupTest, ProjectionExtractsPosition) {
  Group g = lamplighter();
  EXPECT_EQ(g.base_group().format(g.project_to_base(g.parse_element("{0:1}@5"))), "5");
  EXPECT_TRUE(g.project_to_base(g.identity()).is_identity());
}

// Group axioms on random triples, for every kind.
TEST(GroupProperty, AxiomsOnRandomTriples) {
  std::mt19937_64 rng(20240601);
  for (const auto& g : fixtures::all_kinds()) {
    int failures = 0;
    for (int i = 0; i < 2000; ++i) {
      Element a = fixtures::random_element(g, rng), b = fixtures::random_element(g, rng), c = fixtures::random_element(g, rng);
      failures += !(g.mul(g.mul(a, b), c) == g.mul(a, g.mul(b, c)));
      failures += !(g.mul(a, g.identity()) == a && g.mul(g.identity(), a) == a);
      failures += !g.mul(a, g.inv(a)).is_identity();
      failures += !(g.inv(g.inv(a)) == a);
      if (g.is_wreath()) {
        Group base = g.base_group();
        failures += !(g.project_to_base(g.mul(a, b)) == base.mul(g.project_to_base(a), g.project_to_base(b)));
        failures += !(g.project_to_base(g.inv(a)) == base.inv(g.project_to_base(a)));
        for (const auto& e : a.lamps()) failures += e.value.is_identity();
      }
      if (g.kind() == GroupKind::free_group) {
        auto w = a.letters();
        for (std::size_t j = 1; j < w.size(); ++j) failures += w[j] == -w[j - 1];
      }
    }
    EXPECT_EQ(failures, 0) << g.name();
  }
}

TEST(BallTest, SmallBalls) {
  Group z = Group::make(GroupSpec::integer_lattice(1));
  EXPECT_EQ(ball_size(GeneratingSet::standard(z), 3), 7u);
  Group z3 = Group::make(GroupSpec::integer_lattice(3));
  EXPECT_EQ(ball_size(GeneratingSet::standard(z3), 2), 25u);
  for (const auto& g : fixtures::all_kinds()) EXPECT_EQ(ball_size(GeneratingSet::standard(g), 0), 1u);
  // Z/7 saturates
  Group c7 = Group::make(GroupSpec::cyclic_group(7));
  EXPECT_EQ(ball_size(GeneratingSet::standard(c7), 10), 7u);
}

TEST(BallTest, BudgetReportsRadiusReached) {
  Group f = Group::make(GroupSpec::free_group(2));
  try {
    ball_size(GeneratingSet::standard(f), 10, 1000);
    FAIL() << "budget not enforced";
  } catch (const ResourceError& e) {
    // |B(5)| = 485 fits in the budget, |B(6)| = 1457 does not
    EXPECT_EQ(e.progress(), 5);
  }
}

TEST(BallTest, SymmetricFlagRequiresInverseClosure) {
  Group z = Group::make(GroupSpec::integer_lattice(1));
  EXPECT_THROW(GeneratingSet::make({z.lattice_element({1})}, true), ValidationError);
  EXPECT_NO_THROW(GeneratingSet::make({z.lattice_element({1})}, false));
}

// Brute force: lattice balls are l1 balls; free balls have 1 + 4 (3^n - 1)/2 words.
TEST(BallProperty, MatchesClosedFormsAndHasNoKeyCollisions) {
  for (int d : {2, 3}) {
    Group z = Group::make(GroupSpec::integer_lattice(d));
    for (std::size_t n = 0; n <= 6; ++n) {
      std::size_t brute = 0;
      const int r = static_cast<int>(n);
      if (d == 2) {
        for (int x = -r; x <= r; ++x)
          for (int y = -r; y <= r; ++y) brute += std::abs(x) + std::abs(y) <= r;
      } else {
        for (int x = -r; x <= r; ++x)
          for (int y = -r; y <= r; ++y)
            for (int w = -r; w <= r; ++w) brute += std::abs(x) + std::abs(y) + std::abs(w) <= r;
      }
      auto ball = ball_elements(GeneratingSet::standard(z), n);
      EXPECT_EQ(ball.size(), brute);
      std::set<std::string> keys;
      for (const auto& e : ball) keys.insert(e.key());
      EXPECT_EQ(keys.size(), ball.size());
    }
  }
  Group f = Group::make(GroupSpec::free_group(2));
  for (std::size_t n = 0; n <= 6; ++n)
    EXPECT_EQ(ball_size(GeneratingSet::standard(f), n), 1 + 2 * (static_cast<std::size_t>(std::pow(3, n)) - 1));
  Group dinf = Group::make(GroupSpec::infinite_dihedral());
  for (std::size_t n = 1; n <= 6; ++n) EXPECT_EQ(ball_size(GeneratingSet::standard(dinf), n), 4 * n);
}

TEST(BallProperty, LatticeGrowthIsPolynomial) {
  Group z2 = Group::make(GroupSpec::integer_lattice(2));
  std::size_t prev = 0;
  for (std::size_t n = 4; n <= 32; ++n) {
    std::size_t b = ball_size(GeneratingSet::standard(z2), n);
    EXPECT_GE(b, prev);
    double ratio = static_cast<double>(b) / static_cast<double>(n * n);
    EXPECT_GT(ratio, 1.0);
    EXPECT_LT(ratio, 4.0);
    prev = b;
  }
}
