#pragma once

// Convolution powers of hyperoctahedrally symmetric measures on Z^d.
//
// A measure invariant under all coordinate permutations and sign flips has
// invariant convolution powers, so only values at descending nonnegative
// tuples x1 >= ... >= xd >= 0 are stored. The tuple index is the
// combinatorial-number-system rank sum_i C(x_i + d - i, d - i + 1), which
// orders tuples lexicographically; tuples with x1 <= M form a prefix of
// length C(M + d, d).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/group.hpp"
#include "rwg/measure.hpp"

namespace rwg {

class SymmetricLatticePowers {
 public:
  static constexpr int kMaxDim = 8;
  using Point = std::array<std::int64_t, kMaxDim>;

  /// Returns nullopt when mu is not on a lattice, carries a deficit, or is not
  /// exactly invariant under signed permutations.
  static std::optional<SymmetricLatticePowers> try_make(const ProbMeasure& mu, std::size_t cell_budget = 60'000'000) {
    if (mu.group().kind() != GroupKind::lattice || mu.mass_deficit() != 0.0) return std::nullopt;
    int d = mu.group().spec().dim;
    if (d > kMaxDim) return std::nullopt;
    SymmetricLatticePowers s;
    s.group_ = mu.group();
    s.d_ = d;
    s.cell_budget_ = cell_budget;
    for (const auto& a : mu.atoms()) {
      Point p{};
      auto c = a.element.coords();
      std::int64_t l1 = 0, linf = 0;
      for (int i = 0; i < d; ++i) {
        p[i] = c[i];
        l1 += std::abs(c[i]);
        linf = std::max<std::int64_t>(linf, std::abs(c[i]));
      }
      for (const auto& q : orbit(p, d)) {
        std::vector<std::int64_t> v(q.begin(), q.begin() + d);
        if (mu.mass_of(s.group_.lattice_element(v)) != a.mass) return std::nullopt;
      }
      s.steps_.push_back({p, a.mass});
      s.r1_ = std::max(s.r1_, l1);
      s.rinf_ = std::max(s.rinf_, linf);
    }
    s.values_.assign(1, 1.0);  // n = 0: point mass at the origin
    return s;
  }

  int dim() const { return d_; }
  std::size_t n() const { return n_; }

  /// Advances to the next convolution power.
  void step() {
    std::int64_t m_next = static_cast<std::int64_t>(n_ + 1) * rinf_;
    std::int64_t l1_next = static_cast<std::int64_t>(n_ + 1) * r1_;
    std::size_t cells = prefix_size(m_next);
    if (cells > cell_budget_)
      throw ResourceError("symmetric lattice power exceeds cell budget at n=" + std::to_string(n_ + 1),
                          static_cast<long long>(n_));
    std::vector<double> next(cells, 0.0);
    std::int64_t m_prev = static_cast<std::int64_t>(n_) * rinf_;
    std::int64_t l1_prev = static_cast<std::int64_t>(n_) * r1_;
    for_each_point(m_next, l1_next, [&](const Point& x, std::size_t idx) {
      double acc = 0.0;
      for (const auto& st : steps_) {
        Point y{};
        std::int64_t l1 = 0;
        for (int i = 0; i < d_; ++i) {
          y[i] = std::abs(x[i] - st.offset[i]);
          l1 += y[i];
        }
        if (l1 > l1_prev) continue;
        sort_desc(y);
        if (y[0] > m_prev) continue;
        acc += st.mass * values_[index(y)];
      }
      next[idx] = acc;
    });
    values_ = std::move(next);
    ++n_;
  }

  /// mu^{*n}(x) at the current n.
  double value(std::span<const std::int64_t> coords) const {
    Point y{};
    for (int i = 0; i < d_; ++i) y[i] = std::abs(coords[i]);
    sort_desc(y);
    if (y[0] > static_cast<std::int64_t>(n_) * rinf_) return 0.0;
    return values_[index(y)];
  }

  double return_probability() const { return values_[0]; }

  struct SupResult {
    double value = 0.0;
    Element argmax;
  };

  /// Maximum mass; ties resolve to the smallest canonical key.
  SupResult sup() const {
    double best = -1.0;
    std::vector<Point> ties;
    visit_current([&](const Point& x, double v) {
      if (v > best) {
        best = v;
        ties.assign(1, x);
      } else if (v == best) {
        ties.push_back(x);
      }
    });
    SupResult r;
    r.value = best;
    for (const auto& t : ties) {
      for (const auto& q : orbit(t, d_)) {
        Element e = group_.lattice_element(std::vector<std::int64_t>(q.begin(), q.begin() + d_));
        if (!r.argmax.valid() || e.key() < r.argmax.key()) r.argmax = e;
      }
    }
    return r;
  }

  double entropy() const {
    double h = 0.0;
    visit_current([&](const Point& x, double v) {
      if (v > 0.0) h -= static_cast<double>(orbit_size(x)) * v * std::log(v);
    });
    return h;
  }

  double total_mass() const {
    double s = 0.0;
    visit_current([&](const Point& x, double v) { s += static_cast<double>(orbit_size(x)) * v; });
    return s;
  }

  /// Expands the current power into a generic measure (small n only).
  ProbMeasure to_measure() const {
    std::vector<Atom> atoms;
    visit_current([&](const Point& x, double v) {
      if (v <= 0.0) return;
      for (const auto& q : orbit(x, d_))
        atoms.push_back({group_.lattice_element(std::vector<std::int64_t>(q.begin(), q.begin() + d_)), v});
    });
    detail::sort_atoms(atoms);
    return ProbMeasure::from_sorted(group_, std::move(atoms), 0.0);
  }

  std::size_t orbit_size(const Point& x) const {
    std::size_t perms = 1;
    for (int i = 2; i <= d_; ++i) perms *= static_cast<std::size_t>(i);
    int run = 1;
    for (int i = 1; i <= d_; ++i) {
      if (i < d_ && x[i] == x[i - 1]) {
        ++run;
      } else {
        for (int k = 2; k <= run; ++k) perms /= static_cast<std::size_t>(k);
        run = 1;
      }
    }
    for (int i = 0; i < d_; ++i)
      if (x[i] != 0) perms *= 2;
    return perms;
  }

 private:
  struct Step {
    Point offset;
    double mass;
  };

  SymmetricLatticePowers() = default;

  static void sort_desc(Point& y) {
    // insertion sort; d is tiny
    for (int i = 1; i < kMaxDim; ++i) {
      std::int64_t v = y[i];
      int j = i - 1;
      while (j >= 0 && y[j] < v) {
        y[j + 1] = y[j];
        --j;
      }
      y[j + 1] = v;
    }
  }

  static std::uint64_t binom(std::int64_t n, int k) {
    if (k < 0 || n < k) return 0;
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    return r;
  }

  std::size_t prefix_size(std::int64_t m) const { return static_cast<std::size_t>(binom(m + d_, d_)); }

  std::size_t index(const Point& y) const {
    std::size_t idx = 0;
    for (int i = 0; i < d_; ++i) idx += static_cast<std::size_t>(binom(y[i] + d_ - 1 - i, d_ - i));
    return idx;
  }

  template <class F>
  void for_each_point(std::int64_t m, std::int64_t l1_bound, F&& f) const {
    Point x{};
    for_each_rec(0, m, 0, l1_bound, x, f);
  }

  template <class F>
  void for_each_rec(int depth, std::int64_t cap, std::int64_t used, std::int64_t l1_bound, Point& x, F& f) const {
    if (depth == d_) {
      f(static_cast<const Point&>(x), index(x));
      return;
    }
    for (std::int64_t v = 0; v <= cap && used + v <= l1_bound; ++v) {
      x[depth] = v;
      for_each_rec(depth + 1, v, used + v, l1_bound, x, f);
    }
    x[depth] = 0;
  }

  template <class F>
  void visit_current(F&& f) const {
    for_each_point(static_cast<std::int64_t>(n_) * rinf_, static_cast<std::int64_t>(n_) * r1_,
                   [&](const Point& x, std::size_t idx) { f(x, values_[idx]); });
  }

  // All signed permutations of the first d coordinates, deduplicated.
  static std::vector<Point> orbit(const Point& p, int d) {
    std::vector<Point> out;
    std::array<int, kMaxDim> perm{};
    for (int i = 0; i < d; ++i) perm[i] = i;
    do {
      for (std::uint32_t signs = 0; signs < (1u << d); ++signs) {
        Point q{};
        for (int i = 0; i < d; ++i) q[i] = ((signs >> i) & 1u) ? -p[perm[i]] : p[perm[i]];
        out.push_back(q);
      }
    } while (std::next_permutation(perm.begin(), perm.begin() + d));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  Group group_;
  int d_ = 1;
  std::vector<Step> steps_;
  std::int64_t r1_ = 0;
  std::int64_t rinf_ = 0;
  std::size_t n_ = 0;
  std::size_t cell_budget_ = 0;
  std::vector<double> values_;
};

}  // namespace rwg
