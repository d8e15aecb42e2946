#pragma once

// Green function of a lattice walk from its characteristic function:
// G = (2 pi)^{-d} \int_{[-pi,pi]^d} Re(1 / (1 - phi(k))) dk, p_esc = 1/G.
//
// Midpoint tensor quadrature never samples k = 0. Near the origin the
// integrand behaves like |k|^{-2}, so the midpoint error expands as
// a h^{d-2} + b h^2 + ...; the extrapolation table removes both terms.

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "rwg/errors.hpp"
#include "rwg/measure.hpp"
#include "rwg/walk.hpp"

namespace rwg {

struct ChungFuchsOptions {
  std::size_t grid = 64;         // points per axis at the coarsest level
  std::size_t refinements = 3;   // number of resolutions, each doubling the grid
  double growth_factor = 1.5;    // ratio of successive integrals signalling divergence
  std::size_t point_budget = std::size_t{1} << 25;
};

struct ChungFuchsResult {
  bool recurrent = false;
  EstimateWithCI estimate;          // p_esc, std_error = spread of the last two extrapolants
  std::vector<std::size_t> grids;
  std::vector<double> integrals;    // raw midpoint values per grid
  std::vector<double> extrapolants; // p_esc from each extrapolation stage
  double integral = 0.0;            // extrapolated Green function
  std::string note;
};

namespace detail {

inline int lattice_rank(const ProbMeasure& mu) {
  int d = mu.group().spec().dim;
  std::vector<std::vector<double>> rows;
  for (const auto& a : mu.atoms()) {
    if (a.element.is_identity()) continue;
    auto c = a.element.coords();
    rows.emplace_back(c.begin(), c.end());
  }
  int rank = 0;
  for (int col = 0; col < d && rank < static_cast<int>(rows.size()); ++col) {
    int piv = -1;
    for (int r = rank; r < static_cast<int>(rows.size()); ++r)
      if (std::abs(rows[r][col]) > 1e-12) piv = r;
    if (piv < 0) continue;
    std::swap(rows[piv], rows[rank]);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      if (r == rank) continue;
      double f = rows[r][col] / rows[rank][col];
      for (int c = 0; c < d; ++c) rows[r][c] -= f * rows[rank][c];
    }
    ++rank;
  }
  return rank;
}

// Mean of Re(1/(1 - phi)) over the N^d midpoint grid.
inline double midpoint_green(const ProbMeasure& mu, std::size_t n) {
  const int d = mu.group().spec().dim;
  const double h = 2.0 * M_PI / static_cast<double>(n);
  const std::size_t m = mu.size();
  // per-axis phase tables: table[a][s][j] = exp(i k_j x_s[a])
  std::vector<std::vector<std::vector<std::complex<double>>>> table(
      d, std::vector<std::vector<std::complex<double>>>(m, std::vector<std::complex<double>>(n)));
  for (int a = 0; a < d; ++a)
    for (std::size_t s = 0; s < m; ++s) {
      double x = static_cast<double>(mu.atoms()[s].element.coords()[a]);
      for (std::size_t j = 0; j < n; ++j) {
        double k = -M_PI + (static_cast<double>(j) + 0.5) * h;
        table[a][s][j] = std::polar(1.0, k * x);
      }
    }
  std::vector<double> mass(m);
  for (std::size_t s = 0; s < m; ++s) mass[s] = mu.atoms()[s].mass;

  // partial[a][s] = mass_s * prod_{b < a} table[b][s][idx_b]
  std::vector<std::vector<std::complex<double>>> partial(d, std::vector<std::complex<double>>(m));
  for (std::size_t s = 0; s < m; ++s) partial[0][s] = mass[s];
  std::vector<std::size_t> idx(d, 0);
  double total = 0.0;
  std::size_t outer = 1;
  for (int a = 0; a + 1 < d; ++a) outer *= n;
  for (std::size_t o = 0; o < outer; ++o) {
    // decode outer index into axes 0..d-2 and refresh partial products
    std::size_t rem = o;
    for (int a = d - 2; a >= 0; --a) {
      idx[a] = rem % n;
      rem /= n;
    }
    for (int a = 1; a < d; ++a)
      for (std::size_t s = 0; s < m; ++s) partial[a][s] = partial[a - 1][s] * table[a - 1][s][idx[a - 1]];
    const auto& last = table[d - 1];
    const auto& pre = partial[d - 1];
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      std::complex<double> phi = 0.0;
      for (std::size_t s = 0; s < m; ++s) phi += pre[s] * last[s][j];
      row += (1.0 / (1.0 - phi)).real();
    }
    total += row;
  }
  return total / std::pow(static_cast<double>(n), d);
}

}  // namespace detail

inline ChungFuchsResult chung_fuchs_escape(const ProbMeasure& mu, const ChungFuchsOptions& opt = {}) {
  if (mu.group().kind() != GroupKind::lattice) throw UsageError("chung_fuchs_escape requires an integer lattice");
  if (!mu.is_exact()) throw UsageError("chung_fuchs_escape requires an exact measure");
  if (opt.refinements < 3) throw UsageError("chung_fuchs_escape needs at least 3 resolutions");
  const int d = mu.group().spec().dim;
  ChungFuchsResult r;

  if (mu.size() == 1) {
    if (mu.atoms()[0].element.is_identity()) {
      r.recurrent = true;
      r.note = "point mass at the identity";
    } else {
      r.estimate = {1.0, 0.0, 0, "deterministic-drift"};
      r.integral = 1.0;
      r.note = "single non-identity atom: the walk never returns";
    }
    return r;
  }
  if (detail::lattice_rank(mu) < d)
    throw UsageError("chung_fuchs_escape: support does not span the lattice; the characteristic-function integral is not the Green function");
  if (d <= 2 && !mu.is_symmetric(1e-15))
    throw UsageError("chung_fuchs_escape: drifted measures in dimension <= 2 are not supported");

  for (std::size_t i = 0, n = opt.grid; i < opt.refinements; ++i, n *= 2) {
    if (std::pow(static_cast<double>(n), d) > static_cast<double>(opt.point_budget))
      throw ResourceError("quadrature grid " + std::to_string(n) + "^" + std::to_string(d) + " exceeds point budget",
                          static_cast<long long>(i));
    r.grids.push_back(n);
    r.integrals.push_back(detail::midpoint_green(mu, n));
  }

  // Divergence: integrals keep growing geometrically, or their increments stop contracting.
  const auto& I = r.integrals;
  int big_ratios = 0;
  bool non_contracting = true;
  for (std::size_t i = 1; i < I.size(); ++i) {
    if (I[i] / I[i - 1] > opt.growth_factor) ++big_ratios;
    if (i >= 2) {
      double prev = I[i - 1] - I[i - 2], cur = I[i] - I[i - 1];
      if (!(prev > 0.0 && cur >= 0.75 * prev)) non_contracting = false;
    }
  }
  if (big_ratios >= 2 || non_contracting) {
    r.recurrent = true;
    r.note = big_ratios >= 2 ? "successive integrals grow beyond the growth factor" : "increments do not contract";
    return r;
  }

  // Richardson table: eliminate h^{d-2} (when below 2), then h^2.
  std::vector<double> orders;
  if (d - 2 > 0 && d - 2 < 2) orders.push_back(static_cast<double>(d - 2));
  orders.push_back(2.0);
  std::vector<double> level = I;
  for (double p : orders) {
    if (level.size() < 2) break;
    double f = std::pow(2.0, p);
    std::vector<double> next;
    for (std::size_t i = 1; i < level.size(); ++i) next.push_back((f * level[i] - level[i - 1]) / (f - 1.0));
    for (double v : next) r.extrapolants.push_back(1.0 / v);
    level = std::move(next);
  }
  r.integral = level.back();
  double p = 1.0 / r.integral;
  double spread = 0.0;
  if (r.extrapolants.size() >= 2)
    spread = std::abs(r.extrapolants.back() - r.extrapolants[r.extrapolants.size() - 2]);
  r.estimate = {p, spread, r.grids.back(), "chung-fuchs-midpoint-richardson"};
  return r;
}

}  // namespace rwg
