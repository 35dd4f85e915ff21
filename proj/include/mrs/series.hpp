#pragma once
// Truncated formal power series in z = (z_x, z_1, z_2, ...) with a0-jet
// coefficients: the graded model space.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "apoly.hpp"
#include "index.hpp"

namespace mrs {

struct SeriesContext {
  Rational alpha{3, 4};
  int d = 1;
  Homogeneity cutoff{2, 0, Rational(3, 4)};
  int J = 4;
  double center = 1.0;

  static SeriesContext make(Rational alpha, int d, Homogeneity cutoff, double center) {
    cutoff.alpha = alpha;
    return {alpha, d, cutoff, jet_order(alpha), center};
  }
  bool operator==(const SeriesContext& o) const {
    return alpha == o.alpha && d == o.d && cutoff == o.cutoff && J == o.J && center == o.center;
  }
  Homogeneity hom(const MultiIndex& b) const { return homogeneity(b, alpha); }
  bool in_range(const MultiIndex& b) const { return hom(b) < cutoff; }
  AJet zero_jet() const { return AJet(center, J); }
  AJet const_jet(double v) const { return AJet::constant(center, J, v); }
};

class FormalSeries {
 public:
  SeriesContext ctx;
  std::map<MultiIndex, AJet> terms;

  FormalSeries() = default;
  explicit FormalSeries(SeriesContext c) : ctx(c) {}

  static FormalSeries unit(const SeriesContext& c) { return monomial(c, MultiIndex(c.d), 1.0); }
  static FormalSeries monomial(const SeriesContext& c, const MultiIndex& k, double v) {
    FormalSeries s(c);
    s.add(k, c.const_jet(v));
    return s;
  }
  /// z_x along axis i (0-based).
  static FormalSeries zx(const SeriesContext& c, int i) { return monomial(c, MultiIndex::unit_x(c.d, i), 1.0); }
  /// z_k, k >= 1.
  static FormalSeries zk(const SeriesContext& c, int k) { return monomial(c, MultiIndex::unit_prime(c.d, k), 1.0); }

  /// Adds a coefficient; keys at or above the cutoff are dropped.
  void add(const MultiIndex& k, const AJet& j) {
    if (!ctx.in_range(k) || j.is_zero()) return;
    auto it = terms.find(k);
    if (it == terms.end()) {
      terms.emplace(k, j);
    } else {
      it->second += j;
      if (it->second.is_zero()) terms.erase(it);
    }
  }
  AJet coeff(const MultiIndex& k) const {
    auto it = terms.find(k);
    return it == terms.end() ? ctx.zero_jet() : it->second;
  }
  bool empty() const { return terms.empty(); }
  std::size_t size() const { return terms.size(); }

  /// Smallest homogeneity present (cutoff if empty).
  Homogeneity min_hom() const {
    Homogeneity h = ctx.cutoff;
    for (auto& [k, j] : terms) h = std::min(h, ctx.hom(k));
    return h;
  }

  FormalSeries& operator+=(const FormalSeries& o) {
    check(o);
    for (auto& [k, j] : o.terms) add(k, j);
    return *this;
  }
  FormalSeries& operator-=(const FormalSeries& o) {
    check(o);
    for (auto& [k, j] : o.terms) add(k, j * -1.0);
    return *this;
  }
  FormalSeries& operator*=(double s) {
    if (s == 0.0) { terms.clear(); return *this; }
    for (auto& [k, j] : terms) j *= s;
    return *this;
  }
  friend FormalSeries operator+(FormalSeries a, const FormalSeries& b) { return a += b; }
  friend FormalSeries operator-(FormalSeries a, const FormalSeries& b) { return a -= b; }
  friend FormalSeries operator*(FormalSeries a, double s) { return a *= s; }
  friend FormalSeries operator*(double s, FormalSeries a) { return a *= s; }

  void check(const FormalSeries& o) const {
    if (!(o.ctx == ctx)) throw std::invalid_argument("series context mismatch");
  }
};

/// (tau tau')_beta = sum_{b1 + b2 = beta} tau_b1 tau'_b2, truncated.
inline FormalSeries mul(const FormalSeries& a, const FormalSeries& b) {
  a.check(b);
  FormalSeries r(a.ctx);
  for (auto& [k1, j1] : a.terms)
    for (auto& [k2, j2] : b.terms) {
      auto k = k1 + k2;
      if (r.ctx.in_range(k)) r.add(k, jet_mul(j1, j2));
    }
  return r;
}

inline FormalSeries pow(const FormalSeries& a, int k) {
  auto r = FormalSeries::unit(a.ctx);
  for (int i = 0; i < k && !r.empty(); ++i) r = mul(r, a);
  return r;
}

/// Multiplication by a0 on the coefficient jets.
inline FormalSeries mul_a0(const FormalSeries& a) {
  FormalSeries r(a.ctx);
  for (auto& [k, j] : a.terms) r.add(k, jet_mul_a0(j));
  return r;
}

/// D^(0) = z_1 d/da0 + sum_{k>=1} (k+1) z_{k+1} d/dz_k.
inline FormalSeries d0(const FormalSeries& t) {
  FormalSeries r(t.ctx);
  for (auto& [g, j] : t.terms) {
    auto up = g;
    up.beta_prime[1] += 1;
    if (r.ctx.in_range(up) && !j.is_zero()) {
      auto dj = jet_ddiff(j);
      r.add(up, dj);
    }
    for (auto [k, c] : g.beta_prime) {
      auto s = g;
      s.beta_prime[k] -= 1;
      s.beta_prime[k + 1] += 1;
      s.normalize();
      if (r.ctx.in_range(s)) r.add(s, j * static_cast<double>((k + 1) * c));
    }
  }
  return r;
}

/// D^(1) along axis (0-based): d/dz_x[axis].
inline FormalSeries d1(const FormalSeries& t, int axis) {
  if (axis < 0 || axis >= t.ctx.d) throw std::out_of_range("D1 axis out of range");
  FormalSeries r(t.ctx);
  const auto a = static_cast<std::size_t>(axis);
  for (auto& [g, j] : t.terms) {
    if (g.beta_x[a] == 0) continue;
    auto s = g;
    s.beta_x[a] -= 1;
    r.add(s, j * static_cast<double>(g.beta_x[a]));
  }
  return r;
}

/// Projection onto the polynomial sector (beta_x != 0, beta' = 0).
inline FormalSeries proj_P(const FormalSeries& t) {
  FormalSeries r(t.ctx);
  for (auto& [k, j] : t.terms)
    if (k.is_polynomial()) r.terms.emplace(k, j);
  return r;
}

inline FormalSeries proj_minus(const FormalSeries& t) {
  FormalSeries r(t.ctx);
  for (auto& [k, j] : t.terms)
    if (!k.is_polynomial()) r.terms.emplace(k, j);
  return r;
}

/// Drops keys at or above a lower cutoff.
inline FormalSeries truncate(const FormalSeries& t, Homogeneity c) {
  FormalSeries r(t.ctx);
  for (auto& [k, j] : t.terms)
    if (t.ctx.hom(k) < c) r.terms.emplace(k, j);
  return r;
}

/// Max coefficient deviation over common valid jet slots.
inline double series_distance(const FormalSeries& a, const FormalSeries& b) {
  a.check(b);
  double m = 0.0;
  for (auto& [k, j] : a.terms) m = std::max(m, jet_distance(j, b.coeff(k)));
  for (auto& [k, j] : b.terms)
    if (!a.terms.count(k)) m = std::max(m, jet_distance(j, a.ctx.zero_jet()));
  return m;
}

/// Every multi-index below the cutoff, grown from the unit by adding generators.
inline std::vector<MultiIndex> key_box(const SeriesContext& ctx) {
  std::set<MultiIndex> seen{MultiIndex(ctx.d)};
  std::vector<MultiIndex> frontier{MultiIndex(ctx.d)};
  while (!frontier.empty()) {
    std::vector<MultiIndex> next;
    for (auto& b : frontier) {
      auto push = [&](const MultiIndex& g) {
        auto s = b + g;
        if (ctx.in_range(s) && seen.insert(s).second) next.push_back(s);
      };
      for (int i = 0; i < ctx.d; ++i) push(MultiIndex::unit_x(ctx.d, i));
      for (int k = 1; ctx.in_range(b + MultiIndex::unit_prime(ctx.d, k)); ++k) push(MultiIndex::unit_prime(ctx.d, k));
    }
    frontier = std::move(next);
  }
  std::vector<MultiIndex> out(seen.begin(), seen.end());
  std::sort(out.begin(), out.end(), GradedLess{ctx.alpha});
  return out;
}

struct GradedNorm {
  double n0 = 1.0;
  std::map<Homogeneity, double> per_homogeneity;

  double at(const Homogeneity& h) const {
    auto it = per_homogeneity.find(h);
    return it == per_homogeneity.end() ? 0.0 : it->second;
  }
};

/// ||tau||_h = N0^{-<beta>} max_{|gamma| = h} max_{a0 in level grid} |tau_gamma(a0)|.
inline GradedNorm graded_norm(const FormalSeries& t, double n0, const EllipticityWindow& w) {
  if (!(n0 > 0.0 && n0 <= 1.0)) throw std::invalid_argument("N0 must lie in (0,1]");
  GradedNorm g;
  g.n0 = n0;
  for (auto& [k, j] : t.terms) {
    const int ang = angle(k);
    double m = 0.0;
    for (double a0 : w.centers(ang)) m = std::max(m, std::abs(jet_eval_unchecked(j, a0)));
    auto& slot = g.per_homogeneity[t.ctx.hom(k)];
    slot = std::max(slot, std::pow(n0, -ang) * m);
  }
  return g;
}

}  // namespace mrs
