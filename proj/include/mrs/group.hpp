#pragma once
// Structure group elements of exponential form
//   Gamma = sum_{k,a} 1/(k! a!) (pi0)^k (pi1)^a D0^k D1^a.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "series.hpp"

namespace mrs {

struct GroupElement {
  FormalSeries pi0;
  std::vector<FormalSeries> pi1;  // one per axis

  static GroupElement identity(const SeriesContext& c) {
    return {FormalSeries(c), std::vector<FormalSeries>(static_cast<std::size_t>(c.d), FormalSeries(c))};
  }
  const SeriesContext& ctx() const { return pi0.ctx; }

  /// pi1 may only charge keys with |beta| > 1. pi0 may charge any key (centering puts -x on z_x).
  void validate() const {
    if (static_cast<int>(pi1.size()) != ctx().d) throw std::invalid_argument("pi1 needs one series per axis");
    const Homogeneity one{1, 0, ctx().alpha};
    for (auto& p : pi1) {
      pi0.check(p);
      for (auto& [k, j] : p.terms)
        if (!(ctx().hom(k) > one)) throw std::invalid_argument("pi1 charges " + k.str() + " with |beta| <= 1");
    }
  }
};

namespace detail {

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Lowest homogeneity charged by s, or nullopt-like cutoff when empty.
inline bool min_hom(const FormalSeries& s, Homogeneity& h) {
  if (s.empty()) return false;
  h = s.min_hom();
  return true;
}

inline void for_each_multi(int d, int total, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> a(static_cast<std::size_t>(d), 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == d - 1) { a[static_cast<std::size_t>(axis)] = left; f(a); return; }
    for (int i = 0; i <= left; ++i) {
      a[static_cast<std::size_t>(axis)] = i;
      rec(axis + 1, left - i);
    }
  };
  rec(0, total);
}

}  // namespace detail

/// Gamma tau, exact below the cutoff. Terms whose lowest possible output
/// homogeneity |gamma| + k h0 + |a| (h1 - 1) reaches the cutoff are skipped.
inline FormalSeries apply(const GroupElement& g, const FormalSeries& t) {
  g.pi0.check(t);
  const auto& c = t.ctx;
  const int d = c.d;
  FormalSeries out(c);
  if (t.empty()) return out;

  Homogeneity h0{}, h1{};
  const bool has0 = detail::min_hom(g.pi0, h0);
  bool has1 = false;
  for (auto& p : g.pi1) {
    Homogeneity h;
    if (detail::min_hom(p, h)) { h1 = has1 ? std::min(h1, h) : h; has1 = true; }
  }
  const Homogeneity one{1, 0, c.alpha};
  const Homogeneity base = t.min_hom();

  int max_x = 0;
  for (auto& [k, j] : t.terms) max_x = std::max(max_x, k.abs_x());

  std::vector<FormalSeries> pow0{FormalSeries::unit(c)};
  for (int total = 0; total <= (has1 ? max_x : 0); ++total) {
    detail::for_each_multi(d, total, [&](const std::vector<int>& a) {
      Homogeneity lo = base;
      for (int i = 0; i < total; ++i) lo = lo + (h1 - one);
      if (total > 0 && !(lo < c.cutoff)) return;
      // (pi1)^a / a! and D1^a tau
      FormalSeries pa = FormalSeries::unit(c), da = t;
      double fa = 1.0;
      for (int ax = 0; ax < d; ++ax) {
        const int n = a[static_cast<std::size_t>(ax)];
        for (int i = 0; i < n; ++i) {
          pa = mul(pa, g.pi1[static_cast<std::size_t>(ax)]);
          da = d1(da, ax);
        }
        fa *= detail::factorial(n);
      }
      if (pa.empty() || da.empty()) return;
      FormalSeries dk = da;
      for (int k = 0;; ++k) {
        if (k > 0) {
          if (!has0) break;
          Homogeneity lk = lo;
          for (int i = 0; i < k; ++i) lk = lk + h0;
          if (!(lk < c.cutoff)) break;
          dk = d0(dk);
          if (dk.empty()) break;
          if (static_cast<int>(pow0.size()) <= k) pow0.push_back(mul(pow0.back(), g.pi0));
        }
        auto term = mul(mul(pow0[static_cast<std::size_t>(k)], pa), dk);
        out += term * (1.0 / (detail::factorial(k) * fa));
      }
    });
  }
  return out;
}

/// max |Gamma(tt') - Gamma(t)Gamma(t')| over stored coefficients.
inline double check_morphism(const GroupElement& g, const FormalSeries& a, const FormalSeries& b) {
  return series_distance(apply(g, mul(a, b)), mul(apply(g, a), apply(g, b)));
}

/// sum_{k>=1} (pi0)^k z_k.
inline FormalSeries a0_shift_series(const GroupElement& g) {
  const auto& c = g.ctx();
  FormalSeries s(c), p = FormalSeries::unit(c);
  for (int k = 1;; ++k) {
    p = mul(p, g.pi0);
    auto term = mul(p, FormalSeries::zk(c, k));
    if (term.empty()) break;
    s += term;
  }
  return s;
}

/// [Gamma, a0] tau.
inline FormalSeries commutator_a0_series(const GroupElement& g, const FormalSeries& t) {
  return apply(g, mul_a0(t)) - mul_a0(apply(g, t));
}

/// Max deviation of [Gamma, a0] tau from (sum_k (pi0)^k z_k) Gamma tau over the probes.
inline double commutator_a0(const GroupElement& g, const std::vector<FormalSeries>& probes) {
  const auto s = a0_shift_series(g);
  double m = 0.0;
  for (auto& t : probes) m = std::max(m, series_distance(commutator_a0_series(g, t), mul(s, apply(g, t))));
  return m;
}

/// Monomial basis z^beta for every key below the cutoff.
inline std::vector<FormalSeries> monomial_basis(const SeriesContext& c) {
  std::vector<FormalSeries> out;
  for (auto& k : key_box(c)) out.push_back(FormalSeries::monomial(c, k, 1.0));
  return out;
}

/// Smallest C with ||(Gamma - id) tau||_b <= C sum_{|g| < |b|} dist^{|b|-|g|} ||tau||_g.
inline std::map<Homogeneity, double> gamma_bound_check(const GroupElement& g, const FormalSeries& t, double n0,
                                                       double dist, const EllipticityWindow& w) {
  for (auto& [k, j] : t.terms)
    if (k.is_polynomial()) throw std::invalid_argument("gamma_bound_check expects tau in T_minus");
  auto diff = apply(g, t) - t;
  auto nd = graded_norm(diff, n0, w), nt = graded_norm(t, n0, w);
  std::map<Homogeneity, double> out;
  for (auto& [hb, v] : nd.per_homogeneity) {
    double den = 0.0;
    for (auto& [hg, u] : nt.per_homogeneity)
      if (hg < hb) den += std::pow(dist, hb.value() - hg.value()) * u;
    if (v == 0.0) out[hb] = 0.0;
    else out[hb] = den > 0.0 ? v / den : std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Recovers (pi0, pi1) from the images of a0 and z_x:
///   Gamma z_x = z_x + pi1,  Gamma a0 = a0 + sum_{k>=1} (pi0)^k z_k.
/// pi0 is determined below cutoff - alpha, which is all that acts below the cutoff.
inline GroupElement recover_parameters(const FormalSeries& image_a0, const std::vector<FormalSeries>& image_zx) {
  const auto& c = image_a0.ctx;
  auto g = GroupElement::identity(c);
  for (int ax = 0; ax < c.d; ++ax)
    g.pi1[static_cast<std::size_t>(ax)] = image_zx[static_cast<std::size_t>(ax)] - FormalSeries::zx(c, ax);
  FormalSeries a0(c);
  a0.add(MultiIndex(c.d), AJet::identity(c.center, c.J));
  const auto rest = image_a0 - a0;
  const auto e1 = MultiIndex::unit_prime(c.d, 1);
  // pi0 z_1 = rest - sum_{k>=2} (pi0)^k z_k, where the right side at |beta| + alpha only
  // involves pi0 below |beta|; iterate to the fixed point
  for (std::size_t it = 0; it <= key_box(c).size(); ++it) {
    auto lin = rest - (a0_shift_series(g) - mul(g.pi0, FormalSeries::zk(c, 1)));
    FormalSeries next(c);
    for (auto& [k, j] : lin.terms)
      if (k.contains(e1)) next.add(k - e1, j);
    if (series_distance(next, g.pi0) == 0.0 && next.size() == g.pi0.size()) break;
    g.pi0 = next;
  }
  return g;
}

/// Closure probe: Gamma o Gamma' on the monomial basis against the element
/// recovered from its action on a0 and z_x. Returns the max residual.
inline double closure_residual(const GroupElement& g, const GroupElement& h) {
  const auto& c = g.ctx();
  auto both = [&](const FormalSeries& t) { return apply(g, apply(h, t)); };
  FormalSeries a0(c);
  a0.add(MultiIndex(c.d), AJet::identity(c.center, c.J));
  std::vector<FormalSeries> zx;
  for (int ax = 0; ax < c.d; ++ax) zx.push_back(both(FormalSeries::zx(c, ax)));
  auto gh = recover_parameters(both(a0), zx);
  double m = series_distance(both(a0), apply(gh, a0));
  for (auto& b : monomial_basis(c)) m = std::max(m, series_distance(both(b), apply(gh, b)));
  return m;
}

}  // namespace mrs
