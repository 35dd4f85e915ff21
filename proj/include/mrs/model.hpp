#pragma once
// Stationary and centered models on a periodic space-time grid: noise,
// jet-valued heat solves, the recursive construction of (Pi, Pi^-), BPHZ
// estimation of q, centering, re-expansion maps and assumption checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "calculus.hpp"
#include "group.hpp"

namespace mrs {

// ---------------------------------------------------------------- fields

/// y.g + h with periodic jet fields g (one per axis, possibly absent) and h.
/// Below homogeneity 2 every populated component is at most affine in y.
struct AffineField {
  std::vector<JetField> g;  // empty or size d
  JetField h;

  AffineField() = default;
  AffineField(double center, int order, std::size_t n) : h(center, order, n) {}

  bool has_g() const { return !g.empty(); }
  int order() const { return h.order(); }
  std::size_t npts() const { return h.npts(); }
  int stale() const {
    int s = h.stale;
    for (auto& gi : g) s = std::max(s, gi.stale);
    return s;
  }

  /// Value at an unwrapped grid point.
  AJet at(const TorusGrid& grid, const GridPoint& p) const {
    const std::size_t f = grid.flat(p);
    AJet v = h.at(f);
    for (std::size_t i = 0; i < g.size(); ++i) {
      AJet gi = g[i].at(f);
      gi *= p[i + 1] * grid.dx();
      v += gi;
    }
    return v;
  }

  AffineField& operator+=(const AffineField& o) {
    h += o.h;
    if (o.has_g()) {
      if (!has_g()) g = o.g;
      else
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.g[i];
    }
    return *this;
  }
  AffineField& operator*=(double s) {
    h *= s;
    for (auto& gi : g) gi *= s;
    return *this;
  }
};

/// r += a * b (jet Cauchy product); y^2 terms are refused.
inline void affine_fma(AffineField& r, const AffineField& a, const AffineField& b, double s = 1.0) {
  if (a.has_g() && b.has_g()) throw std::logic_error("product of two y-linear components leaves the affine class");
  jet_field_fma(r.h, a.h, b.h, s);
  const AffineField* lin = a.has_g() ? &a : (b.has_g() ? &b : nullptr);
  if (!lin) return;
  const AffineField& other = lin == &a ? b : a;
  if (!r.has_g()) r.g.assign(lin->g.size(), JetField(r.h.center, r.h.order(), r.h.npts()));
  for (std::size_t i = 0; i < lin->g.size(); ++i) jet_field_fma(r.g[i], lin->g[i], other.h, s);
}

/// r += a * k for a spatially constant jet k.
inline void affine_axpy(AffineField& r, const AffineField& a, const AJet& k) {
  jet_field_axpy(r.h, a.h, k);
  if (!a.has_g()) return;
  if (!r.has_g()) r.g.assign(a.g.size(), JetField(r.h.center, r.h.order(), r.h.npts()));
  for (std::size_t i = 0; i < a.g.size(); ++i) jet_field_axpy(r.g[i], a.g[i], k);
}

namespace detail {

inline JetField jet_map(const Spectral& sp, const JetField& a, const std::function<cplx(std::size_t)>& m) {
  JetField r = a;
  for (std::size_t k = 0; k < a.c.size(); ++k) r.c[k] = apply_multiplier(sp, a.c[k], m);
  return r;
}
inline std::function<cplx(std::size_t)> lap_symbol(const Spectral& sp) {
  return [&sp](std::size_t i) { return cplx(-sp.ksq()[i], 0.0); };
}
inline std::function<cplx(std::size_t)> grad_symbol(const Spectral& sp, int axis) {
  return [&sp, axis](std::size_t i) { return sp.nyquist(axis, i) ? cplx(0, 0) : cplx(0.0, sp.k(axis)[i]); };
}

}  // namespace detail

/// Delta(y.g + h) = y.Delta g + (Delta h + 2 div g).
inline AffineField affine_laplacian(const Spectral& sp, const AffineField& u) {
  AffineField r;
  r.h = detail::jet_map(sp, u.h, detail::lap_symbol(sp));
  for (std::size_t i = 0; i < u.g.size(); ++i) {
    r.g.push_back(detail::jet_map(sp, u.g[i], detail::lap_symbol(sp)));
    auto dg = detail::jet_map(sp, u.g[i], detail::grad_symbol(sp, static_cast<int>(i)));
    dg *= 2.0;
    r.h += dg;
  }
  return r;
}

/// d_j(y.g + h) = y.d_j g + (g_j + d_j h).
inline AffineField affine_gradient(const Spectral& sp, const AffineField& u, int axis) {
  AffineField r;
  r.h = detail::jet_map(sp, u.h, detail::grad_symbol(sp, axis));
  for (std::size_t i = 0; i < u.g.size(); ++i) r.g.push_back(detail::jet_map(sp, u.g[i], detail::grad_symbol(sp, axis)));
  if (u.has_g()) r.h += u.g[static_cast<std::size_t>(axis)];
  return r;
}

/// (d_t - a0 Delta) applied with a0 = center + s propagated through the jet.
inline AffineField apply_heat_operator(const Spectral& sp, const AffineField& u) {
  const double ac = u.h.center;
  auto op = [&](const JetField& f) {
    JetField r = f;
    const int J = f.order();
    std::vector<Field> lap(f.c.size());
    for (int m = 0; m <= J; ++m) {
      const auto& fm = f.c[static_cast<std::size_t>(m)];
      r.c[static_cast<std::size_t>(m)] = apply_multiplier(sp, fm, [&](std::size_t i) {
        const double w = sp.nyquist_t(i) ? 0.0 : sp.omega()[i];
        return cplx(ac * sp.ksq()[i], w);
      });
      lap[static_cast<std::size_t>(m)] = laplacian(sp, fm);
    }
    for (int m = 1; m <= J; ++m)
      for (std::size_t p = 0; p < r.c[0].size(); ++p) r.c[static_cast<std::size_t>(m)][p] -= lap[static_cast<std::size_t>(m - 1)][p];
    return r;
  };
  AffineField r;
  r.h = op(u.h);
  for (std::size_t i = 0; i < u.g.size(); ++i) {
    r.g.push_back(op(u.g[i]));
    // -2 a0 d_i g_i
    auto dg = detail::jet_map(sp, u.g[i], detail::grad_symbol(sp, static_cast<int>(i)));
    JetField t(ac, u.h.order(), u.npts());
    jet_field_axpy(t, dg, AJet::identity(ac, u.h.order()));
    t *= -2.0;
    r.h += t;
  }
  return r;
}

// ---------------------------------------------------------------- noise

struct NoiseSpec {
  std::uint64_t seed = 1;
  double decay = 0.25;   // filter (1 + |k|^2 + |w|)^(-decay/2) applied to white noise
  double eps = 1.0 / 32; // mollification scale
  std::string kernel_id = "gauss";
  double amplitude = 1.0;

  /// decay s such that the filtered white noise scales like C^(alpha - 2):
  /// white noise has parabolic regularity -(d+2)/2 and the filter adds s.
  static double decay_for(Rational alpha, int d) { return alpha.value() - 2.0 + (d + 2) / 2.0; }

  void validate(const TorusGrid& g) const {
    if (!(eps >= 2 * g.dx())) throw std::invalid_argument("noise eps below 2 dx is unresolvable");
    if (!(decay >= 0)) throw std::invalid_argument("noise decay must be non-negative");
    if (kernel_id != "gauss" && kernel_id != "bump") throw std::invalid_argument("unknown noise kernel " + kernel_id);
    if (!(amplitude >= 0)) throw std::invalid_argument("noise amplitude must be non-negative");
  }
};

/// SplitMix64 step, used to derive independent member seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Fourier multiplier of the noise filter and mollifier (even in k and w).
inline std::vector<double> noise_multiplier(const NoiseSpec& spec, const Spectral& sp) {
  std::vector<double> m(sp.nspec());
  std::vector<double> bump;
  if (spec.kernel_id == "bump") bump = Mollifier::bump_kernel(sp.grid().d).multiplier(sp, spec.eps);
  const double e2 = spec.eps * spec.eps;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (sp.nyquist_t(i)) { m[i] = 0.0; continue; }
    const double k2 = sp.ksq()[i], w = sp.omega()[i];
    const double filt = std::pow(1.0 + k2 + std::abs(w), -spec.decay / 2);
    const double moll = spec.kernel_id == "gauss" ? std::exp(-(e2 * k2 + e2 * e2 * w * w) / 2) : bump[i];
    m[i] = spec.amplitude * filt * moll;
  }
  return m;
}

/// Periodic Gaussian noise: white noise of variance 1/cell_volume per grid
/// point, filtered and mollified spectrally. Deterministic per seed.
inline Field sample_noise(const NoiseSpec& spec, const TorusGrid& g) {
  spec.validate(g);
  auto sp = spectral_for(g);
  std::mt19937_64 rng(mix_seed(spec.seed, 0));
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(g.cell_volume()));
  Field w(g.size());
  for (auto& v : w) v = nd(rng);
  const auto m = noise_multiplier(spec, *sp);
  return apply_multiplier(*sp, w, [&](std::size_t i) { return cplx(m[i], 0.0); });
}

// ---------------------------------------------------------------- heat solve

/// Affine correction P(y) = p0 + p1.y subtracted to make the problem solvable.
struct AffineRecord {
  AJet p0;
  std::vector<AJet> p1;  // empty when the right side has no y-part

  AJet at(const TorusGrid& grid, const GridPoint& p) const {
    AJet v = p0;
    for (std::size_t i = 0; i < p1.size(); ++i) v += p1[i] * (p[i + 1] * grid.dx());
    return v;
  }
};

struct HeatSolution {
  AffineField u;
  AffineRecord P;
};

/// Solves (d_t - a0 Delta) u = rhs - P with <u> = 0, a0 = center + s, via the
/// recursion L_c u_m = f_m + Delta u_{m-1} per Fourier mode (exact in time).
/// The y-part follows L(y g) = y L g - 2 a0 div g. Time-Nyquist modes are
/// projected out, as in the noise.
inline HeatSolution heat_solve(const AffineField& rhs, const Spectral& sp) {
  const auto& grid = sp.grid();
  if (rhs.npts() != grid.size()) throw std::invalid_argument("heat_solve: field size does not match grid");
  const double ac = rhs.h.center;
  const int J = rhs.order();
  const std::size_t ns = sp.nspec();
  const double N = static_cast<double>(grid.size());
  HeatSolution out;
  out.u = AffineField(ac, J, grid.size());
  out.u.h.stale = rhs.stale();
  out.P.p0 = AJet(ac, J);
  out.P.p0.stale = rhs.stale();

  auto symbol = [&](std::size_t i) { return cplx(ac * sp.ksq()[i], sp.omega()[i]); };
  auto solve_series = [&](const JetField& f, const std::vector<std::vector<cplx>>* extra, std::vector<std::vector<cplx>>& uhat,
                          AJet& mean) {
    uhat.assign(static_cast<std::size_t>(J + 1), std::vector<cplx>(ns));
    for (int m = 0; m <= J; ++m) {
      auto fh = sp.forward(f.c[static_cast<std::size_t>(m)]);
      auto& um = uhat[static_cast<std::size_t>(m)];
      for (std::size_t i = 0; i < ns; ++i) {
        cplx r = fh[i];
        if (extra) r += (*extra)[static_cast<std::size_t>(m)][i];
        if (m > 0) r -= sp.ksq()[i] * uhat[static_cast<std::size_t>(m - 1)][i];
        if (sp.nyquist_t(i)) { um[i] = 0.0; continue; }
        const cplx s = symbol(i);
        if (std::abs(s) == 0.0) {
          if (i != 0) throw std::runtime_error("resonant heat mode without correction");
          mean.c[static_cast<std::size_t>(m)] = r.real() / N;
          um[i] = 0.0;
          continue;
        }
        um[i] = r / s;
      }
    }
  };

  std::vector<std::vector<cplx>> divg(static_cast<std::size_t>(J + 1), std::vector<cplx>(ns, 0.0));
  if (rhs.has_g()) {
    out.u.g.assign(rhs.g.size(), JetField(ac, J, grid.size()));
    for (std::size_t a = 0; a < rhs.g.size(); ++a) {
      std::vector<std::vector<cplx>> gh;
      AJet mean(ac, J);
      solve_series(rhs.g[a], nullptr, gh, mean);
      mean.stale = rhs.stale();
      out.P.p1.push_back(mean);
      for (int m = 0; m <= J; ++m) {
        out.u.g[a].c[static_cast<std::size_t>(m)] = sp.backward(gh[static_cast<std::size_t>(m)]);
        // 2 a_c div g_m + 2 div g_{m-1}
        for (std::size_t i = 0; i < ns; ++i) {
          if (sp.nyquist(static_cast<int>(a), i)) continue;
          const cplx ik(0.0, sp.k(static_cast<int>(a))[i]);
          divg[static_cast<std::size_t>(m)][i] += 2.0 * ac * ik * gh[static_cast<std::size_t>(m)][i];
          if (m + 1 <= J) divg[static_cast<std::size_t>(m + 1)][i] += 2.0 * ik * gh[static_cast<std::size_t>(m)][i];
        }
      }
      out.u.g[a].stale = rhs.stale();
    }
  }
  std::vector<std::vector<cplx>> hh;
  solve_series(rhs.h, rhs.has_g() ? &divg : nullptr, hh, out.P.p0);
  for (int m = 0; m <= J; ++m) out.u.h.c[static_cast<std::size_t>(m)] = sp.backward(hh[static_cast<std::size_t>(m)]);
  return out;
}

/// max over jet orders of |(d_t - a0 Delta) u - rhs + P| on the grid, with the
/// time-Nyquist plane of rhs projected out.
inline double heat_residual(const Spectral& sp, const HeatSolution& s, const AffineField& rhs) {
  auto Lu = apply_heat_operator(sp, s.u);
  auto proj = [&](const Field& f) {
    return apply_multiplier(sp, f, [&](std::size_t i) { return sp.nyquist_t(i) ? cplx(0, 0) : cplx(1, 0); });
  };
  double r = 0.0;
  const int J = rhs.order();
  for (int m = 0; m <= J - s.u.stale(); ++m) {
    const auto mm = static_cast<std::size_t>(m);
    auto fh = proj(rhs.h.c[mm]);
    for (std::size_t p = 0; p < fh.size(); ++p) r = std::max(r, std::abs(Lu.h.c[mm][p] - fh[p] + s.P.p0.c[mm]));
    for (std::size_t a = 0; a < rhs.g.size(); ++a) {
      auto fg = proj(rhs.g[a].c[mm]);
      for (std::size_t p = 0; p < fg.size(); ++p) r = std::max(r, std::abs(Lu.g[a].c[mm][p] - fg[p] + s.P.p1[a].c[mm]));
    }
  }
  return r;
}

// ---------------------------------------------------------------- model

/// q on keys (0, beta') with |beta'|_s <= n - 1.
struct RenormVector {
  std::map<MultiIndex, AJet> q;
  std::map<MultiIndex, AJet> stderr_;
  int ensemble_size = 0;

  FormalSeries series(const SeriesContext& c) const {
    FormalSeries s(c);
    for (auto& [k, j] : q) s.add(k, j);
    return s;
  }
  /// Largest |q| coefficient over components and orders.
  double max_abs() const {
    double m = 0.0;
    for (auto& [k, j] : q)
      for (double v : j.c) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Keys on which q may live.
inline std::vector<MultiIndex> renorm_keys(const IndexSet& index) {
  const int n = critical_integers(index.alpha).n;
  std::vector<MultiIndex> out;
  for (auto& e : index.entries)
    if (e.beta.abs_x() == 0 && scaled_norm(e.beta.beta_prime) <= n - 1) out.push_back(e.beta);
  return out;
}

struct ModelField {
  TorusGrid grid;
  SeriesContext ctx;
  IndexSet index;
  NoiseSpec noise;
  Field xi;
  std::map<MultiIndex, AffineField> Pi, Pi_minus;
  std::map<MultiIndex, AffineRecord> P;
  // derived data (filled by build_stationary)
  std::map<MultiIndex, AffineField> lap;
  std::vector<std::map<MultiIndex, AffineField>> grad;
  FormalSeries q{SeriesContext{}};

  std::shared_ptr<const Spectral> spectral() const { return spectral_for(grid); }

  FormalSeries series_of(const std::map<MultiIndex, AffineField>& m, const GridPoint& y) const {
    FormalSeries s(ctx);
    for (auto& [k, f] : m) s.add(k, f.at(grid, y));
    return s;
  }
  FormalSeries Pi_at(const GridPoint& y) const { return series_of(Pi, y); }
  FormalSeries Pi_minus_at(const GridPoint& y) const { return series_of(Pi_minus, y); }
  FormalSeries lap_at(const GridPoint& y) const { return series_of(lap, y); }
  FormalSeries grad_at(const GridPoint& y, int axis) const { return series_of(grad[static_cast<std::size_t>(axis)], y); }
  FormalSeries P_at(const GridPoint& y) const {
    FormalSeries s(ctx);
    for (auto& [k, r] : P) s.add(k, r.at(grid, y));
    return s;
  }
  double xi_at(const GridPoint& y) const { return xi[grid.flat(y)]; }
};

struct BuildOptions {
  double center = 1.0;                     // jet center a_c
  std::optional<Homogeneity> max_level;    // build only |beta| <= max_level
  bool derive = true;                      // compute Laplacian and gradient series
};

namespace detail {

struct PowerCache {
  const std::map<MultiIndex, AffineField>& pi;
  double center;
  int order;
  std::size_t n;
  std::map<std::pair<int, MultiIndex>, std::optional<AffineField>> memo;

  /// (Pi^k)_delta for k >= 1, or nullopt when structurally zero.
  const std::optional<AffineField>& get(int k, const MultiIndex& delta) {
    auto key = std::make_pair(k, delta);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::optional<AffineField> out;
    if (k == 1) {
      if (auto it = pi.find(delta); it != pi.end()) out = it->second;
    } else {
      for (auto& [gamma, f] : pi) {
        if (!delta.contains(gamma)) continue;
        const auto& rest = get(k - 1, delta - gamma);
        if (!rest) continue;
        if (!out) out = AffineField(center, order, n);
        affine_fma(*out, f, *rest);
      }
    }
    return memo.emplace(key, std::move(out)).first->second;
  }
};

}  // namespace detail

/// Recursive stationary model for one noise realization:
///   (d_t - a0 Delta) Pi + P = Pi^-,  <Pi> = z_x . y,
///   Pi^- = sum_{k>=1} z_k Pi^k Delta Pi - sum_{k>=0} (1/k!) Pi^k (D0)^k q + xi 1.
inline ModelField build_stationary(const NoiseSpec& spec, const TorusGrid& grid, const IndexSet& index, const RenormVector& rq,
                                   const BuildOptions& opt = {}) {
  grid.validate();
  ModelField M;
  M.grid = grid;
  M.noise = spec;
  M.index = index;
  M.ctx = SeriesContext::make(index.alpha, index.d, index.cutoff, opt.center);
  if (index.d != grid.d) throw std::invalid_argument("index set and grid dimensions differ");
  const auto& ctx = M.ctx;
  const int J = ctx.J;
  const std::size_t n = grid.size();
  auto sp = spectral_for(grid);
  M.xi = sample_noise(spec, grid);
  M.q = FormalSeries(ctx);
  for (auto& [k, j] : rq.q) {
    if (k.abs_x() != 0) throw std::invalid_argument("q must not depend on z_x");
    AJet jj = j.center == ctx.center ? j : jet_recenter(j, ctx.center);
    M.q.add(k, jj);
  }
  // (D0)^k q / k!
  std::vector<FormalSeries> dq{M.q};
  for (int k = 1; k <= 2 * J && !dq.back().empty(); ++k) dq.push_back(d0(dq.back()) * (1.0 / k));

  // affine sector
  for (int i = 0; i < grid.d; ++i) {
    AffineField f(ctx.center, J, n);
    f.g.assign(static_cast<std::size_t>(grid.d), JetField(ctx.center, J, n));
    std::fill(f.g[static_cast<std::size_t>(i)].c[0].begin(), f.g[static_cast<std::size_t>(i)].c[0].end(), 1.0);
    M.Pi.emplace(MultiIndex::unit_x(grid.d, i), std::move(f));
  }
  detail::PowerCache pw{M.Pi, ctx.center, J, n, {}};
  std::map<MultiIndex, AffineField> lap;

  for (auto& e : index.entries) {
    const auto& beta = e.beta;
    if (beta.is_polynomial()) continue;
    if (opt.max_level && e.hom > *opt.max_level) continue;
    AffineField minus(ctx.center, J, n);
    if (beta.is_zero())
      for (std::size_t p = 0; p < n; ++p) minus.h.c[0][p] = M.xi[p];
    // sum_k z_k Pi^k Delta Pi
    for (auto [k, cnt] : beta.beta_prime) {
      (void)cnt;
      const auto delta = beta - MultiIndex::unit_prime(grid.d, k);
      for (auto& [gamma, lg] : lap) {
        if (!delta.contains(gamma)) continue;
        const auto& pk = pw.get(k, delta - gamma);
        if (pk) affine_fma(minus, *pk, lg);
      }
    }
    // - sum_k (1/k!) Pi^k (D0)^k q
    for (std::size_t k = 0; k < dq.size(); ++k)
      for (auto& [tau, jet] : dq[k].terms) {
        if (!beta.contains(tau)) continue;
        const auto sigma = beta - tau;
        if (k == 0) {
          if (sigma.is_zero()) {
            AJet neg = jet * -1.0;
            minus.h.add_constant(neg);
          }
          continue;
        }
        const auto& pk = pw.get(static_cast<int>(k), sigma);
        if (pk) affine_axpy(minus, *pk, jet * -1.0);
      }
    auto sol = heat_solve(minus, *sp);
    M.P.emplace(beta, sol.P);
    lap.emplace(beta, affine_laplacian(*sp, sol.u));
    M.Pi.emplace(beta, std::move(sol.u));
    M.Pi_minus.emplace(beta, std::move(minus));
  }
  if (opt.derive) {
    M.lap = std::move(lap);
    M.grad.assign(static_cast<std::size_t>(grid.d), {});
    for (int a = 0; a < grid.d; ++a)
      for (auto& [k, f] : M.Pi) M.grad[static_cast<std::size_t>(a)].emplace(k, affine_gradient(*sp, f, a));
  }
  return M;
}

/// Periodic averages <g>, <h> of a component.
struct ComponentMean {
  AJet h;
  std::vector<AJet> g;
};

inline ComponentMean component_mean(const AffineField& f) {
  ComponentMean m;
  m.h = AJet(f.h.center, f.order());
  for (std::size_t k = 0; k < f.h.c.size(); ++k) m.h.c[k] = field_mean(f.h.c[k]);
  m.h.stale = f.stale();
  for (auto& gi : f.g) {
    AJet a(f.h.center, f.order());
    for (std::size_t k = 0; k < gi.c.size(); ++k) a.c[k] = field_mean(gi.c[k]);
    a.stale = f.stale();
    m.g.push_back(a);
  }
  return m;
}

// ---------------------------------------------------------------- BPHZ

struct EnsembleTemplate {
  NoiseSpec noise;
  TorusGrid grid;
  IndexSet index;
  double center = 1.0;
};

inline NoiseSpec member_noise(const NoiseSpec& base, int member) {
  NoiseSpec s = base;
  s.seed = mix_seed(base.seed, static_cast<std::uint64_t>(member) + 1);
  return s;
}

/// Mean and standard error per jet coefficient of a list of jets.
inline std::pair<AJet, AJet> jet_mean_stderr(const std::vector<AJet>& v) {
  if (v.size() < 2) throw std::invalid_argument("need at least two samples");
  AJet mean = v.front(), se = v.front();
  const std::size_t M = v.size();
  for (std::size_t k = 0; k < mean.c.size(); ++k) {
    std::vector<double> xs;
    for (auto& j : v) xs.push_back(j.c[k]);
    const double mu = pairwise_sum(xs) / static_cast<double>(M);
    std::vector<double> sq;
    for (double x : xs) sq.push_back((x - mu) * (x - mu));
    mean.c[k] = mu;
    se.c[k] = std::sqrt(pairwise_sum(sq) / static_cast<double>(M - 1) / static_cast<double>(M));
  }
  for (auto& j : v) mean.stale = std::max(mean.stale, j.stale);
  se.stale = mean.stale;
  return {mean, se};
}

/// BPHZ: level by level in homogeneity, q_beta is the ensemble mean of the
/// space-time average of Pi^-_beta computed with q_beta = 0. Pi^-_beta depends
/// on q_beta through -q_beta alone (coefficient -1), so each solve is explicit.
inline RenormVector estimate_q(const EnsembleTemplate& T, int M) {
  if (M < 2) throw std::invalid_argument("ensemble size must be at least 2");
  RenormVector rq;
  rq.ensemble_size = M;
  auto keys = renorm_keys(T.index);
  std::vector<Homogeneity> levels;
  for (auto& k : keys) {
    auto h = homogeneity(k, T.index.alpha);
    if (std::find(levels.begin(), levels.end(), h) == levels.end()) levels.push_back(h);
  }
  std::sort(levels.begin(), levels.end());
  for (auto& lvl : levels) {
    std::vector<std::map<MultiIndex, AJet>> per(static_cast<std::size_t>(M));
    parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
      BuildOptions o;
      o.center = T.center;
      o.max_level = lvl;
      o.derive = false;
      auto model = build_stationary(member_noise(T.noise, static_cast<int>(m)), T.grid, T.index, rq, o);
      for (auto& k : keys)
        if (homogeneity(k, T.index.alpha) == lvl) per[m][k] = component_mean(model.Pi_minus.at(k)).h;
    });
    for (auto& k : keys) {
      if (!(homogeneity(k, T.index.alpha) == lvl)) continue;
      std::vector<AJet> v;
      for (auto& p : per) v.push_back(p.at(k));
      auto [mu, se] = jet_mean_stderr(v);
      rq.q[k] = mu;
      rq.stderr_[k] = se;
    }
  }
  return rq;
}

/// Ensemble statistics of the periodic averages of Pi^- on a fresh ensemble.
struct MeanReport {
  std::map<MultiIndex, AJet> mean_h, stderr_h;
  std::map<MultiIndex, std::vector<AJet>> mean_g, stderr_g;
};

inline MeanReport ensemble_means(const EnsembleTemplate& T, const RenormVector& rq, int M, int first_member) {
  std::vector<std::map<MultiIndex, ComponentMean>> per(static_cast<std::size_t>(M));
  parallel_for(static_cast<std::size_t>(M), [&](std::size_t m) {
    BuildOptions o;
    o.center = T.center;
    o.derive = false;
    auto model = build_stationary(member_noise(T.noise, first_member + static_cast<int>(m)), T.grid, T.index, rq, o);
    for (auto& [k, f] : model.Pi_minus) per[m][k] = component_mean(f);
  });
  MeanReport r;
  for (auto& [k, cm] : per.front()) {
    std::vector<AJet> hs;
    for (auto& p : per) hs.push_back(p.at(k).h);
    std::tie(r.mean_h[k], r.stderr_h[k]) = jet_mean_stderr(hs);
    for (std::size_t a = 0; a < cm.g.size(); ++a) {
      std::vector<AJet> gs;
      for (auto& p : per) gs.push_back(p.at(k).g[a]);
      auto [mu, se] = jet_mean_stderr(gs);
      r.mean_g[k].push_back(mu);
      r.stderr_g[k].push_back(se);
    }
  }
  return r;
}

/// max over valid coefficients of |mean| / stderr (0/0 counts as 0).
inline double max_z_score(const AJet& mean, const AJet& se) {
  double z = 0.0;
  for (int k = 0; k < mean.valid(); ++k) {
    const double m = std::abs(mean.c[static_cast<std::size_t>(k)]), s = se.c[static_cast<std::size_t>(k)];
    if (m == 0.0) continue;
    z = std::max(z, s > 0 ? m / s : std::numeric_limits<double>::infinity());
  }
  return z;
}

// ---------------------------------------------------------------- centering

/// Centered model data at base point x: Gamma_x with parameters (pi0, pi1);
/// Pi_x = Gamma_x Pi + pi0.
struct Centering {
  GridPoint x;
  GroupElement gamma;
};

inline std::vector<Homogeneity> key_levels(const SeriesContext& c) {
  std::vector<Homogeneity> lv;
  for (auto& k : key_box(c)) {
    auto h = c.hom(k);
    if (std::find(lv.begin(), lv.end(), h) == lv.end()) lv.push_back(h);
  }
  std::sort(lv.begin(), lv.end());
  return lv;
}

/// Inductive subtraction of pi0 + pi1.y so that Pi_x(x) = 0 and, for |beta| > 1,
/// grad Pi_{x beta}(x) = 0.
/// With `below`, only levels strictly below it are centered (enough for
/// components of lower homogeneity).
inline Centering center(const ModelField& M, const GridPoint& x, std::optional<Homogeneity> below = std::nullopt) {
  const auto& c = M.ctx;
  Centering C{x, GroupElement::identity(c)};
  const auto pix = M.Pi_at(x);
  std::vector<FormalSeries> gx;
  for (int a = 0; a < c.d; ++a) gx.push_back(M.grad_at(x, a));
  const Homogeneity one{1, 0, c.alpha};
  for (auto& lvl : key_levels(c)) {
    if (below && !(lvl < *below)) break;
    auto B = apply(C.gamma, pix);
    std::vector<FormalSeries> gB;
    if (lvl > one)
      for (auto& g : gx) gB.push_back(apply(C.gamma, g));
    for (auto& k : key_box(c)) {
      if (!(c.hom(k) == lvl)) continue;
      AJet v = B.coeff(k);
      if (lvl > one) {
        for (int a = 0; a < c.d; ++a) {
          AJet p1 = gB[static_cast<std::size_t>(a)].coeff(k) * -1.0;
          v += p1 * (x[static_cast<std::size_t>(a + 1)] * M.grid.dx());
          C.gamma.pi1[static_cast<std::size_t>(a)].add(k, p1);
        }
      }
      C.gamma.pi0.add(k, v * -1.0);
    }
  }
  return C;
}

inline FormalSeries centered_Pi(const ModelField& M, const Centering& C, const GridPoint& y) {
  return apply(C.gamma, M.Pi_at(y)) + C.gamma.pi0;
}
inline FormalSeries centered_lap(const ModelField& M, const Centering& C, const GridPoint& y) {
  return apply(C.gamma, M.lap_at(y));
}
inline FormalSeries centered_grad(const ModelField& M, const Centering& C, const GridPoint& y, int axis) {
  return apply(C.gamma, M.grad_at(y, axis));
}

/// Pi^-_x(y) = sum_k z_k Pi_x^k Delta Pi_x - sum_k (1/k!) Pi_x^k (D0)^k q + xi 1.
/// Powers of Pi_x never truncate (key 0 is idempotent), so the loop ends once
/// z_k and (D0)^k q have both left the range.
inline FormalSeries centered_Pi_minus(const ModelField& M, const Centering& C, const GridPoint& y) {
  const auto& c = M.ctx;
  const auto px = centered_Pi(M, C, y), lx = centered_lap(M, C, y);
  FormalSeries out = M.xi_at(y) * FormalSeries::unit(c) - M.q;
  FormalSeries pk = FormalSeries::unit(c), dq = M.q;
  for (int k = 1;; ++k) {
    const auto zk = FormalSeries::zk(c, k);
    dq = d0(dq) * (1.0 / k);
    if (zk.empty() && dq.empty()) break;
    pk = mul(pk, px);
    if (!zk.empty()) out += mul(zk, mul(pk, lx));
    if (!dq.empty()) out -= mul(pk, dq);
  }
  return out;
}

/// sum_{k>=1} p^k z_k t.
inline FormalSeries shift_series(const FormalSeries& p, const FormalSeries& t) {
  const auto& c = t.ctx;
  FormalSeries out(c), pk = FormalSeries::unit(c);
  for (int k = 1;; ++k) {
    const auto zk = FormalSeries::zk(c, k);
    if (zk.empty()) break;
    pk = mul(pk, p);
    out += mul(mul(pk, zk), t);
  }
  return out;
}

/// Second route: Pi^-_x = Gamma_x Pi^- + sum_k (pi0_x)^k z_k Delta Pi_x.
inline FormalSeries centered_Pi_minus_route2(const ModelField& M, const Centering& C, const GridPoint& y) {
  return apply(C.gamma, M.Pi_minus_at(y)) + shift_series(C.gamma.pi0, centered_lap(M, C, y));
}

/// Re-expansion map Gamma_yx with pi0 = Pi_x(y) and pi1 from matching
/// gradients at y; `pi1_low` receives the largest pi1 coefficient at |beta| <= 1
/// (zero in exact arithmetic), which is dropped.
inline GroupElement gamma_yx(const ModelField& M, const Centering& Cx, const Centering& Cy, double* pi1_low = nullptr) {
  const auto& c = M.ctx;
  auto g = GroupElement::identity(c);
  g.pi0 = centered_Pi(M, Cx, Cy.x);
  const Homogeneity one{1, 0, c.alpha};
  double low = 0.0;
  for (int a = 0; a < c.d; ++a) {
    auto gy = centered_grad(M, Cy, Cy.x, a);
    FormalSeries S(c);
    for (auto& [k, j] : gy.terms)
      if (c.hom(k) < one) S.add(k, j);
    auto g0 = GroupElement::identity(c);
    g0.pi0 = g.pi0;
    auto p1 = centered_grad(M, Cx, Cy.x, a) - FormalSeries::zx(c, a) - apply(g0, S);
    for (auto& [k, j] : p1.terms) {
      if (c.hom(k) > one) g.pi1[static_cast<std::size_t>(a)].add(k, j);
      else
        for (int i = 0; i < j.valid(); ++i) low = std::max(low, std::abs(j.c[static_cast<std::size_t>(i)]));
    }
  }
  if (pi1_low) *pi1_low = low;
  return g;
}

/// Max coefficient magnitude over valid jet slots.
inline double series_max_abs(const FormalSeries& s) {
  double m = 0.0;
  for (auto& [k, j] : s.terms)
    for (int i = 0; i < j.valid(); ++i) m = std::max(m, std::abs(j.c[static_cast<std::size_t>(i)]));
  return m;
}

/// Gamma_yx Pi_y(z) - Pi_x(z) + Pi_x(y).
inline double reexpansion_residual(const ModelField& M, const Centering& Cx, const Centering& Cy, const GroupElement& gyx,
                                   const GridPoint& z) {
  return series_max_abs(apply(gyx, centered_Pi(M, Cy, z)) - centered_Pi(M, Cx, z) + gyx.pi0);
}

/// Gamma_yx Pi^-_y(z) - Pi^-_x(z) + sum_k (pi0_yx)^k z_k Delta Pi_x(z).
inline double reexpansion_minus_residual(const ModelField& M, const Centering& Cx, const Centering& Cy,
                                         const GroupElement& gyx, const GridPoint& z) {
  return series_max_abs(apply(gyx, centered_Pi_minus(M, Cy, z)) - centered_Pi_minus(M, Cx, z) +
                        shift_series(gyx.pi0, centered_lap(M, Cx, z)));
}

/// Pi^-_x(x) - xi(x) 1 + q, with Pi^-_x taken along the second route.
inline double anchor_residual(const ModelField& M, const Centering& C) {
  return series_max_abs(centered_Pi_minus_route2(M, C, C.x) - M.xi_at(C.x) * FormalSeries::unit(M.ctx) + M.q);
}

/// Centered components as fields: (Pi_x)_beta = sum_{gamma,m} c_{gamma,m}(y) [Gamma_x e_{gamma,m}]_beta + pi0_beta,
/// with e_{gamma,m} = z^gamma (a0 - a_c)^m.
/// `src` defaults to M.Pi; the constant pi0 shift is added only when `shift` is set.
inline std::map<MultiIndex, AffineField> centered_fields(const ModelField& M, const Centering& C,
                                                         const std::map<MultiIndex, AffineField>* src = nullptr,
                                                         bool shift = true) {
  const auto& c = M.ctx;
  const int J = c.J;
  const std::size_t n = M.grid.size();
  std::map<MultiIndex, AffineField> out;
  auto field_for = [&](const MultiIndex& k) -> AffineField& {
    auto it = out.find(k);
    if (it == out.end()) it = out.emplace(k, AffineField(c.center, J, n)).first;
    return it->second;
  };
  for (auto& [gamma, f] : src ? *src : M.Pi) {
    for (int m = 0; m <= J; ++m) {
      const auto mm = static_cast<std::size_t>(m);
      AJet e(c.center, J);
      e.c[mm] = 1.0;
      FormalSeries basis(c);
      basis.add(gamma, e);
      const auto img = apply(C.gamma, basis);
      // the order-m coefficient field of Pi_gamma, as an order-0 jet field
      AffineField coef(c.center, J, n);
      coef.h.c[0] = f.h.c[mm];
      coef.h.stale = f.stale();
      for (auto& gi : f.g) {
        JetField jf(c.center, J, n);
        jf.c[0] = gi.c[mm];
        jf.stale = f.stale();
        coef.g.push_back(std::move(jf));
      }
      for (auto& [beta, jet] : img.terms) affine_axpy(field_for(beta), coef, jet);
    }
  }
  if (shift)
    for (auto& [k, j] : C.gamma.pi0.terms) field_for(k).h.add_constant(j);
  return out;
}

struct CompatibilityReport {
  double stationary = 0.0;  // max |L Pi - Pi^- + P| over components
  double affine_fit = 0.0;  // max residual of L Pi_x - Pi^-_x after an affine fit
  double routes = 0.0;      // max |route 1 - route 2| at sample points
};

/// Compatibility: (d_t - a0 Delta) Pi_x - Pi^-_x is affine in y.
inline CompatibilityReport check_compatibility(const ModelField& M, const Centering& C, std::size_t samples, std::uint64_t seed) {
  CompatibilityReport rep;
  auto sp = M.spectral();
  for (auto& [k, f] : M.Pi) {
    if (k.is_polynomial()) continue;
    HeatSolution s{f, M.P.at(k)};
    rep.stationary = std::max(rep.stationary, heat_residual(*sp, s, M.Pi_minus.at(k)));
  }
  auto fields = centered_fields(M, C);
  std::map<MultiIndex, AffineField> L;
  for (auto& [k, f] : fields) L.emplace(k, apply_heat_operator(*sp, f));
  // The grid d_t cannot produce the time-Nyquist plane, which products in Pi^- do
  // populate; as in heat_residual the identity is taken modulo that plane, so
  // the centered Nyquist part of Pi^- is added back to L Pi_x.
  std::map<MultiIndex, AffineField> nyq;
  for (auto& [k, f] : M.Pi_minus) {
    AffineField h = f;
    auto keep = [&](Field& x) {
      x = apply_multiplier(*sp, x, [&](std::size_t i) { return sp->nyquist_t(i) ? cplx(1, 0) : cplx(0, 0); });
    };
    for (auto& cm : h.h.c) keep(cm);
    for (auto& g : h.g)
      for (auto& cm : g.c) keep(cm);
    nyq.emplace(k, std::move(h));
  }
  for (auto& [k, f] : centered_fields(M, C, &nyq, false)) {
    auto it = L.find(k);
    if (it == L.end()) continue;
    affine_axpy(it->second, f, AJet::constant(f.h.center, f.order(), 1.0));
  }
  std::mt19937_64 rng(seed);
  std::vector<GridPoint> pts;
  for (std::size_t i = 0; i < samples; ++i) {
    GridPoint p(static_cast<std::size_t>(M.grid.d + 1));
    p[0] = static_cast<int>(rng() % static_cast<std::uint64_t>(M.grid.nt));
    for (int a = 1; a <= M.grid.d; ++a) p[static_cast<std::size_t>(a)] = static_cast<int>(rng() % static_cast<std::uint64_t>(M.grid.nx));
    pts.push_back(p);
  }
  std::vector<FormalSeries> r1(pts.size(), FormalSeries(M.ctx));
  std::vector<double> route(pts.size(), 0.0);
  parallel_for(pts.size(), [&](std::size_t i) {
    r1[i] = centered_Pi_minus(M, C, pts[i]);
    auto r2 = centered_Pi_minus_route2(M, C, pts[i]);
    route[i] = series_max_abs(r1[i] - r2);
  });
  for (double v : route) rep.routes = std::max(rep.routes, v);
  // affine fit per component and jet order
  std::vector<std::vector<double>> dy;
  for (auto& p : pts) {
    std::vector<double> v;
    for (int a = 1; a <= M.grid.d; ++a) v.push_back(p[static_cast<std::size_t>(a)] * M.grid.dx());
    dy.push_back(v);
  }
  for (auto& [k, lf] : L) {
    const int valid = lf.order() + 1 - lf.stale();
    for (int m = 0; m < valid; ++m) {
      std::vector<double> v(pts.size());
      double scale = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double lv = lf.at(M.grid, pts[i]).c[static_cast<std::size_t>(m)];
        v[i] = lv - r1[i].coeff(k).c[static_cast<std::size_t>(m)];
        scale = std::max(scale, std::abs(lv));
      }
      // least-squares affine fit, residual measured in sup norm
      const std::size_t p = 1 + dy[0].size();
      std::vector<double> A(p * p, 0.0), b(p, 0.0), coef(p, 0.0);
      for (std::size_t i = 0; i < v.size(); ++i) {
        std::vector<double> row{1.0};
        row.insert(row.end(), dy[i].begin(), dy[i].end());
        for (std::size_t r = 0; r < p; ++r) {
          b[r] += row[r] * v[i];
          for (std::size_t c2 = 0; c2 < p; ++c2) A[r * p + c2] += row[r] * row[c2];
        }
      }
      // p <= 4: Gauss-Jordan
      for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r)
          if (std::abs(A[r * p + col]) > std::abs(A[piv * p + col])) piv = r;
        for (std::size_t c2 = 0; c2 < p; ++c2) std::swap(A[col * p + c2], A[piv * p + c2]);
        std::swap(b[col], b[piv]);
        const double d = A[col * p + col];
        for (std::size_t c2 = 0; c2 < p; ++c2) A[col * p + c2] /= d;
        b[col] /= d;
        for (std::size_t r = 0; r < p; ++r) {
          if (r == col) continue;
          const double f = A[r * p + col];
          for (std::size_t c2 = 0; c2 < p; ++c2) A[r * p + c2] -= f * A[col * p + c2];
          b[r] -= f * b[col];
        }
      }
      coef = b;
      for (std::size_t i = 0; i < v.size(); ++i) {
        double r = v[i] - coef[0];
        for (std::size_t a = 1; a < p; ++a) r -= coef[a] * dy[i][a - 1];
        rep.affine_fit = std::max(rep.affine_fit, std::abs(r));
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------- scaling checks

/// Convolved components sampled at requested points: for y.g + h,
/// (y.g)_l(p) = p.g_l(p) - ((z rho_l) * g)(p).
inline std::vector<FormalSeries> convolved_series(const ModelField& M, const std::map<MultiIndex, AffineField>& comps,
                                                  const Mollifier& rho, double lambda, const std::vector<GridPoint>& pts) {
  auto sp = M.spectral();
  const auto& grid = M.grid;
  if (lambda < 2 * grid.dx()) throw std::invalid_argument("convolution scale below 2 dx is unresolvable");
  const auto m = rho.multiplier(*sp, lambda);
  std::vector<std::vector<cplx>> mm;
  for (int a = 0; a < grid.d; ++a) mm.push_back(rho.moment_multiplier(*sp, lambda, a));
  std::vector<FormalSeries> out(pts.size(), FormalSeries(M.ctx));
  for (auto& [k, f] : comps) {
    std::vector<AJet> vals(pts.size(), AJet(M.ctx.center, f.order()));
    for (auto& v : vals) v.stale = f.stale();
    for (std::size_t o = 0; o < f.h.c.size(); ++o) {
      auto hl = apply_multiplier(*sp, f.h.c[o], [&](std::size_t i) { return cplx(m[i], 0.0); });
      for (std::size_t p = 0; p < pts.size(); ++p) vals[p].c[o] += hl[grid.flat(pts[p])];
      for (std::size_t a = 0; a < f.g.size(); ++a) {
        auto gl = apply_multiplier(*sp, f.g[a].c[o], [&](std::size_t i) { return cplx(m[i], 0.0); });
        auto gm = apply_multiplier(*sp, f.g[a].c[o], [&](std::size_t i) { return mm[a][i]; });
        for (std::size_t p = 0; p < pts.size(); ++p) {
          const auto fl = grid.flat(pts[p]);
          vals[p].c[o] += pts[p][a + 1] * grid.dx() * gl[fl] - gm[fl];
        }
      }
    }
    for (std::size_t p = 0; p < pts.size(); ++p) out[p].add(k, vals[p]);
  }
  return out;
}

struct ScalingRow {
  Homogeneity hom;
  bool minus = false;  // Pi^- (expected exponent |beta| - 2) or Pi (|beta|)
  std::vector<double> lambdas, values;
  double slope = 0.0, expected = 0.0;
};

struct AssumptionReport {
  std::vector<ScalingRow> scaling;
  double gamma_bound = 0.0;  // max constant over probes and pairs
  std::map<Homogeneity, double> gamma_bound_per;
  double reexpansion = 0.0, reexpansion_minus = 0.0, anchor = 0.0, pi1_low = 0.0;
  CompatibilityReport compat;
};

/// Stencil around x at scale lambda: x, x +- lambda e_i, x +- lambda^2 e_t.
inline std::vector<GridPoint> scale_stencil(const TorusGrid& g, const GridPoint& x, double lambda) {
  std::vector<GridPoint> s{x};
  const int ox = std::max(1, static_cast<int>(std::lround(lambda / g.dx())));
  const int ot = static_cast<int>(std::lround(lambda * lambda / g.dt()));
  for (int a = 1; a <= g.d; ++a)
    for (int sg : {-1, 1}) {
      auto p = x;
      p[static_cast<std::size_t>(a)] += sg * ox;
      s.push_back(p);
    }
  if (ot > 0)
    for (int sg : {-1, 1}) {
      auto p = x;
      p[0] += sg * ot;
      s.push_back(p);
    }
  return s;
}

/// Measured ||Pi_{x l}||_{|beta|} and ||Pi^-_{x l}||_{|beta|} over base points
/// and the points of the l-stencil, with log-log slope fits per homogeneity.
inline std::vector<ScalingRow> check_scaling(const ModelField& M, const std::vector<Centering>& Cs, const Mollifier& rho,
                                             const std::vector<double>& lambdas, double n0, const EllipticityWindow& w) {
  std::map<std::pair<bool, Homogeneity>, ScalingRow> rows;
  std::vector<Homogeneity> live;
  for (auto& e : M.index.entries)
    if (!e.dormant) live.push_back(e.hom);
  for (double lam : lambdas) {
    std::vector<GridPoint> pts;
    std::vector<std::size_t> owner;
    for (std::size_t b = 0; b < Cs.size(); ++b)
      for (auto& p : scale_stencil(M.grid, Cs[b].x, lam)) {
        pts.push_back(p);
        owner.push_back(b);
      }
    auto Pl = convolved_series(M, M.Pi, rho, lam, pts);
    auto Ml = convolved_series(M, M.Pi_minus, rho, lam, pts);
    auto Ll = convolved_series(M, M.lap, rho, lam, pts);
    std::map<std::pair<bool, Homogeneity>, double> best;
    std::vector<std::map<std::pair<bool, Homogeneity>, double>> per(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
      const auto& C = Cs[owner[i]];
      auto v = apply(C.gamma, Pl[i]) + C.gamma.pi0;
      auto lx = apply(C.gamma, Ll[i]);
      auto vm = apply(C.gamma, Ml[i]) + shift_series(C.gamma.pi0, lx);
      // Pi^- vanishes on the polynomial sector
      FormalSeries vm_np(M.ctx);
      for (auto& [k, j] : vm.terms)
        if (!k.is_polynomial()) vm_np.add(k, j);
      for (auto& [h, val] : graded_norm(v, n0, w).per_homogeneity) per[i][{false, h}] = val;
      for (auto& [h, val] : graded_norm(vm_np, n0, w).per_homogeneity) per[i][{true, h}] = val;
    });
    for (auto& p : per)
      for (auto& [key, val] : p) best[key] = std::max(best[key], val);
    for (auto& [key, val] : best) {
      if (std::find(live.begin(), live.end(), key.second) == live.end()) continue;
      auto& r = rows[key];
      r.hom = key.second;
      r.minus = key.first;
      r.expected = key.second.value() - (key.first ? 2.0 : 0.0);
      r.lambdas.push_back(lam);
      r.values.push_back(val);
    }
  }
  std::vector<ScalingRow> out;
  for (auto& [key, r] : rows) {
    bool ok = r.lambdas.size() >= 2 && std::all_of(r.values.begin(), r.values.end(), [](double v) { return v > 0; });
    r.slope = ok ? loglog_slope(r.lambdas, r.values) : std::numeric_limits<double>::quiet_NaN();
    out.push_back(r);
  }
  return out;
}

/// Probes spanning T_minus below eta: z^gamma (a0 - center)^m with gamma
/// populated, not purely polynomial, |gamma| < eta and m <= J. Coefficients
/// must vary in a0, since Gamma fixes the unit.
inline std::vector<FormalSeries> tminus_probes(const ModelField& M, double eta) {
  std::vector<FormalSeries> out;
  for (auto& e : M.index.entries) {
    if (e.beta.is_polynomial() || e.dormant || !(e.hom.value() < eta)) continue;
    for (int m = 0; m <= M.ctx.J; ++m) {
      auto j = M.ctx.zero_jet();
      j.c[static_cast<std::size_t>(m)] = 1.0;
      FormalSeries t(M.ctx);
      t.add(e.beta, j);
      out.push_back(t);
    }
  }
  return out;
}

/// Gamma-bound constants for Gamma_yx on the T_minus probes below the cutoff.
inline std::map<Homogeneity, double> check_gamma_bound(const ModelField& M, const Centering& Cx, const Centering& Cy,
                                                       double n0, const EllipticityWindow& w) {
  auto g = gamma_yx(M, Cx, Cy);
  const double dist = grid_distance(M.grid, Cx.x, Cy.x);
  std::map<Homogeneity, double> out;
  for (auto& probe : tminus_probes(M, M.ctx.cutoff.value()))
    for (auto& [h, v] : gamma_bound_check(g, probe, n0, dist, w))
      if (std::isfinite(v)) out[h] = std::max(out[h], v);
  return out;
}

}  // namespace mrs
