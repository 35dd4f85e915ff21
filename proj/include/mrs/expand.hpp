#pragma once
// Modelled distributions: the pairing f_eta, the Gubinelli derivative, the
// counter-term h, modelling norms and the lemma-level inequality checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace mrs {

// ---------------------------------------------------------------- nonlinearity

/// a(v) in closed form with all derivatives:
///   "const": a = c0;  "poly": a = sum c_i v^i;  "sine": a = c0 + c1 sin(c2 v + c3).
struct Nonlinearity {
  std::string kind = "sine";
  std::vector<double> coef{1.0, 0.1, 1.0, 0.0};

  static Nonlinearity constant(double a0) { return {"const", {a0}}; }

  double deriv(double v, int k) const {
    if (kind == "const") return k == 0 ? coef.at(0) : 0.0;
    if (kind == "poly") {
      double r = 0.0;
      for (int i = static_cast<int>(coef.size()) - 1; i >= k; --i) {
        double f = 1.0;
        for (int j = 0; j < k; ++j) f *= i - j;
        r = r * v + coef[static_cast<std::size_t>(i)] * f;
      }
      return r;
    }
    if (kind == "sine") {
      const double A = coef.at(1), w = coef.at(2), ph = coef.at(3);
      const double s = A * std::pow(w, k) * std::sin(w * v + ph + k * std::numbers::pi / 2);
      return k == 0 ? coef.at(0) + s : s;
    }
    throw std::invalid_argument("unknown nonlinearity kind " + kind);
  }
  double operator()(double v) const { return deriv(v, 0); }

  /// (1/k!) a^(k)(v) for k = 1..kmax (index 0 unused).
  std::vector<double> da(double v, int kmax) const {
    std::vector<double> r(static_cast<std::size_t>(kmax) + 1, 0.0);
    double f = 1.0;
    for (int k = 1; k <= kmax; ++k) {
      f *= k;
      r[static_cast<std::size_t>(k)] = deriv(v, k) / f;
    }
    return r;
  }

  /// Ellipticity Lambda <= a <= 1/Lambda and |a^(k)| <= 1/Lambda, k <= kmax,
  /// on a sample of [lo, hi].
  void validate_on(double lo, double hi, int kmax, double Lambda, int samples = 401) const {
    for (int i = 0; i < samples; ++i) {
      const double v = lo + (hi - lo) * i / std::max(1, samples - 1);
      const double a = deriv(v, 0);
      if (!(a >= Lambda && a <= 1.0 / Lambda))
        throw std::domain_error("ellipticity violated: a(" + std::to_string(v) + ") = " + std::to_string(a));
      for (int k = 1; k <= kmax; ++k)
        if (!(std::abs(deriv(v, k)) <= 1.0 / Lambda))
          throw std::domain_error("derivative bound violated for k = " + std::to_string(k));
    }
  }
};

/// da(v)^{beta'} = prod_k ((1/k!) a^(k)(v))^{beta'(k)}.
inline double da_power(const Nonlinearity& a, double v, const std::map<int, int>& bp) {
  int kmax = 0;
  for (auto [k, n] : bp) kmax = std::max(kmax, k);
  const auto d = a.da(v, kmax);
  double r = 1.0;
  for (auto [k, n] : bp) r *= std::pow(d[static_cast<std::size_t>(k)], n);
  return r;
}

/// f_eta.tau at a point where u = uval and nu = nuval:
///   sum_{|beta| < eta} nu^{beta_x} da(u)^{beta'} tau_beta(a(u)).
inline double eval_f_local(const Nonlinearity& a, double uval, const std::vector<double>& nuval, double eta,
                           const FormalSeries& tau, double halfwidth) {
  const double a0 = a(uval);
  double r = 0.0;
  for (auto& [k, j] : tau.terms) {
    if (!(tau.ctx.hom(k).value() < eta)) continue;
    double w = da_power(a, uval, k.beta_prime);
    for (std::size_t i = 0; i < k.beta_x.size(); ++i) w *= std::pow(nuval.at(i), k.beta_x[i]);
    if (w == 0.0) continue;
    r += w * jet_eval(j, a0, halfwidth);
  }
  return r;
}

/// h(v) = sum_{|beta'|_s <= n-1} da(v)^{beta'} q_{beta'}(a(v)).
inline double counter_term(const RenormVector& q, const Nonlinearity& a, double v, double halfwidth) {
  double r = 0.0;
  for (auto& [k, j] : q.q) {
    if (k.abs_x() != 0) throw std::invalid_argument("q must not depend on z_x");
    r += da_power(a, v, k.beta_prime) * jet_eval(j, a(v), halfwidth);
  }
  return r;
}

// ---------------------------------------------------------------- state

struct ExpansionState {
  TorusGrid grid;
  Field u;
  std::vector<Field> grad_u;  // spectral gradient of u
  std::vector<Field> nu;      // Gubinelli derivative, filled by compute_nu
  Nonlinearity a;
  double eta = 1.5;
  EllipticityWindow window;
  double n0 = 1.0;
  double radius = 1.0;  // B_radius(0)

  double u_at(const GridPoint& p) const { return u[grid.flat(p)]; }
  std::vector<double> nu_at(const GridPoint& p) const {
    if (nu.empty()) throw std::logic_error("Gubinelli derivative not computed");
    std::vector<double> r;
    for (auto& f : nu) r.push_back(f[grid.flat(p)]);
    return r;
  }
};

inline ExpansionState make_state(const TorusGrid& g, Field u, const Nonlinearity& a, double eta, const EllipticityWindow& w,
                                 double n0, double radius = 1.0) {
  if (u.size() != g.size()) throw std::invalid_argument("u does not match the grid");
  ExpansionState s{g, std::move(u), {}, {}, a, eta, w, n0, radius};
  auto sp = spectral_for(g);
  for (int i = 0; i < g.d; ++i) s.grad_u.push_back(gradient(*sp, s.u, i));
  return s;
}

inline double eval_f(const ExpansionState& s, const GridPoint& x, const FormalSeries& tau, std::optional<double> eta = {}) {
  return eval_f_local(s.a, s.u_at(x), s.nu_at(x), eta.value_or(s.eta), tau, s.window.halfwidth);
}

/// nu(x) = grad u(x) - sum_{|beta| < 1} da(u(x))^{beta'} (grad Pi_x(x))_beta(a(u(x))).
/// Components below homogeneity 1 carry no z_x, so nu does not enter.
inline std::vector<double> gubinelli_nu(const ExpansionState& s, const ModelField& M, const Centering& C) {
  const Homogeneity one{1, 0, M.ctx.alpha};
  std::vector<double> nu;
  const double uval = s.u_at(C.x);
  for (int j = 0; j < s.grid.d; ++j) {
    auto g = centered_grad(M, C, C.x, j);
    FormalSeries low(M.ctx);
    for (auto& [k, jet] : g.terms)
      if (M.ctx.hom(k) < one) low.add(k, jet);
    const std::vector<double> none(static_cast<std::size_t>(s.grid.d), 0.0);
    nu.push_back(s.grad_u[static_cast<std::size_t>(j)][s.grid.flat(C.x)] -
                 eval_f_local(s.a, uval, none, 1.0, low, s.window.halfwidth));
  }
  return nu;
}

/// Fills s.nu on the whole grid (centering below homogeneity 1 suffices).
inline void compute_nu(ExpansionState& s, const ModelField& M) {
  const Homogeneity one{1, 0, M.ctx.alpha};
  s.nu.assign(static_cast<std::size_t>(s.grid.d), Field(s.grid.size(), 0.0));
  parallel_for(s.grid.size(), [&](std::size_t f) {
    const auto p = s.grid.unflat(f);
    auto nu = gubinelli_nu(s, M, center(M, p, one));
    for (int j = 0; j < s.grid.d; ++j) s.nu[static_cast<std::size_t>(j)][f] = nu[static_cast<std::size_t>(j)];
  });
}

/// gamma(x, y) = (f_eta(x).Gamma_yx - f_eta(y).id) z_x, per axis.
inline std::vector<double> three_point_gamma(const ExpansionState& s, const ModelField& M, const Centering& Cx,
                                             const Centering& Cy, const GroupElement& gyx) {
  std::vector<double> r;
  const auto nuy = s.nu_at(Cy.x);
  for (int j = 0; j < s.grid.d; ++j)
    r.push_back(eval_f(s, Cx.x, apply(gyx, FormalSeries::zx(M.ctx, j))) - nuy[static_cast<std::size_t>(j)]);
  return r;
}

/// |nu(y) - nu(x) - f_eta(x).pi1_yx + gamma(x, y)|, zero by construction.
inline double three_point_identity_residual(const ExpansionState& s, const ModelField& M, const Centering& Cx,
                                            const Centering& Cy, const GroupElement& gyx) {
  auto gam = three_point_gamma(s, M, Cx, Cy, gyx);
  const auto nux = s.nu_at(Cx.x), nuy = s.nu_at(Cy.x);
  double r = 0.0;
  for (int j = 0; j < s.grid.d; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    r = std::max(r, std::abs(nuy[jj] - nux[jj] - eval_f(s, Cx.x, gyx.pi1[jj]) + gam[jj]));
  }
  return r;
}

// ---------------------------------------------------------------- norms

struct ModellingNorms {
  double eta = 0.0;
  double H_u = 0.0, H_nu = 0.0;  // weighted homogeneous quantities
  double I_u = 0.0, I_nu = 0.0;  // ||u|| + N0 and sup dist |nu| + N0
  double f_opnorm = 0.0;         // probe lower bound on |||f_eta|||
  WeightedValue H_u_at, H_nu_at, f_at;

  double Iu_eta() const { return H_u + I_u; }
  double Inu_eta() const { return H_nu + I_nu; }
};

struct NormOptions {
  std::size_t max_points_u = 2000;     // targets per base point for H_u
  std::size_t max_points_pairs = 120;  // targets per base point for H_nu and |||f|||
};

inline ModellingNorms modelling_norms(const ExpansionState& s, const ModelField& M, const std::vector<GridPoint>& bases,
                                      const NormOptions& opt = {}) {
  if (s.nu.empty()) throw std::logic_error("compute_nu must run before modelling_norms");
  const auto& g = s.grid;
  ModellingNorms N;
  N.eta = s.eta;
  std::map<GridPoint, Centering> cx;
  {
    std::vector<Centering> cs(bases.size());
    parallel_for(bases.size(), [&](std::size_t i) { cs[i] = center(M, bases[i]); });
    for (auto& c : cs) cx.emplace(c.x, c);
  }
  // H_u(eta): dist^eta |u(y) - u(x) - f_eta(x).Pi_x(y)| / d^eta over B_dist(x)
  Jet Ju{g, bases, [&](const GridPoint& x, const GridPoint& y) {
           return s.u_at(y) - s.u_at(x) - eval_f(s, x, centered_Pi(M, cx.at(x), y));
         }, s.radius};
  N.H_u_at = weighted_holder(Ju, s.eta, opt.max_points_u);
  N.H_u = N.H_u_at.value;

  // H_nu(eta) and |||f_eta||| need Gamma_yx for y in B_{dist/2}(x)
  const auto probes = tminus_probes(M, s.eta);
  std::vector<GradedNorm> probe_norms;
  for (auto& t : probes) probe_norms.push_back(graded_norm(t, s.n0, s.window));
  struct Best {
    WeightedValue hn, fo;
  };
  std::vector<Best> per(bases.size());
  parallel_for(bases.size(), [&](std::size_t i) {
    const auto& x = bases[i];
    const auto& Cx = cx.at(x);
    const double dist = dist_to_boundary(g, x, s.radius);
    const auto nux = s.nu_at(x);
    Best b{{0.0, x, x}, {0.0, x, x}};
    for (auto& y : ball_targets(g, x, 0.5 * dist, opt.max_points_pairs)) {
      const double d = grid_distance(g, x, y);
      auto Cy = center(M, y);
      auto gyx = gamma_yx(M, Cx, Cy);
      const auto nuy = s.nu_at(y);
      double v2 = 0.0;
      for (int j = 0; j < g.d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        const double r = nuy[jj] - nux[jj] - eval_f(s, x, gyx.pi1[jj]);
        v2 += r * r;
      }
      const double hn = std::pow(dist, s.eta) * std::sqrt(v2) / std::pow(d, s.eta - 1);
      if (hn > b.hn.value) b.hn = {hn, x, y};
      for (std::size_t k = 0; k < probes.size(); ++k) {
        const auto& tau = probes[k];
        const double lhs = std::abs(eval_f(s, y, tau) - eval_f(s, x, apply(gyx, tau)));
        double rhs = 0.0;
        for (auto& [h, v] : probe_norms[k].per_homogeneity)
          if (h.value() > 0 && h.value() < s.eta) rhs += std::pow(d, s.eta - h.value()) * v;
        if (!(rhs > 0)) continue;
        const double v = std::pow(dist, s.eta) * lhs / rhs;
        if (v > b.fo.value) b.fo = {v, x, y};
      }
    }
    per[i] = b;
  });
  for (auto& b : per) {
    if (b.hn.value > N.H_nu_at.value) N.H_nu_at = b.hn;
    if (b.fo.value > N.f_at.value) N.f_at = b.fo;
  }
  N.H_nu = N.H_nu_at.value;
  N.f_opnorm = N.f_at.value;

  // inhomogeneous parts over B_radius(0) (nearest periodic image)
  double umax = 0.0, numax = 0.0;
  const GridPoint origin(static_cast<std::size_t>(g.d + 1), 0);
  for (std::size_t f = 0; f < g.size(); ++f) {
    const auto p = g.unflat(f);
    const double dist = s.radius - torus_distance(g, p, origin);
    if (dist <= 0) continue;
    umax = std::max(umax, std::abs(s.u[f]));
    double n2 = 0.0;
    for (auto& nf : s.nu) n2 += nf[f] * nf[f];
    numax = std::max(numax, dist * std::sqrt(n2));
  }
  N.I_u = umax + s.n0;
  N.I_nu = numax + s.n0;
  return N;
}

/// Smallest C with |||f_eta||| <= C N0 (1 + I_u(eta) + I_nu(eta)).
inline double rhs_bound_constant(const ModellingNorms& N, double n0) {
  return N.f_opnorm / (n0 * (1.0 + N.Iu_eta() + N.Inu_eta()));
}

struct InterpolationReport {
  double kappa = 0.0, eta = 0.0;
  double c_u = 0.0;    // I_u(kappa) / (I_u(eta)^{kappa/eta} I_u^{1-kappa/eta})
  double c_nu = 0.0;   // I_nu / (I_u(eta)^{1/eta} I_u^{1-1/eta})
  double c_nuk = std::numeric_limits<double>::quiet_NaN();  // kappa > 1 only
};

/// Implied constants of the interpolation inequalities from measured norms.
inline InterpolationReport check_interpolation(const ModellingNorms& at_kappa, const ModellingNorms& at_eta) {
  InterpolationReport r;
  const double k = at_kappa.eta, e = at_eta.eta;
  if (!(e > 1 && e < 2 && k > 0 && k <= e)) throw std::invalid_argument("need eta in (1,2) and kappa in (0, eta]");
  r.kappa = k;
  r.eta = e;
  const double Iu = at_eta.I_u;
  r.c_u = at_kappa.Iu_eta() / (std::pow(at_eta.Iu_eta(), k / e) * std::pow(Iu, 1 - k / e));
  r.c_nu = at_eta.I_nu / (std::pow(at_eta.Iu_eta(), 1 / e) * std::pow(Iu, 1 - 1 / e));
  if (k > 1)
    r.c_nuk = at_kappa.Inu_eta() /
              (std::pow(at_eta.Inu_eta(), (k - 1) / (e - 1)) * std::pow(at_eta.I_nu, (e - k) / (e - 1)));
  return r;
}

// ---------------------------------------------------------------- approximate morphism

struct MorphismReport {
  double lhs = 0.0, rhs = 0.0;
  double constant = 0.0;  // lhs / rhs (0 when lhs vanishes)
};

/// |f_eta(x).(prod tau^j) - prod f_{hat eta_j}(x).tau^j| against
/// sum_{A(eta_j)} prod_j |nu|^{|beta_jx|} N0^{<beta>} ||tau^j||_{beta_j}.
inline MorphismReport check_approx_morphism(const ExpansionState& s, const GridPoint& x, const std::vector<FormalSeries>& taus,
                                            const std::vector<double>& etas) {
  if (taus.empty() || taus.size() != etas.size()) throw std::invalid_argument("need one eta_j per tau^j");
  const auto& c = taus.front().ctx;
  const double alpha = c.alpha.value();
  for (std::size_t j = 0; j < taus.size(); ++j) {
    if (!(etas[j] >= alpha && etas[j] < s.eta)) throw std::invalid_argument("eta_j must lie in [alpha, eta)");
    for (auto& [k, jet] : taus[j].terms)
      if (c.hom(k).value() < etas[j] - 1e-12) throw std::invalid_argument("tau^j has a component below eta_j");
  }
  const std::size_t J = taus.size();
  std::vector<double> hat(J);
  for (std::size_t j = 0; j < J; ++j) {
    hat[j] = s.eta;
    for (std::size_t i = 0; i < J; ++i)
      if (i != j) hat[j] -= etas[i] - alpha;
  }
  FormalSeries prod = FormalSeries::unit(c);
  double fprod = 1.0;
  for (std::size_t j = 0; j < J; ++j) {
    prod = mul(prod, taus[j]);
    fprod *= eval_f(s, x, taus[j], hat[j]);
  }
  MorphismReport r;
  r.lhs = std::abs(eval_f(s, x, prod) - fprod);
  // right side: tuples with eta_j <= |beta_j| < hat_j and |sum beta_j| >= eta
  const auto nux = s.nu_at(x);
  double nun = 0.0;
  for (double v : nux) nun += v * v;
  nun = std::sqrt(nun);
  std::vector<GradedNorm> norms;
  for (auto& t : taus) norms.push_back(graded_norm(t, s.n0, s.window));
  std::vector<std::vector<MultiIndex>> keys(J);
  for (std::size_t j = 0; j < J; ++j)
    for (auto& [k, jet] : taus[j].terms)
      if (c.hom(k).value() < hat[j]) keys[j].push_back(k);
  std::vector<std::size_t> pick(J, 0);
  std::function<void(std::size_t, MultiIndex, double)> rec = [&](std::size_t j, MultiIndex sum, double w) {
    if (j == J) {
      if (homogeneity(sum, c.alpha).value() >= s.eta) r.rhs += w * std::pow(s.n0, angle(sum));
      return;
    }
    for (auto& k : keys[j]) {
      const double wj = std::pow(nun, k.abs_x()) * norms[j].at(c.hom(k));
      rec(j + 1, j == 0 ? k : sum + k, w * wj);
    }
  };
  rec(0, MultiIndex(c.d), 1.0);
  // lhs at rounding level counts as an exact cancellation
  const double tol = 1e-12 * std::max(1.0, std::abs(fprod));
  if (r.lhs <= tol) r.constant = 0.0;
  else r.constant = r.rhs > 0 ? r.lhs / r.rhs : std::numeric_limits<double>::infinity();
  return r;
}

/// Random sweep: tau^j are sums of populated monomials with constant
/// coefficients in T_{>= eta_j}, eta_j drawn from the homogeneity levels in
/// [alpha, eta). Returns the largest measured constant.
inline double sweep_approx_morphism(const ExpansionState& s, const ModelField& M, const GridPoint& x, int trials, int max_J,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> levels;
  for (auto& e : M.index.entries) {
    const double h = e.hom.value();
    if (!e.dormant && h >= M.ctx.alpha.value() && h < s.eta &&
        std::find(levels.begin(), levels.end(), h) == levels.end())
      levels.push_back(h);
  }
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int J = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_J));
    std::vector<FormalSeries> taus;
    std::vector<double> etas;
    for (int j = 0; j < J; ++j) {
      const double ej = levels[rng() % levels.size()];
      FormalSeries tau(M.ctx);
      for (auto& e : M.index.entries)
        if (!e.dormant && e.hom.value() >= ej && rng() % 2 == 0) tau.add(e.beta, M.ctx.const_jet(U(rng)));
      taus.push_back(tau);
      etas.push_back(ej);
    }
    worst = std::max(worst, check_approx_morphism(s, x, taus, etas).constant);
  }
  return worst;
}

}  // namespace mrs
