#pragma once
// Renormalized quasilinear equation on the torus and the theorem-level
// measurements (interior Hoelder bound, local expansion, ablation).

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "expand.hpp"

namespace mrs {

struct SolverConfig {
  TorusGrid grid;
  double dt_solver = 0.0;  // 0 means the grid step; see validate()
  double Lambda = 0.5;
  double abar = 0.0;       // reference diffusivity; 0 means the midpoint of [Lambda, 1/Lambda]
  double tol = 1e-7;
  int max_iter = 500;
  double damping = 1.0;
  std::vector<double> eps_ladder{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
  double delta = 0.5;

  double reference() const { return abar > 0 ? abar : 0.5 * (Lambda + 1.0 / Lambda); }

  /// The stiff part is inverted spectrally in space and time at once, so
  /// dt_solver is the grid step itself and no CFL-type restriction applies.
  void validate() const {
    grid.validate();
    if (!(Lambda > 0 && Lambda < 1)) throw std::invalid_argument("Lambda must lie in (0,1)");
    const double a = reference();
    if (!(a >= Lambda && a <= 1.0 / Lambda)) throw std::invalid_argument("reference diffusivity outside [Lambda, 1/Lambda]");
    if (dt_solver != 0.0 && std::abs(dt_solver - grid.dt()) > 1e-15) throw std::invalid_argument("dt_solver must equal the grid step");
    if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
    if (!(damping > 0 && damping <= 1)) throw std::invalid_argument("damping must lie in (0,1]");
    if (!(delta > 0)) throw std::invalid_argument("delta must be positive");
    for (std::size_t i = 1; i < eps_ladder.size(); ++i)
      if (!(eps_ladder[i] < eps_ladder[i - 1])) throw std::invalid_argument("eps ladder must decrease");
  }
};

struct SolveResult {
  Field u;
  double residual = 0.0;  // sup of the projected PDE residual
  double mu = 0.0;        // space-time mean removed from the right side
  int iterations = 0;
  std::vector<double> history;
};

namespace detail {

inline Field drop_time_nyquist(const Spectral& sp, const Field& f) {
  return apply_multiplier(sp, f, [&](std::size_t i) { return sp.nyquist_t(i) ? cplx(0, 0) : cplx(1, 0); });
}

inline Field h_field(const Field& u, const RenormVector& q, const Nonlinearity& a, double halfwidth) {
  Field h(u.size(), 0.0);
  if (q.q.empty()) return h;
  for (std::size_t p = 0; p < u.size(); ++p) h[p] = counter_term(q, a, u[p], halfwidth);
  return h;
}

// F(u) = xi + (a(u) - abar) Delta u - h(u)
inline Field picard_rhs(const Spectral& sp, const Field& u, const Field& xi, const RenormVector& q, const Nonlinearity& a,
                        double abar, double halfwidth, double Lambda) {
  auto lu = laplacian(sp, u);
  auto h = h_field(u, q, a, halfwidth);
  Field F(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) {
    const double ap = a(u[p]);
    if (!(ap >= Lambda && ap <= 1.0 / Lambda))
      throw std::domain_error("ellipticity violated along the iteration: a(u) = " + std::to_string(ap));
    F[p] = xi[p] + (ap - abar) * lu[p] - h[p];
  }
  return F;
}

}  // namespace detail

/// Projected residual d_t u - a(u) Delta u + h(u) - xi + mu with the
/// time-Nyquist plane removed; returns the field.
inline Field pde_residual(const Spectral& sp, const Field& u, const Field& xi, double mu, const RenormVector& q,
                          const Nonlinearity& a, double halfwidth) {
  auto ut = time_derivative(sp, u);
  auto lu = laplacian(sp, u);
  auto h = detail::h_field(u, q, a, halfwidth);
  Field r(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) r[p] = ut[p] - a(u[p]) * lu[p] + h[p] - xi[p] + mu;
  return detail::drop_time_nyquist(sp, r);
}

/// Space-time periodic, zero-mean solution of
///   d_t u - a(u) Delta u + h(u) = xi - mu
/// by Picard iteration on u = L_abar^{-1}[F(u) - mean F(u)]. mu is the
/// space-time mean of xi - h(u) + a(u) Delta u, which no periodic u can absorb.
inline SolveResult solve_renormalized(const SolverConfig& cfg, const Field& xi, const RenormVector& q, const Nonlinearity& a,
                                      const EllipticityWindow& w) {
  cfg.validate();
  const auto& g = cfg.grid;
  if (xi.size() != g.size()) throw std::invalid_argument("noise does not match the grid");
  auto sp = spectral_for(g);
  const double abar = cfg.reference();
  std::vector<cplx> inv(sp->nspec());
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const cplx sym(abar * sp->ksq()[i], sp->omega()[i]);
    inv[i] = (i == 0 || sp->nyquist_t(i) || std::abs(sym) == 0.0) ? cplx(0, 0) : 1.0 / sym;
  }
  SolveResult out;
  out.u.assign(g.size(), 0.0);
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    auto F = detail::picard_rhs(*sp, out.u, xi, q, a, abar, w.halfwidth, cfg.Lambda);
    out.mu = field_mean(F);
    auto s = sp->forward(F);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= inv[i];
    auto next = sp->backward(s);
    for (std::size_t p = 0; p < next.size(); ++p) out.u[p] += cfg.damping * (next[p] - out.u[p]);
    auto R = pde_residual(*sp, out.u, xi, out.mu, q, a, w.halfwidth);
    // mu is re-evaluated at the new iterate for the certificate
    out.mu -= field_mean(R);
    out.residual = field_max_abs(pde_residual(*sp, out.u, xi, out.mu, q, a, w.halfwidth));
    out.history.push_back(out.residual);
    out.iterations = it + 1;
    if (!std::isfinite(out.residual)) throw std::runtime_error("solver diverged: non-finite residual");
    if (out.residual <= cfg.tol) return out;
    best = std::min(best, out.residual);
    if (it >= 10 && out.residual > 10 * best) throw std::runtime_error("solver diverged: residual " + std::to_string(out.residual));
  }
  throw std::runtime_error("solver did not reach tol: residual " + std::to_string(out.residual) + " after " +
                           std::to_string(cfg.max_iter) + " iterations");
}

inline SolveResult solve_renormalized(const SolverConfig& cfg, const NoiseSpec& spec, const RenormVector& q, const Nonlinearity& a,
                                      const EllipticityWindow& w) {
  spec.validate(cfg.grid);
  return solve_renormalized(cfg, sample_noise(spec, cfg.grid), q, a, w);
}

// ---------------------------------------------------------------- Hoelder bound

struct HolderReport {
  double constant = 0.0;  // sup d^{-alpha} |u(y) - u(x)| / (||u|| + N0)
  double raw = 0.0;       // the sup before normalization
  double u_norm = 0.0;
  GridPoint x, y;
};

struct HolderOptions {
  double max_dist = 1.0 / 3;
  int bases_per_axis = 16;       // base points on a lattice of the periodic cell
  std::size_t max_points = 3000; // targets per base point
};

inline HolderReport verify_holder(const Field& u, const TorusGrid& g, double alpha, double n0, const HolderOptions& opt = {}) {
  if (u.size() != g.size()) throw std::invalid_argument("u does not match the grid");
  HolderReport r;
  r.u_norm = field_max_abs(u);
  std::vector<GridPoint> bases;
  const std::size_t total = static_cast<std::size_t>(std::pow(opt.bases_per_axis, g.d + 1));
  for (std::size_t f = 0; f < total; ++f) {
    GridPoint p(static_cast<std::size_t>(g.d + 1));
    std::size_t rem = f;
    for (int a = 0; a <= g.d; ++a) {
      const int n = a == 0 ? g.nt : g.nx;
      p[static_cast<std::size_t>(a)] = static_cast<int>(rem % static_cast<std::size_t>(opt.bases_per_axis)) * n / opt.bases_per_axis;
      rem /= static_cast<std::size_t>(opt.bases_per_axis);
    }
    bases.push_back(p);
  }
  std::vector<HolderReport> per(bases.size());
  parallel_for(bases.size(), [&](std::size_t i) {
    const auto& x = bases[i];
    HolderReport b;
    for (auto& y : ball_targets(g, x, opt.max_dist, opt.max_points)) {
      const double v = std::abs(u[g.flat(y)] - u[g.flat(x)]) / std::pow(grid_distance(g, x, y), alpha);
      if (v > b.raw) {
        b.raw = v;
        b.x = x;
        b.y = y;
      }
    }
    per[i] = b;
  });
  for (auto& b : per)
    if (b.raw > r.raw) {
      r.raw = b.raw;
      r.x = b.x;
      r.y = b.y;
    }
  r.constant = r.raw / (r.u_norm + n0);
  return r;
}

// ---------------------------------------------------------------- local expansion

struct ShellRow {
  double lo = 0.0, hi = 0.0;
  double mean_remainder = 0.0, max_remainder = 0.0;
  std::size_t samples = 0;
};

struct TheoremReport {
  double truncation = 0.0;         // components |beta| < truncation enter the expansion
  double expansion_exponent = 0.0; // fitted log-log slope of the shell means
  double prefactor = 0.0;          // fitted prefactor / (||u|| + N0)
  double holder_constant = 0.0;
  std::vector<ShellRow> shells;
};

/// Deterministic low-discrepancy sample of B_r(0) (additive recurrence with
/// the generalized golden ratio), mapped to parabolic coordinates.
namespace detail {
// additive recurrence with the generalized golden ratio in `dim` dimensions
inline std::vector<double> r_sequence_step(int dim) {
  double phi = 2.0;
  for (int i = 0; i < 60; ++i) phi = std::pow(1.0 + phi, 1.0 / (dim + 1));
  std::vector<double> step(static_cast<std::size_t>(dim));
  for (int a = 0; a < dim; ++a) step[static_cast<std::size_t>(a)] = std::fmod(std::pow(1.0 / phi, a + 1), 1.0);
  return step;
}
inline double r_sequence(const std::vector<double>& step, std::size_t i, int a) {
  return std::fmod(0.5 + static_cast<double>(i) * step[static_cast<std::size_t>(a)], 1.0);
}
}  // namespace detail

inline std::vector<GridPoint> ball_sample(const TorusGrid& g, double r, std::size_t n) {
  const int dim = g.d + 1;
  const auto step = detail::r_sequence_step(dim);
  std::vector<GridPoint> out;
  const GridPoint origin(static_cast<std::size_t>(dim), 0);
  for (std::size_t i = 1; out.size() < n && i < 100 * n; ++i) {
    GridPoint p(static_cast<std::size_t>(dim));
    for (int a = 0; a < dim; ++a) {
      const double v = r * (2.0 * detail::r_sequence(step, i, a) - 1.0);
      if (a == 0) p[0] = static_cast<int>(std::lround(std::copysign(v * v, v) / g.dt()));
      else p[static_cast<std::size_t>(a)] = static_cast<int>(std::lround(v / g.dx()));
    }
    if (grid_distance(g, p, origin) < r) out.push_back(p);
  }
  return out;
}

/// Lattice offsets with parabolic length in [lo, hi): the length is log-uniform and
/// splits into sqrt|dt| = theta*rho and |dx| = (1 - theta)*rho with theta uniform,
/// so every dyadic shell sees the same mix of time and space offsets.
inline std::vector<GridPoint> shell_offsets(const TorusGrid& g, double lo, double hi, std::size_t n, std::size_t start = 0) {
  const int dim = 3 + g.d;  // radius, split, time sign, spatial direction
  const auto step = detail::r_sequence_step(dim);
  std::vector<GridPoint> out;
  const GridPoint origin(static_cast<std::size_t>(g.d + 1), 0);
  std::vector<double> dir(static_cast<std::size_t>(g.d));
  for (std::size_t i = start + 1; out.size() < n && i < start + 100 * n; ++i) {
    const double rho = lo * std::pow(hi / lo, detail::r_sequence(step, i, 0));
    const double theta = detail::r_sequence(step, i, 1);
    const double tt = theta * rho, sx = (1.0 - theta) * rho;
    const double sgn = detail::r_sequence(step, i, 2) < 0.5 ? -1.0 : 1.0;
    double nrm = 0.0;
    for (int a = 0; a < g.d; ++a) {
      auto& c = dir[static_cast<std::size_t>(a)];
      c = 2.0 * detail::r_sequence(step, i, 3 + a) - 1.0;
      nrm += c * c;
    }
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) continue;
    GridPoint p(static_cast<std::size_t>(g.d + 1));
    p[0] = static_cast<int>(std::lround(sgn * tt * tt / g.dt()));
    for (int a = 0; a < g.d; ++a)
      p[static_cast<std::size_t>(a + 1)] = static_cast<int>(std::lround(sx * dir[static_cast<std::size_t>(a)] / nrm / g.dx()));
    const double d = grid_distance(g, p, origin);
    if (d >= lo && d < hi) out.push_back(p);
  }
  return out;
}

struct ExpansionOptions {
  double ball = 1.0 / 3;          // base points in B_ball(0)
  std::size_t bases = 160;        // number of base points
  double lo = 0.0, hi = 0.25;     // shell range; lo = 0 means 4 eps
  std::size_t per_shell = 100;    // targets per base point and shell
};

/// Remainder u(y) - u(x) - sum_{|beta| < truncation} nu^{beta_x} da^{beta'} Pi_{x beta}(y)
/// averaged over dyadic shells in d(y, x); fits the decay exponent.
inline TheoremReport verify_expansion(const ExpansionState& s, const ModelField& M, double truncation, const ExpansionOptions& opt = {}) {
  if (s.nu.empty()) throw std::logic_error("compute_nu must run before verify_expansion");
  const auto& g = s.grid;
  const double lo = opt.lo > 0 ? opt.lo : 4 * M.noise.eps;
  std::vector<std::pair<double, double>> edges;
  for (double a = lo; a * 2 <= opt.hi * (1 + 1e-12); a *= 2) edges.push_back({a, 2 * a});
  if (edges.size() < 2) throw std::invalid_argument("shell range holds fewer than two dyadic shells");
  auto bases = ball_sample(g, opt.ball, opt.bases);
  std::vector<std::vector<ShellRow>> per(bases.size(), std::vector<ShellRow>(edges.size()));
  parallel_for(bases.size(), [&](std::size_t i) {
    const auto& x = bases[i];
    auto Cx = center(M, x);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      auto& row = per[i][k];
      for (const auto& o : shell_offsets(g, edges[k].first, edges[k].second, opt.per_shell, i * opt.per_shell)) {
        GridPoint y = x;
        for (std::size_t a = 0; a < y.size(); ++a) y[a] += o[a];
        const double r = std::abs(s.u_at(y) - s.u_at(x) - eval_f(s, x, centered_Pi(M, Cx, y), truncation));
        row.mean_remainder += r;
        row.max_remainder = std::max(row.max_remainder, r);
        ++row.samples;
      }
    }
  });
  TheoremReport rep;
  rep.truncation = truncation;
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    ShellRow row{edges[k].first, edges[k].second, 0.0, 0.0, 0};
    for (auto& p : per) {
      row.mean_remainder += p[k].mean_remainder;
      row.max_remainder = std::max(row.max_remainder, p[k].max_remainder);
      row.samples += p[k].samples;
    }
    if (row.samples == 0) throw std::runtime_error("empty expansion shell");
    row.mean_remainder /= static_cast<double>(row.samples);
    rep.shells.push_back(row);
    xs.push_back(std::sqrt(row.lo * row.hi));
    ys.push_back(std::max(row.mean_remainder, std::numeric_limits<double>::min()));
  }
  rep.expansion_exponent = loglog_slope(xs, ys);
  double c = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) c += std::log(ys[k]) - rep.expansion_exponent * std::log(xs[k]);
  rep.prefactor = std::exp(c / static_cast<double>(xs.size())) / (field_max_abs(s.u) + s.n0);
  return rep;
}

// ---------------------------------------------------------------- ablation

struct AblationRow {
  double eps = 0.0;
  double q_max = 0.0;
  double q_divergent = 0.0;  // max |q| over keys with nonempty beta'
  double holder_renorm = 0.0, holder_plain = 0.0;
  double residual_renorm = 0.0, residual_plain = 0.0;
  double max_diff = 0.0;  // sup |u_renorm - u_plain|
};

struct AblationReport {
  std::vector<AblationRow> rows;
  double slope_renorm = 0.0, slope_plain = 0.0;  // log-log slopes of the Hoelder constants in eps
};

struct AblationSetup {
  NoiseSpec noise;  // eps is overwritten per ladder step
  IndexSet index;
  int ensemble = 16;
  double center = 1.0;
};

/// Runs the eps ladder with h from estimate_q and with h = 0.
inline AblationReport renormalization_ablation(const SolverConfig& cfg, const AblationSetup& setup, const Nonlinearity& a,
                                               const EllipticityWindow& w, double alpha) {
  AblationReport rep;
  std::vector<double> es, hr, hp;
  for (double eps : cfg.eps_ladder) {
    NoiseSpec ns = setup.noise;
    ns.eps = eps;
    auto q = estimate_q(EnsembleTemplate{ns, cfg.grid, setup.index, setup.center}, setup.ensemble);
    auto xi = sample_noise(ns, cfg.grid);
    auto ur = solve_renormalized(cfg, xi, q, a, w);
    auto up = solve_renormalized(cfg, xi, RenormVector{}, a, w);
    AblationRow row;
    row.eps = eps;
    row.q_max = q.max_abs();
    for (auto& [k, j] : q.q)
      if (!k.beta_prime.empty())
        for (double v : j.c) row.q_divergent = std::max(row.q_divergent, std::abs(v));
    row.holder_renorm = verify_holder(ur.u, cfg.grid, alpha, ns.amplitude).constant;
    row.holder_plain = verify_holder(up.u, cfg.grid, alpha, ns.amplitude).constant;
    row.residual_renorm = ur.residual;
    row.residual_plain = up.residual;
    for (std::size_t p = 0; p < ur.u.size(); ++p) row.max_diff = std::max(row.max_diff, std::abs(ur.u[p] - up.u[p]));
    rep.rows.push_back(row);
    es.push_back(eps);
    hr.push_back(row.holder_renorm);
    hp.push_back(row.holder_plain);
  }
  if (es.size() >= 2) {
    rep.slope_renorm = loglog_slope(es, hr);
    rep.slope_plain = loglog_slope(es, hp);
  }
  return rep;
}

/// Largest admissible expansion order min{n alpha, 1 + n' alpha}; requires > 2 - alpha.
inline double default_eta(Rational alpha) {
  auto ci = critical_integers(alpha);
  const double a = alpha.value();
  const double eta = std::min(ci.n * a, 1.0 + ci.n_prime * a);
  if (!(eta > 2.0 - a)) throw std::invalid_argument("no admissible eta for alpha = " + alpha.str());
  return eta;
}

}  // namespace mrs
