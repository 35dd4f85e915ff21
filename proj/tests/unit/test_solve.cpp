#include "doctest.h"

#include <mrs/solve.hpp>

#include <cstring>
#include <numbers>
#include <random>

using namespace mrs;

namespace {

const double kPi = std::numbers::pi;
const Rational kAlpha(3, 4);

NoiseSpec noise(double eps, std::uint64_t seed = 5, double amplitude = 0.25) {
  NoiseSpec s;
  s.seed = seed;
  s.decay = NoiseSpec::decay_for(kAlpha, 1);
  s.eps = eps;
  s.amplitude = amplitude;
  return s;
}

SolverConfig config(const TorusGrid& g) {
  SolverConfig c;
  c.grid = g;
  return c;
}

IndexSet index_34() { return enumerate_populated(kAlpha, 1, Homogeneity{2, 0, kAlpha}); }

MultiIndex key(int bx, std::map<int, int> bp) { return MultiIndex({bx}, bp); }

Nonlinearity sine() { return {"sine", {1.0, 0.08, 1.3, 0.4}}; }

bool bitwise_equal(const Field& a, const Field& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("solver: zero noise gives the zero-mean constant") {
  TorusGrid g{1, 64, 64, 1.0, 1.0 / 8};
  auto r = solve_renormalized(config(g), Field(g.size(), 0.0), RenormVector{}, sine(), EllipticityWindow{});
  CHECK(field_max_abs(r.u) == 0.0);
  CHECK(r.residual <= 1e-7);
  CHECK(r.mu == 0.0);
}

TEST_CASE("solver: constant coefficient collapses to the linear heat solve") {
  TorusGrid g{1, 64, 128, 1.0, 1.0 / 8};
  const double a0 = 1.1;
  auto xi = sample_noise(noise(1.0 / 16), g);
  auto r = solve_renormalized(config(g), xi, RenormVector{}, Nonlinearity::constant(a0), EllipticityWindow{});
  CHECK(r.residual <= 1e-7);
  auto sp = spectral_for(g);
  AffineField rhs(a0, 2, g.size());
  rhs.h.c[0] = xi;
  auto hs = heat_solve(rhs, *sp);
  double err = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) err = std::max(err, std::abs(r.u[p] - hs.u.h.c[0][p]));
  CHECK(err <= 1e-8);
  CHECK(r.mu == doctest::Approx(field_mean(xi)).epsilon(1e-9));
}

TEST_CASE("solver: residual certificate against an independent evaluation") {
  TorusGrid g{1, 64, 128, 1.0, 1.0 / 8};
  auto xi = sample_noise(noise(1.0 / 16, 9), g);
  RenormVector q;
  q.q[key(0, {})] = AJet::constant(1.0, 4, 0.2);
  q.q[key(0, {{1, 1}})] = AJet::identity(1.0, 4);
  const auto a = sine();
  auto r = solve_renormalized(config(g), xi, q, a, EllipticityWindow{});
  CHECK(r.residual <= 1e-7);
  CHECK(r.history.back() == r.residual);
  // d_t and Delta by explicit Fourier sums along each axis
  auto sp = spectral_for(g);
  Field res(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double v = r.u[p];
    res[p] = 0.2 + a.deriv(v, 1) * a(v) - xi[p] + r.mu;  // h(v) = q0 + a'(v) q1(a(v))
  }
  // spectral derivatives: multiply the 2D transform by i w and -k^2
  auto s = sp->forward(r.u);
  std::vector<cplx> st(s.size()), sl(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    st[i] = sp->nyquist_t(i) ? cplx(0, 0) : cplx(0, sp->omega()[i]) * s[i];
    sl[i] = -sp->ksq()[i] * s[i];
  }
  auto ut = sp->backward(st), lu = sp->backward(sl);
  for (std::size_t p = 0; p < g.size(); ++p) res[p] += ut[p] - a(r.u[p]) * lu[p];
  auto rs = sp->forward(res);
  for (std::size_t i = 0; i < rs.size(); ++i)
    if (sp->nyquist_t(i)) rs[i] = 0;
  CHECK(field_max_abs(sp->backward(rs)) <= 1e-7);
}

TEST_CASE("solver: ellipticity violation and configuration errors") {
  TorusGrid g{1, 32, 32, 1.0, 1.0 / 8};
  auto xi = sample_noise(noise(1.0 / 8), g);
  CHECK_THROWS_AS(solve_renormalized(config(g), xi, RenormVector{}, Nonlinearity::constant(0.3), EllipticityWindow{}),
                  std::domain_error);
  auto c = config(g);
  c.abar = 3.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = config(g);
  c.dt_solver = 2 * g.dt();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = config(g);
  c.eps_ladder = {1.0 / 32, 1.0 / 16};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("solver: explicit zero q is bitwise identical and constant a ignores q") {
  TorusGrid g{1, 64, 64, 1.0, 1.0 / 8};
  auto xi = sample_noise(noise(1.0 / 16, 3), g);
  RenormVector zero;
  zero.q[key(0, {})] = AJet(1.0, 4);
  zero.q[key(0, {{1, 1}})] = AJet(1.0, 4);
  auto a = solve_renormalized(config(g), xi, RenormVector{}, sine(), EllipticityWindow{});
  auto b = solve_renormalized(config(g), xi, zero, sine(), EllipticityWindow{});
  CHECK(bitwise_equal(a.u, b.u));
  RenormVector q;
  q.q[key(0, {})] = AJet::constant(1.0, 4, 0.4);
  q.q[key(0, {{1, 1}})] = AJet::constant(1.0, 4, -0.7);
  auto c0 = solve_renormalized(config(g), xi, q, Nonlinearity::constant(1.2), EllipticityWindow{});
  auto c1 = solve_renormalized(config(g), xi, RenormVector{}, Nonlinearity::constant(1.2), EllipticityWindow{});
  double d = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) d = std::max(d, std::abs(c0.u[p] - c1.u[p]));
  CHECK(d <= 1e-8);
  CHECK(c0.mu - c1.mu == doctest::Approx(-0.4));
}

TEST_CASE("solver and Hoelder check are independent of the thread count") {
  TorusGrid g{1, 64, 128, 1.0, 1.0 / 8};
  auto xi = sample_noise(noise(1.0 / 16, 4), g);
  set_threads(1);
  auto a = solve_renormalized(config(g), xi, RenormVector{}, sine(), EllipticityWindow{});
  auto ha = verify_holder(a.u, g, 0.75, 0.25);
  set_threads(3);
  auto b = solve_renormalized(config(g), xi, RenormVector{}, sine(), EllipticityWindow{});
  auto hb = verify_holder(b.u, g, 0.75, 0.25);
  set_threads(0);
  CHECK(bitwise_equal(a.u, b.u));
  CHECK(ha.constant == hb.constant);
}

TEST_CASE("Hoelder check: constants, shifts and a smooth profile") {
  TorusGrid g{1, 128, 64, 1.0, 1.0 / 8};
  CHECK(verify_holder(Field(g.size(), 2.5), g, 0.75, 0.5).constant == 0.0);
  Field u(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) u[p] = std::sin(2 * kPi * g.xcoord(g.unflat(p)[1]));
  auto h = verify_holder(u, g, 0.75, 0.5);
  // brute force over all spatial pairs (u does not depend on t)
  double oracle = 0.0;
  for (int i = 0; i < g.nx; ++i)
    for (int m = 1; m * g.dx() < 1.0 / 3; ++m) {
      const double v = std::abs(std::sin(2 * kPi * (i + m) * g.dx()) - std::sin(2 * kPi * i * g.dx())) / std::pow(m * g.dx(), 0.75);
      oracle = std::max(oracle, v);
    }
  CHECK(h.raw <= oracle * (1 + 1e-12));
  CHECK(h.raw >= 0.95 * oracle);
  CHECK(h.u_norm == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(h.constant == doctest::Approx(h.raw / (h.u_norm + 0.5)));
  // the increment numerator ignores constant shifts
  Field v = u;
  for (auto& e : v) e += 3.0;
  CHECK(verify_holder(v, g, 0.75, 0.5).raw == doctest::Approx(h.raw).epsilon(1e-12));
}

TEST_CASE("expansion check: empty truncation recovers the scaling of smooth profiles") {
  // d = sqrt|dt| + |dx|: a spatial sine moves like d, a temporal sine like d^2
  TorusGrid g{1, 256, 1024, 1.0, 1.0};
  auto M = build_stationary(noise(1.0 / 64, 1, 0.0), g, index_34(), RenormVector{});
  // shells start above the time lattice scale sqrt(dt) for the temporal profile
  const ExpansionOptions ox{1.0 / 3, 160, 1.0 / 32, 1.0 / 8, 100}, ot{1.0 / 3, 160, 1.0 / 16, 1.0 / 4, 100};
  Field ux(g.size()), ut(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) {
    auto ix = g.unflat(p);
    ux[p] = std::sin(2 * kPi * g.xcoord(ix[1]));
    ut[p] = std::sin(2 * kPi * ix[0] * g.dt() / g.period_t);
  }
  auto sx = make_state(g, ux, Nonlinearity::constant(1.0), 1.5, EllipticityWindow{}, 1.0);
  auto st = make_state(g, ut, Nonlinearity::constant(1.0), 1.5, EllipticityWindow{}, 1.0);
  compute_nu(sx, M);
  compute_nu(st, M);
  auto rx = verify_expansion(sx, M, 0.5, ox), rt = verify_expansion(st, M, 0.5, ot);
  CHECK(rx.shells.size() == 2);
  CHECK(std::abs(rx.expansion_exponent - 1.0) <= 0.15);
  CHECK(std::abs(rt.expansion_exponent - 2.0) <= 0.15);
  // the base point itself carries no remainder
  GridPoint x{0, 10};
  CHECK(std::abs(eval_f(sx, x, centered_Pi(M, center(M, x), x))) <= 1e-14);
}

TEST_CASE("expansion check: the remainder improves with the truncation level on average") {
  TorusGrid g{1, 128, 256, 1.0, 1.0 / 8};
  auto ns = noise(1.0 / 64, 7);
  auto q = estimate_q(EnsembleTemplate{ns, g, index_34(), 1.0}, 8);
  auto M = build_stationary(ns, g, index_34(), q);
  auto r = solve_renormalized(config(g), M.xi, q, sine(), EllipticityWindow{});
  auto s = make_state(g, r.u, sine(), 1.5, EllipticityWindow{}, ns.amplitude);
  compute_nu(s, M);
  ExpansionOptions o{1.0 / 3, 80, 1.0 / 32, 0.25, 60};
  auto lowr = verify_expansion(s, M, 1.0, o), high = verify_expansion(s, M, 1.5, o), full = verify_expansion(s, M, 2.0, o);
  for (std::size_t k = 0; k < high.shells.size(); ++k) {
    CHECK(high.shells[k].mean_remainder <= lowr.shells[k].mean_remainder);
    CHECK(full.shells[k].mean_remainder <= high.shells[k].mean_remainder);
  }
  CHECK(high.expansion_exponent > lowr.expansion_exponent);
}

TEST_CASE("default expansion order") {
  CHECK(default_eta(Rational(3, 4)) == doctest::Approx(1.5));
  CHECK(default_eta(Rational(9, 20)) == doctest::Approx(1.8));
  CHECK_THROWS_AS(default_eta(Rational(2, 3)), std::invalid_argument);
}
