#include "doctest.h"

#include <mrs/calculus.hpp>

#include <random>

using namespace mrs;

TEST_CASE("parabolic metric") {
  ParabolicMetric d;
  CHECK(d({0.25, {0.0}}, {0.0, {0.0}}) == doctest::Approx(0.5));
  CHECK(d({0.0, {0.3, 0.4}}, {0.0, {0.0, 0.0}}) == doctest::Approx(0.5));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    STPoint a{u(rng), {u(rng), u(rng)}}, b{u(rng), {u(rng), u(rng)}}, c{u(rng), {u(rng), u(rng)}};
    CHECK(d(a, c) <= d(a, b) + d(b, c) + 1e-14);
    CHECK(d(a, b) == doctest::Approx(d(b, a)));
  }
  // scaling: d(S_l a, S_l b) = l d(a, b)
  STPoint a{0.3, {0.1, -0.2}}, b{-0.1, {0.4, 0.2}};
  STPoint sa{a.t * 0.09, {a.x[0] * 0.3, a.x[1] * 0.3}}, sb{b.t * 0.09, {b.x[0] * 0.3, b.x[1] * 0.3}};
  CHECK(d(sa, sb) == doctest::Approx(0.3 * d(a, b)));
}

TEST_CASE("torus distance uses the minimum image") {
  TorusGrid g{1, 16, 16, 1.0, 1.0};
  CHECK(torus_distance(g, {0, 15}, {0, 0}) == doctest::Approx(1.0 / 16));
  CHECK(torus_distance(g, {12, 0}, {0, 0}) == doctest::Approx(0.5));
}

TEST_CASE("bump kernel: mass, support, symmetry") {
  for (int d : {1, 2}) {
    auto rho = Mollifier::bump_kernel(d);
    CHECK(rho.support_radius() == doctest::Approx(1.0));
    // independent midpoint quadrature of int rho
    const int n = d == 1 ? 800 : 200;
    const double ht = 2 * rho.rt / n, hx = 2 * rho.rx / n;
    double mass = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t = -rho.rt + (i + 0.5) * ht, x = -rho.rx + (j + 0.5) * hx;
        if (d == 1) mass += rho.value(t, {x}) * ht * hx;
        else
          for (int k = 0; k < n; ++k) mass += rho.value(t, {x, -rho.rx + (k + 0.5) * hx}) * ht * hx * hx;
      }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rho.value(rho.rt * 1.0001, std::vector<double>(static_cast<std::size_t>(d), 0.0)) == 0.0);
    CHECK(rho.value(0.1, std::vector<double>(static_cast<std::size_t>(d), 0.2)) ==
          doctest::Approx(rho.value(-0.1, std::vector<double>(static_cast<std::size_t>(d), -0.2))));
  }
}

TEST_CASE("bump derivatives match finite differences") {
  const double h = 1e-5;
  for (double s : {-0.7, -0.2, 0.0, 0.4, 0.8}) {
    CHECK(detail::bump(s, 1) == doctest::Approx((detail::bump(s + h) - detail::bump(s - h)) / (2 * h)).epsilon(1e-6));
    CHECK(detail::bump(s, 2) == doctest::Approx((detail::bump(s + h, 1) - detail::bump(s - h, 1)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("kernel certificates") {
  // for a unimodal profile int |f'| = 2 max f
  auto rho = Mollifier::bump_kernel(1);
  CHECK(rho.cert_dt == doctest::Approx(2 * rho.tau(0)).epsilon(1e-3));
  CHECK(rho.cert_grad == doctest::Approx(2 * rho.phi(0)).epsilon(1e-3));
  // unit mass on a support of time width 2 rt forces int |d_t rho| >= 1/rt
  CHECK(rho.cert_dt >= 1 / rho.rt);
  CHECK(rho.certified_scale() <= 1.0 / rho.cert_dt);
}

TEST_CASE("convolution multiplier against direct quadrature") {
  TorusGrid g{1, 64, 64, 1.0, 0.25};
  auto sp = spectral_for(g);
  auto rho = Mollifier::bump_kernel(1);
  Field f(g.size());
  const double kx = 2 * std::numbers::pi * 3, w = 2 * std::numbers::pi / g.period_t * 2;
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto p = g.unflat(i);
    f[i] = std::cos(kx * g.xcoord(p[1]) + w * g.tcoord(p[0]));
  }
  const double lam = 0.2;
  auto fl = convolve(*sp, f, rho, lam);
  // direct: int rho_l(s, y) cos(kx (x - y) + w (t - s)) ds dy at a few points
  const int n = 400;
  for (std::size_t i : {0ul, 100ul, 1234ul, 3000ul}) {
    auto p = g.unflat(i);
    const double t = g.tcoord(p[0]), x = g.xcoord(p[1]);
    const double tm = rho.rt * lam * lam, xm = rho.rx * lam;
    double s = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double ss = -tm + (a + 0.5) * 2 * tm / n, yy = -xm + (b + 0.5) * 2 * xm / n;
        s += rho.scaled(lam, ss, {yy}) * std::cos(kx * (x - yy) + w * (t - ss));
      }
    s *= (2 * tm / n) * (2 * xm / n);
    CHECK(fl[i] == doctest::Approx(s).epsilon(1e-6));
  }
  CHECK_THROWS_AS(convolve(*sp, f, rho, g.dx()), std::invalid_argument);
  Field one(g.size(), 2.5);
  for (double v : convolve(*sp, one, rho, 0.3)) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("first-moment multiplier") {
  // (z rho)_l * cos(k x) at x = 0 equals int z rho_l(z) cos(k z) dz = 0 (odd) and
  // for sin(k x): int z rho_l(z) sin(k (x - z)) dz at x = 0 is -int z rho_l sin(k z)
  TorusGrid g{1, 64, 16, 1.0, 1.0};
  auto sp = spectral_for(g);
  auto rho = Mollifier::bump_kernel(1);
  const double lam = 0.25, k = 2 * std::numbers::pi * 2;
  Field f(g.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(k * g.xcoord(g.unflat(i)[1]));
  auto m = rho.moment_multiplier(*sp, lam, 0);
  auto out = apply_multiplier(*sp, f, [&](std::size_t i) { return m[i]; });
  const int n = 4000;
  const double xm = rho.rx * lam;
  double s = 0.0;
  for (int b = 0; b < n; ++b) {
    const double z = -xm + (b + 0.5) * 2 * xm / n;
    s += z * rho.phi(z / lam) / lam * std::sin(-k * z);
  }
  s *= 2 * xm / n;
  CHECK(out[0] == doctest::Approx(s).epsilon(1e-6));
}

TEST_CASE("moment scaling of the kernel") {
  auto rho = Mollifier::bump_kernel(1);
  const double a = 0.75;
  std::vector<double> lams{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4};
  const double ht = lams[0] * lams[0] / 256, hx = lams[0] / 256;
  for (int k = 0; k <= 2; ++k) {
    std::vector<double> sx, st;
    for (double l : lams) {
      sx.push_back(moment_integral(rho, l, k, 0, a, ht, hx));
      st.push_back(moment_integral(rho, l, k, 1, a, ht, hx));
    }
    CHECK(std::abs(loglog_slope(lams, sx) - (a - k)) <= 0.1);
    CHECK(std::abs(loglog_slope(lams, st) - (a - 2 * k)) <= 0.1);
  }
}

TEST_CASE("affine sup residual is the Chebyshev error") {
  // best affine sup approximation of y^2 on [-1, 1] has error 1/2
  std::vector<double> v;
  std::vector<std::vector<double>> dy;
  for (int i = -200; i <= 200; ++i) {
    const double y = i / 200.0;
    v.push_back(y * y + 3 * y - 1);
    dy.push_back({y});
  }
  CHECK(detail::affine_sup_residual(v, dy) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("weighted norms on explicit jets") {
  TorusGrid g{1, 64, 256, 1.0, 1.0};
  const double eta = 0.6;
  Jet J{g, base_lattice(g, 7), [&](const GridPoint& x, const GridPoint& y) { return std::pow(grid_distance(g, x, y), eta); }};
  REQUIRE(!J.bases.empty());
  // dist_x^eta |U| / d^eta = dist_x^eta <= 1, maximal at the most interior base point
  double dmax = 0.0;
  for (auto& x : J.bases) dmax = std::max(dmax, dist_to_boundary(g, x));
  CHECK(weighted_holder(J, eta).value == doctest::Approx(std::pow(dmax, eta)));
  CHECK(weighted_sup(J).value <= std::pow(dmax, eta) + 1e-12);
  CHECK(weighted_gubinelli(J, eta).value <= std::pow(dmax, eta) * dmax / 2 + 1e-12);
  CHECK_THROWS_AS(weighted_holder(J, 2.5), std::invalid_argument);
}

TEST_CASE("three-point continuity vanishes on exact expansions") {
  TorusGrid g{1, 64, 256, 1.0, 1.0};
  auto u = [&](const GridPoint& p) { auto c = coords(g, p); return std::sin(2 * std::numbers::pi * c.x[0]) + std::cos(2 * std::numbers::pi * c.t); };
  auto du = [&](const GridPoint& p) { return 2 * std::numbers::pi * std::cos(2 * std::numbers::pi * coords(g, p).x[0]); };
  Jet J{g, base_lattice(g, 5), [&](const GridPoint& x, const GridPoint& y) {
          return u(y) - u(x) - du(x) * (coords(g, y).x[0] - coords(g, x).x[0]);
        }};
  auto gamma = [&](const GridPoint& x, const GridPoint& y) { return std::vector<double>{du(y) - du(x)}; };
  CHECK(check_three_point(J, gamma, {0.5, 1.0}, 1.5).M <= 1e-9);
  auto zero = [&](const GridPoint&, const GridPoint&) { return std::vector<double>{0.0}; };
  CHECK(check_three_point(J, zero, {0.5, 1.0}, 1.5).M > 1e-3);
}

TEST_CASE("reconstruction harness slopes") {
  // time step resolves the kernel support rt l^2 at the smallest scale
  TorusGrid g{1, 256, 1024, 1.0, 1.0 / 8};
  auto rho = Mollifier::bump_kernel(1);
  std::vector<double> lams{1.0 / 16, 1.0 / 8, 1.0 / 4};
  auto bases = base_lattice(g, 5);
  const double eta = 0.5;
  Jet F{g, bases, [&](const GridPoint& z, const GridPoint& zp) {
          return std::pow(grid_distance(g, zp, z), eta) * (2.0 + std::cos(2 * std::numbers::pi * coords(g, zp).x[0]));
        }};
  auto rep = check_reconstruction(F, rho, eta, lams, 1.0);
  CHECK(std::abs(rep.slope - eta) <= 0.1);
  // F(z, z') = u(z') - u(z): the defect is u_l - u, of order l^2
  Jet G{g, bases, [&](const GridPoint& z, const GridPoint& zp) {
          auto f = [&](const GridPoint& p) { return std::sin(2 * std::numbers::pi * coords(g, p).x[0] + 0.3); };
          return f(zp) - f(z);
        }};
  CHECK(std::abs(check_reconstruction(G, rho, 2.0, lams, 1.0).slope - 2.0) <= 0.1);
}

TEST_CASE("local splitting harness") {
  TorusGrid g{1, 64, 64, 1.0, 1.0 / 8};
  auto rho = Mollifier::bump_kernel(1);
  auto bases = base_lattice(g, 5, 0.5);
  REQUIRE(!bases.empty());
  auto constant = [&](const GridPoint&) { return Field(g.size(), 3.0); };
  auto rep = check_local_splitting(g, bases, constant, rho, {0.05}, {0.2}, {0.5}, 1.5, 0.5);
  CHECK(rep.M <= 1e-10);
  CHECK(!rep.rows.empty());
  // linearity in U
  auto wave = [&](double s) {
    return [&g, s](const GridPoint&) {
      Field f(g.size());
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = s * std::cos(2 * std::numbers::pi * g.xcoord(g.unflat(i)[1]));
      return f;
    };
  };
  auto r1 = check_local_splitting(g, bases, wave(1.0), rho, {0.05}, {0.2}, {0.5}, 1.5, 0.5);
  auto r2 = check_local_splitting(g, bases, wave(2.0), rho, {0.05}, {0.2}, {0.5}, 1.5, 0.5);
  CHECK(r1.M > 0);
  CHECK(r2.M == doctest::Approx(2 * r1.M).epsilon(1e-3));
}
