#pragma once
// Parabolic metric, symmetric compactly supported kernels, weighted jet norms
// and measurement harnesses for integration and reconstruction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"

namespace mrs {

/// Space-time point (t, x).
struct STPoint {
  double t = 0.0;
  std::vector<double> x;
};

/// d(x, y) = sqrt|t - s| + |x - y|.
struct ParabolicMetric {
  double operator()(const STPoint& a, const STPoint& b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < a.x.size(); ++i) s += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]);
    return std::sqrt(std::abs(a.t - b.t)) + std::sqrt(s);
  }
};

/// Grid points carry unwrapped integer offsets {it, ix_0, ...}; evaluation wraps.
using GridPoint = std::vector<int>;

inline STPoint coords(const TorusGrid& g, const GridPoint& p) {
  STPoint s;
  s.t = p[0] * g.dt();
  for (int i = 0; i < g.d; ++i) s.x.push_back(p[static_cast<std::size_t>(i + 1)] * g.dx());
  return s;
}

inline double grid_distance(const TorusGrid& g, const GridPoint& a, const GridPoint& b) {
  return ParabolicMetric{}(coords(g, a), coords(g, b));
}

/// Minimum-image parabolic distance on the torus.
inline double torus_distance(const TorusGrid& g, const GridPoint& a, const GridPoint& b) {
  auto md = [](int i, int n) {
    int r = TorusGrid::wrap(i, n);
    return std::min(r, n - r);
  };
  double s = 0.0;
  for (int i = 1; i <= g.d; ++i) {
    const double v = md(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)], g.nx) * g.dx();
    s += v * v;
  }
  return std::sqrt(md(a[0] - b[0], g.nt) * g.dt()) + std::sqrt(s);
}

namespace detail {

/// exp(1 - 1/(1 - s^2)) on |s| < 1 and its first two derivatives.
inline double bump(double s, int k = 0) {
  if (std::abs(s) >= 1.0) return 0.0;
  const double w = 1.0 - s * s;
  const double f = std::exp(1.0 - 1.0 / w);
  if (k == 0) return f;
  if (k == 1) return f * (-2.0 * s / (w * w));
  return f * (4.0 * s * s / (w * w * w * w) - (2.0 + 6.0 * s * s) / (w * w * w));
}

/// Composite trapezoid on [-1, 1] (spectrally accurate for the bump).
template <class F>
double quad11(F&& f, int n = 2048) {
  const double h = 2.0 / n;
  double s = 0.0;
  for (int i = 1; i < n; ++i) s += f(-1.0 + i * h);
  return s * h;
}

}  // namespace detail

/// Separable bump rho(t, x) = c tau(t / rt) prod_i phi(x_i / rx), with
/// rt + sqrt(d) rx <= 1 so that supp rho lies in the unit parabolic ball.
struct Mollifier {
  std::string kernel_id = "bump";
  int d = 1;
  double rt = 0.25;   // time half-width (in units of t)
  double rx = 0.5;    // space half-width
  double mass1 = 0.0; // int phi
  // certificates: int |d_t rho|, int |grad rho|, int |grad^2 rho|
  double cert_dt = 0.0, cert_grad = 0.0, cert_hess = 0.0;

  static Mollifier bump_kernel(int d) {
    Mollifier m;
    m.d = d;
    // sqrt(rt) + sqrt(d) rx = 1 with equal shares
    m.rt = 0.25;
    m.rx = 0.5 / std::sqrt(static_cast<double>(d));
    m.mass1 = detail::quad11([](double s) { return detail::bump(s); });
    m.certify();
    return m;
  }

  double support_radius() const { return std::sqrt(rt) + std::sqrt(static_cast<double>(d)) * rx; }

  /// Normalized 1-d profiles: int tau = 1 over |t| < rt, int phi = 1 over |x| < rx.
  double tau(double t, int k = 0) const { return detail::bump(t / rt, k) / (mass1 * std::pow(rt, k + 1)); }
  double phi(double x, int k = 0) const { return detail::bump(x / rx, k) / (mass1 * std::pow(rx, k + 1)); }

  double value(double t, const std::vector<double>& x) const {
    double v = tau(t);
    for (double xi : x) v *= phi(xi);
    return v;
  }

  /// Fourier transforms int f(s) e^{-i w s} ds of the normalized profiles.
  double tau_hat(double w) const {
    return detail::quad11([&](double s) { return detail::bump(s) * std::cos(w * rt * s); }, 512) / mass1;
  }
  double phi_hat(double k) const {
    return detail::quad11([&](double s) { return detail::bump(s) * std::cos(k * rx * s); }, 512) / mass1;
  }
  /// Transform of x phi(x): -i int x phi(x) sin(k x) dx.
  cplx xphi_hat(double k) const {
    const double v = detail::quad11([&](double s) { return s * detail::bump(s) * std::sin(k * rx * s); }, 512);
    return cplx(0.0, -rx * v / mass1);
  }

  /// Kernel certificates by tensor quadrature. The nominal normalization asks
  /// for each to be <= 1; with unit mass and support in the unit ball this is
  /// not attainable, so the values are recorded (see certified_scale).
  void certify() {
    const int n = d == 1 ? 400 : (d == 2 ? 120 : 40);
    const double ht = 2 * rt / n, hx = 2 * rx / n;
    std::vector<double> ts, xs;
    for (int i = 0; i < n; ++i) {
      ts.push_back(-rt + (i + 0.5) * ht);
      xs.push_back(-rx + (i + 0.5) * hx);
    }
    double cdt = 0, cg = 0, ch = 0;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    const std::size_t total = static_cast<std::size_t>(std::pow(n, d));
    for (double t : ts) {
      const double t0 = tau(t), t1 = tau(t, 1);
      for (std::size_t f = 0; f < total; ++f) {
        std::size_t r = f;
        std::vector<double> p0(static_cast<std::size_t>(d)), p1(p0.size()), p2(p0.size());
        for (int a = 0; a < d; ++a) {
          const double x = xs[r % static_cast<std::size_t>(n)];
          r /= static_cast<std::size_t>(n);
          p0[static_cast<std::size_t>(a)] = phi(x);
          p1[static_cast<std::size_t>(a)] = phi(x, 1);
          p2[static_cast<std::size_t>(a)] = phi(x, 2);
        }
        double prod = 1.0;
        for (double v : p0) prod *= v;
        cdt += std::abs(t1) * prod;
        double g2 = 0.0, h2 = 0.0;
        for (int a = 0; a < d; ++a) {
          double ga = t0;
          for (int b = 0; b < d; ++b) ga *= (a == b ? p1 : p0)[static_cast<std::size_t>(b)];
          g2 += ga * ga;
          for (int c = 0; c < d; ++c) {
            double hc = t0;
            for (int b = 0; b < d; ++b) {
              const int order = (a == b) + (c == b);
              hc *= (order == 0 ? p0 : order == 1 ? p1 : p2)[static_cast<std::size_t>(b)];
            }
            h2 += hc * hc;
          }
        }
        cg += std::sqrt(g2);
        ch += std::sqrt(h2);
      }
    }
    const double vol = ht * std::pow(hx, d);
    cert_dt = cdt * vol;
    cert_grad = cg * vol;
    cert_hess = ch * vol;
  }

  /// Factor s such that s * rho satisfies all certificate bounds <= 1.
  double certified_scale() const { return 1.0 / std::max({1.0, cert_dt, cert_grad, cert_hess}); }

  /// rho_lambda(t, x) = lambda^{-(d+2)} rho(t / lambda^2, x / lambda).
  double scaled(double lambda, double t, const std::vector<double>& x) const {
    std::vector<double> xs;
    for (double v : x) xs.push_back(v / lambda);
    return std::pow(lambda, -(d + 2)) * value(t / (lambda * lambda), xs);
  }

  /// Fourier multiplier of rho_lambda per spectral slot (real, even kernel).
  std::vector<double> multiplier(const Spectral& sp, double lambda) const {
    const auto& g = sp.grid();
    const double tw = 2 * std::numbers::pi / g.period_t, xw = 2 * std::numbers::pi / g.period_x;
    std::vector<double> th(static_cast<std::size_t>(g.nt)), xh(static_cast<std::size_t>(g.nx));
    for (int i = 0; i < g.nt; ++i) th[static_cast<std::size_t>(i)] = tau_hat(lambda * lambda * tw * (i <= g.nt / 2 ? i : i - g.nt));
    for (int i = 0; i < g.nx; ++i) xh[static_cast<std::size_t>(i)] = phi_hat(lambda * xw * (i <= g.nx / 2 ? i : i - g.nx));
    std::vector<double> m(sp.nspec());
    for (std::size_t s = 0; s < m.size(); ++s) {
      double v = th[index_of(sp.omega()[s], tw, g.nt)];
      for (int a = 0; a < g.d; ++a) v *= xh[index_of(sp.k(a)[s], xw, g.nx)];
      m[s] = v;
    }
    return m;
  }

  /// Multiplier of (x_axis rho)_lambda, i.e. the kernel z_axis rho_lambda(z).
  std::vector<cplx> moment_multiplier(const Spectral& sp, double lambda, int axis) const {
    const auto& g = sp.grid();
    const double tw = 2 * std::numbers::pi / g.period_t, xw = 2 * std::numbers::pi / g.period_x;
    std::vector<double> th(static_cast<std::size_t>(g.nt)), xh(static_cast<std::size_t>(g.nx));
    std::vector<cplx> mh(static_cast<std::size_t>(g.nx));
    for (int i = 0; i < g.nt; ++i) th[static_cast<std::size_t>(i)] = tau_hat(lambda * lambda * tw * (i <= g.nt / 2 ? i : i - g.nt));
    for (int i = 0; i < g.nx; ++i) {
      const double k = lambda * xw * (i <= g.nx / 2 ? i : i - g.nx);
      xh[static_cast<std::size_t>(i)] = phi_hat(k);
      mh[static_cast<std::size_t>(i)] = lambda * xphi_hat(k);
    }
    std::vector<cplx> m(sp.nspec());
    for (std::size_t s = 0; s < m.size(); ++s) {
      cplx v = th[index_of(sp.omega()[s], tw, g.nt)];
      for (int a = 0; a < g.d; ++a) {
        const auto i = index_of(sp.k(a)[s], xw, g.nx);
        v *= a == axis ? mh[i] : cplx(xh[i], 0.0);
      }
      m[s] = v;
    }
    return m;
  }

 private:
  static std::size_t index_of(double w, double unit, int n) {
    const long f = std::lround(w / unit);
    return static_cast<std::size_t>(((f % n) + n) % n);
  }
};

/// F_lambda = F * rho_lambda on the torus.
inline Field convolve(const Spectral& sp, const Field& f, const Mollifier& rho, double lambda) {
  if (lambda < 2 * sp.grid().dx()) throw std::invalid_argument("convolution scale below 2 dx is unresolvable");
  const auto m = rho.multiplier(sp, lambda);
  return apply_multiplier(sp, f, [&](std::size_t i) { return cplx(m[i], 0.0); });
}

/// int |d^k rho_lambda(y)| d^a(0, y) dy on a fixed lattice (spacings ht, hx),
/// spatial (kind = 0, d^k/dx_0^k) or temporal (kind = 1, d^k/dt^k).
inline double moment_integral(const Mollifier& rho, double lambda, int k, int kind, double a, double ht, double hx) {
  const double tmax = rho.rt * lambda * lambda, xmax = rho.rx * lambda;
  const long nt = static_cast<long>(std::ceil(tmax / ht)), nx = static_cast<long>(std::ceil(xmax / hx));
  if (rho.d != 1) throw std::invalid_argument("moment_integral is implemented for d = 1");
  const double l2 = lambda * lambda;
  double s = 0.0;
  for (long i = -nt; i <= nt; ++i) {
    const double t = i * ht;
    const double tv = kind == 1 ? rho.tau(t / l2, k) / std::pow(l2, k) : rho.tau(t / l2);
    if (tv == 0.0) continue;
    for (long j = -nx; j <= nx; ++j) {
      const double x = j * hx;
      const double xv = kind == 0 ? rho.phi(x / lambda, k) / std::pow(lambda, k) : rho.phi(x / lambda);
      s += std::abs(tv * xv) / (l2 * lambda) * std::pow(std::sqrt(std::abs(t)) + std::abs(x), a);
    }
  }
  return s * ht * hx;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope fit needs >= 2 points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------- jets

/// A jet U(x, y) sampled at grid base points; y ranges over grid points.
struct Jet {
  TorusGrid grid;
  std::vector<GridPoint> bases;
  std::function<double(const GridPoint& x, const GridPoint& y)> U;
  double radius = 1.0;  // the ball B_radius(0) defining dist_x
};

/// Base-point lattice in B_1(0): n points per axis over [-1, 1]^{d+1} in
/// parabolic coordinates (t = sign(s) s^2), kept if dist_x >= min_dist.
inline std::vector<GridPoint> base_lattice(const TorusGrid& g, int n = 9, double min_dist = 0.1, double radius = 1.0) {
  std::vector<GridPoint> out;
  std::vector<int> c(static_cast<std::size_t>(g.d + 1), 0);
  const std::size_t total = static_cast<std::size_t>(std::pow(n, g.d + 1));
  for (std::size_t f = 0; f < total; ++f) {
    std::size_t r = f;
    GridPoint p(static_cast<std::size_t>(g.d + 1));
    for (int a = 0; a <= g.d; ++a) {
      const double u = radius * (-1.0 + 2.0 * static_cast<double>(r % static_cast<std::size_t>(n)) / (n - 1));
      r /= static_cast<std::size_t>(n);
      if (a == 0) p[0] = static_cast<int>(std::lround(std::copysign(u * u, u) / g.dt()));
      else p[static_cast<std::size_t>(a)] = static_cast<int>(std::lround(u / g.dx()));
    }
    const double dist = radius - grid_distance(g, p, GridPoint(p.size(), 0));
    if (dist >= min_dist * radius) out.push_back(p);
  }
  return out;
}

inline double dist_to_boundary(const TorusGrid& g, const GridPoint& x, double radius = 1.0) {
  return radius - grid_distance(g, x, GridPoint(x.size(), 0));
}

/// Target points y with 0 < d(y, x) < r: a dense core of radius r_core and a
/// strided shell, capped at about max_points. Time offsets are unwrapped.
inline std::vector<GridPoint> ball_targets(const TorusGrid& g, const GridPoint& x, double r, std::size_t max_points = 4000) {
  std::vector<GridPoint> out;
  const int mt = static_cast<int>(std::floor(r * r / g.dt())), mx = static_cast<int>(std::floor(r / g.dx()));
  // strides so that the lattice has about max_points points
  double count = (2.0 * mt + 1) * std::pow(2.0 * mx + 1, g.d);
  const double ratio = std::pow(std::max(1.0, count / static_cast<double>(max_points)), 1.0 / (g.d + 1));
  const int st = std::max(1, static_cast<int>(std::ceil(ratio))), sx = st;
  auto push_if = [&](const GridPoint& y) {
    const double dd = grid_distance(g, x, y);
    if (dd > 0 && dd < r) out.push_back(y);
  };
  std::function<void(int, GridPoint&, int, int)> rec = [&](int axis, GridPoint& y, int stride_t, int stride_x) {
    if (axis > g.d) { push_if(y); return; }
    const int m = axis == 0 ? mt : mx;
    const int s = axis == 0 ? stride_t : stride_x;
    const int base = x[static_cast<std::size_t>(axis)];
    for (int o = -(m / s) * s; o <= m; o += s) {
      y[static_cast<std::size_t>(axis)] = base + o;
      rec(axis + 1, y, stride_t, stride_x);
    }
  };
  GridPoint y = x;
  rec(0, y, st, sx);
  if (st > 1) {
    // dense core near x so that small distances are represented
    const double rc = std::min(r, 4.0 * std::max(g.dx(), std::sqrt(g.dt())));
    const int ct = static_cast<int>(std::floor(rc * rc / g.dt())), cx = static_cast<int>(std::floor(rc / g.dx()));
    std::function<void(int, GridPoint&)> core = [&](int axis, GridPoint& yy) {
      if (axis > g.d) {
        bool on_lattice = true;
        for (int a = 0; a <= g.d; ++a)
          if ((yy[static_cast<std::size_t>(a)] - x[static_cast<std::size_t>(a)]) % st != 0) on_lattice = false;
        if (!on_lattice) push_if(yy);
        return;
      }
      const int m = axis == 0 ? ct : cx;
      for (int o = -m; o <= m; ++o) {
        yy[static_cast<std::size_t>(axis)] = x[static_cast<std::size_t>(axis)] + o;
        core(axis + 1, yy);
      }
    };
    GridPoint yy = x;
    core(0, yy);
  }
  return out;
}

struct WeightedValue {
  double value = 0.0;
  GridPoint x, y;
};

namespace detail {
template <class W>
WeightedValue jet_sup(const Jet& J, double radius_factor, W&& weight, std::size_t max_points) {
  if (J.bases.empty()) throw std::invalid_argument("empty base-point sample");
  std::vector<WeightedValue> per(J.bases.size());
  parallel_for(J.bases.size(), [&](std::size_t i) {
    const auto& x = J.bases[i];
    const double dx = dist_to_boundary(J.grid, x, J.radius);
    WeightedValue best{0.0, x, x};
    for (auto& y : ball_targets(J.grid, x, radius_factor * dx, max_points)) {
      const double v = weight(dx, grid_distance(J.grid, x, y)) * std::abs(J.U(x, y));
      if (v > best.value) best = {v, x, y};
    }
    per[i] = best;
  });
  WeightedValue best;
  for (auto& p : per)
    if (p.value > best.value) best = p;
  return best;
}
}  // namespace detail

/// sup |U(x, y)| over x in the sample, y in B_{dist_x}(x).
inline WeightedValue weighted_sup(const Jet& J, std::size_t max_points = 4000) {
  return detail::jet_sup(J, 1.0, [](double, double) { return 1.0; }, max_points);
}

/// sup dist_x^eta |U(x, y)| / d^eta(y, x).
inline WeightedValue weighted_holder(const Jet& J, double eta, std::size_t max_points = 4000) {
  if (!(eta > 0 && eta < 2)) throw std::invalid_argument("eta must lie in (0, 2)");
  return detail::jet_sup(J, 1.0, [&](double dx, double d) { return std::pow(dx, eta) / std::pow(d, eta); }, max_points);
}

/// sup dist_x^eta |U(x, y)| / d^{eta-1}(y, x) over y in B_{dist_x/2}(x).
inline WeightedValue weighted_gubinelli(const Jet& J, double eta, std::size_t max_points = 4000) {
  return detail::jet_sup(J, 0.5, [&](double dx, double d) { return std::pow(dx, eta) / std::pow(d, eta - 1); }, max_points);
}

struct ReportRow {
  std::string x;  // base point label
  double lambda = 0.0;
  double R = 0.0;
  std::string quantity;
  double value = 0.0;
};

inline std::string point_label(const GridPoint& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ":" : "") + std::to_string(p[i]);
  return s;
}

struct HarnessReport {
  double M = 0.0;
  std::vector<ReportRow> rows;
};

namespace detail {

/// min over (c0, nu0) of max_i |v_i - c0 - nu0 . dy_i|: least squares start,
/// then Nelder-Mead on the sup norm.
inline double affine_sup_residual(const std::vector<double>& v, const std::vector<std::vector<double>>& dy) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  const std::size_t p = 1 + (dy.empty() ? 0 : dy[0].size());
  // normal equations
  std::vector<double> A(p * p, 0.0), b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{1.0};
    row.insert(row.end(), dy[i].begin(), dy[i].end());
    for (std::size_t r = 0; r < p; ++r) {
      b[r] += row[r] * v[i];
      for (std::size_t c = 0; c < p; ++c) A[r * p + c] += row[r] * row[c];
    }
  }
  // Gaussian elimination with partial pivoting
  std::vector<double> c0(p, 0.0);
  {
    auto M = A;
    auto rhs = b;
    for (std::size_t k = 0; k < p; ++k) {
      std::size_t piv = k;
      for (std::size_t r = k + 1; r < p; ++r)
        if (std::abs(M[r * p + k]) > std::abs(M[piv * p + k])) piv = r;
      if (std::abs(M[piv * p + k]) < 1e-300) continue;
      for (std::size_t c = 0; c < p; ++c) std::swap(M[k * p + c], M[piv * p + c]);
      std::swap(rhs[k], rhs[piv]);
      for (std::size_t r = k + 1; r < p; ++r) {
        const double f = M[r * p + k] / M[k * p + k];
        for (std::size_t c = k; c < p; ++c) M[r * p + c] -= f * M[k * p + c];
        rhs[r] -= f * rhs[k];
      }
    }
    for (std::size_t k = p; k-- > 0;) {
      if (std::abs(M[k * p + k]) < 1e-300) continue;
      double s = rhs[k];
      for (std::size_t c = k + 1; c < p; ++c) s -= M[k * p + c] * c0[c];
      c0[k] = s / M[k * p + k];
    }
  }
  auto sup = [&](const std::vector<double>& c) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = v[i] - c[0];
      for (std::size_t j = 1; j < p; ++j) r -= c[j] * dy[i][j - 1];
      m = std::max(m, std::abs(r));
    }
    return m;
  };
  // Nelder-Mead
  std::vector<std::vector<double>> simplex{c0};
  double scale = std::max(1e-12, sup(c0));
  for (std::size_t j = 0; j < p; ++j) {
    auto c = c0;
    c[j] += 0.1 * scale * (j == 0 ? 1.0 : 1.0);
    simplex.push_back(c);
  }
  std::vector<double> fv;
  for (auto& s : simplex) fv.push_back(sup(s));
  for (int it = 0; it < 200 * static_cast<int>(p); ++it) {
    std::vector<std::size_t> ord(simplex.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b2) { return fv[a] < fv[b2]; });
    const std::size_t best = ord.front(), worst = ord.back(), second = ord[ord.size() - 2];
    std::vector<double> cen(p, 0.0);
    for (std::size_t i : ord)
      if (i != worst)
        for (std::size_t j = 0; j < p; ++j) cen[j] += simplex[i][j] / static_cast<double>(p);
    auto lerp = [&](double t) {
      std::vector<double> c(p);
      for (std::size_t j = 0; j < p; ++j) c[j] = cen[j] + t * (simplex[worst][j] - cen[j]);
      return c;
    };
    auto xr = lerp(-1.0);
    const double fr = sup(xr);
    if (fr < fv[best]) {
      auto xe = lerp(-2.0);
      const double fe = sup(xe);
      if (fe < fr) { simplex[worst] = xe; fv[worst] = fe; } else { simplex[worst] = xr; fv[worst] = fr; }
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      auto xc = lerp(0.5);
      const double fc = sup(xc);
      if (fc < fv[worst]) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < p; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
          fv[i] = sup(simplex[i]);
        }
      }
    }
  }
  return *std::min_element(fv.begin(), fv.end());
}

}  // namespace detail

/// Local splitting: for each base x, lambda, R, the quantity
///   dist_x^eta inf_{a0, l0} ||(d_s - a0 Lap) U_lambda(x, .) - l0||_{B_R(x)}
/// divided by sum_kappa R^{eta - kappa} lambda^{kappa - 2}; M is the max ratio.
/// `field_of(x)` returns U(x, .) on the whole (periodic) grid.
inline HarnessReport check_local_splitting(const TorusGrid& g, const std::vector<GridPoint>& bases,
                                           const std::function<Field(const GridPoint&)>& field_of,
                                           const Mollifier& rho, const std::vector<double>& lambdas,
                                           const std::vector<double>& Rs, const std::vector<double>& A, double eta,
                                           double Lambda, int n_a0 = 5, std::size_t max_points = 3000) {
  auto sp = spectral_for(g);
  HarnessReport rep;
  std::vector<std::vector<ReportRow>> rows(bases.size());
  std::vector<double> Ms(bases.size(), 0.0);
  parallel_for(bases.size(), [&](std::size_t bi) {
    const auto& x = bases[bi];
    const double dx = dist_to_boundary(g, x);
    const Field U = field_of(x);
    for (double lam : lambdas) {
      if (!(lam < dx / 10)) continue;
      const auto m = rho.multiplier(*sp, lam);
      auto s = sp->forward(U);
      std::vector<cplx> st(s.size()), sl(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] *= m[i];
        st[i] = sp->nyquist_t(i) ? cplx(0, 0) : s[i] * cplx(0.0, sp->omega()[i]);
        sl[i] = -sp->ksq()[i] * s[i];
      }
      const Field Ut = sp->backward(st), Ul = sp->backward(sl);
      for (double R : Rs) {
        if (!(R < dx / 2) || !(lam <= R / 2)) continue;
        // time offsets deduplicated modulo the period: l0 does not depend on t
        auto ys = ball_targets(g, x, R, max_points);
        std::vector<std::vector<double>> dyv;
        std::vector<std::size_t> flat;
        for (auto& y : ys) {
          std::vector<double> dv;
          for (int a = 1; a <= g.d; ++a) dv.push_back((y[static_cast<std::size_t>(a)] - x[static_cast<std::size_t>(a)]) * g.dx());
          dyv.push_back(dv);
          flat.push_back(g.flat(y));
        }
        double best = std::numeric_limits<double>::infinity();
        for (int ia = 0; ia < n_a0; ++ia) {
          const double a0 = n_a0 == 1 ? 1.0 : Lambda + (1.0 / Lambda - Lambda) * ia / (n_a0 - 1);
          std::vector<double> v(flat.size());
          for (std::size_t i = 0; i < flat.size(); ++i) v[i] = Ut[flat[i]] - a0 * Ul[flat[i]];
          best = std::min(best, detail::affine_sup_residual(v, dyv));
        }
        double den = 0.0;
        for (double k : A) den += std::pow(R, eta - k) * std::pow(lam, k - 2);
        const double ratio = std::pow(dx, eta) * best / den;
        Ms[bi] = std::max(Ms[bi], ratio);
        rows[bi].push_back({point_label(x), lam, R, "local_splitting_ratio", ratio});
      }
    }
  });
  for (std::size_t i = 0; i < bases.size(); ++i) {
    rep.M = std::max(rep.M, Ms[i]);
    rep.rows.insert(rep.rows.end(), rows[i].begin(), rows[i].end());
  }
  return rep;
}

/// Three-point continuity: smallest M with
///   dist_x^eta |U(x,z) - U(x,y) - U(y,z) - gamma(x,y).(z - y)| <= M sum_k d^k(y,x) d^{eta-k}(z,y).
inline HarnessReport check_three_point(const Jet& J, const std::function<std::vector<double>(const GridPoint&, const GridPoint&)>& gamma,
                                       const std::vector<double>& A, double eta, std::size_t per_ball = 24) {
  const auto& g = J.grid;
  HarnessReport rep;
  std::vector<double> Ms(J.bases.size(), 0.0);
  std::vector<std::vector<ReportRow>> rows(J.bases.size());
  parallel_for(J.bases.size(), [&](std::size_t bi) {
    const auto& x = J.bases[bi];
    const double dx = dist_to_boundary(g, x);
    auto ys = ball_targets(g, x, dx / 2, per_ball);
    for (auto& y : ys) {
      const auto gm = gamma(x, y);
      for (auto& z : ball_targets(g, y, dx / 2, per_ball)) {
        double lhs = J.U(x, z) - J.U(x, y) - J.U(y, z);
        for (int a = 0; a < g.d; ++a)
          lhs -= gm[static_cast<std::size_t>(a)] * (z[static_cast<std::size_t>(a + 1)] - y[static_cast<std::size_t>(a + 1)]) * g.dx();
        lhs = std::pow(dx, eta) * std::abs(lhs);
        const double dyx = grid_distance(g, y, x), dzy = grid_distance(g, z, y);
        double den = 0.0;
        for (double k : A) den += std::pow(dyx, k) * std::pow(dzy, eta - k);
        const double ratio = den > 0 ? lhs / den : (lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
        Ms[bi] = std::max(Ms[bi], ratio);
      }
    }
    rows[bi].push_back({point_label(x), 0.0, dx / 2, "three_point_ratio", Ms[bi]});
  });
  for (std::size_t i = 0; i < J.bases.size(); ++i) {
    rep.M = std::max(rep.M, Ms[i]);
    rep.rows.insert(rep.rows.end(), rows[i].begin(), rows[i].end());
  }
  return rep;
}

struct ReconstructionReport {
  std::vector<double> lambdas;
  std::vector<double> numerator;  // max over sampled y of |(EF)_l(y) - F_l(y, y)|
  double max_ratio = 0.0;         // numerator / (C lambda^eta)
  double slope = 0.0;             // log-log slope of the numerator
  std::vector<ReportRow> rows;
};

/// Discrete kernel weights of rho_lambda on the grid (normalized to unit sum).
inline std::vector<std::pair<GridPoint, double>> kernel_stencil(const TorusGrid& g, const Mollifier& rho, double lambda) {
  const int mt = static_cast<int>(std::floor(rho.rt * lambda * lambda / g.dt()));
  const int mx = static_cast<int>(std::floor(rho.rx * lambda / g.dx()));
  std::vector<std::pair<GridPoint, double>> st;
  GridPoint o(static_cast<std::size_t>(g.d + 1), 0);
  std::function<void(int)> rec = [&](int axis) {
    if (axis > g.d) {
      auto c = coords(g, o);
      const double w = rho.scaled(lambda, c.t, c.x);
      if (w > 0) st.push_back({o, w});
      return;
    }
    const int m = axis == 0 ? mt : mx;
    for (int i = -m; i <= m; ++i) {
      o[static_cast<std::size_t>(axis)] = i;
      rec(axis + 1);
    }
  };
  rec(0);
  double s = 0.0;
  for (auto& [p, w] : st) s += w;
  if (s <= 0) throw std::invalid_argument("kernel unresolved on the grid at this scale");
  for (auto& [p, w] : st) w /= s;
  return st;
}

/// Reconstruction harness: |(EF)_lambda(y) - F_lambda(y, y)| against C lambda^eta.
inline ReconstructionReport check_reconstruction(const Jet& F, const Mollifier& rho, double eta,
                                                 const std::vector<double>& lambdas, double C_declared) {
  const auto& g = F.grid;
  ReconstructionReport rep;
  rep.lambdas = lambdas;
  for (double lam : lambdas) {
    const auto st = kernel_stencil(g, rho, lam);
    std::vector<double> per(F.bases.size(), 0.0);
    parallel_for(F.bases.size(), [&](std::size_t bi) {
      const auto& y = F.bases[bi];
      double ef = 0.0, fl = 0.0;
      for (auto& [o, w] : st) {
        GridPoint z = y;
        for (std::size_t a = 0; a < z.size(); ++a) z[a] -= o[a];
        ef += w * F.U(z, z);
        fl += w * F.U(y, z);
      }
      per[bi] = std::abs(ef - fl);
    });
    const double num = *std::max_element(per.begin(), per.end());
    rep.numerator.push_back(num);
    const double ratio = num / (C_declared * std::pow(lam, eta));
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    rep.rows.push_back({"max", lam, 0.0, "reconstruction_numerator", num});
    rep.rows.push_back({"max", lam, 0.0, "reconstruction_ratio", ratio});
  }
  bool positive = std::all_of(rep.numerator.begin(), rep.numerator.end(), [](double v) { return v > 0; });
  rep.slope = positive && lambdas.size() >= 2 ? loglog_slope(lambdas, rep.numerator) : 0.0;
  return rep;
}

}  // namespace mrs
