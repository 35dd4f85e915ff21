#pragma once
// Periodic space-time grid, FFTW-backed spectral transforms, and jet-valued
// fields. Layout is row-major [t][x_0]...[x_{d-1}].

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "apoly.hpp"
#include "parallel.hpp"

namespace mrs {

using Field = std::vector<double>;
using cplx = std::complex<double>;

struct TorusGrid {
  int d = 1;
  int nx = 64;
  int nt = 64;
  double period_x = 1.0;
  double period_t = 1.0;

  std::size_t size() const {
    std::size_t n = static_cast<std::size_t>(nt);
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(nx);
    return n;
  }
  std::size_t space_size() const { return size() / static_cast<std::size_t>(nt); }
  double dx() const { return period_x / nx; }
  double dt() const { return period_t / nt; }
  double cell_volume() const { return std::pow(dx(), d) * dt(); }
  double volume() const { return std::pow(period_x, d) * period_t; }

  void validate() const {
    if (d < 1 || d > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
    if (nx < 4 || (nx & (nx - 1)) != 0) throw std::invalid_argument("nx must be a power of two >= 4");
    if (nt < 2 || nt % 2 != 0) throw std::invalid_argument("nt must be even");
    if (!(period_x > 0 && period_t > 0)) throw std::invalid_argument("grid periods must be positive");
  }

  /// Grid point (it, ix...) packed as {t, x_0, ..., x_{d-1}} integer indices.
  std::size_t flat(const std::vector<int>& p) const {
    std::size_t f = static_cast<std::size_t>(wrap(p[0], nt));
    for (int i = 0; i < d; ++i) f = f * static_cast<std::size_t>(nx) + static_cast<std::size_t>(wrap(p[static_cast<std::size_t>(i + 1)], nx));
    return f;
  }
  std::vector<int> unflat(std::size_t f) const {
    std::vector<int> p(static_cast<std::size_t>(d + 1));
    for (int i = d; i >= 1; --i) {
      p[static_cast<std::size_t>(i)] = static_cast<int>(f % static_cast<std::size_t>(nx));
      f /= static_cast<std::size_t>(nx);
    }
    p[0] = static_cast<int>(f);
    return p;
  }
  static int wrap(int i, int n) { return ((i % n) + n) % n; }
  /// Spatial coordinate of index i along an axis, in [0, period_x).
  double xcoord(int i) const { return wrap(i, nx) * dx(); }
  double tcoord(int i) const { return wrap(i, nt) * dt(); }

  bool operator==(const TorusGrid& o) const {
    return d == o.d && nx == o.nx && nt == o.nt && period_x == o.period_x && period_t == o.period_t;
  }
};

/// r2c/c2r transforms of rank d+1 with cached wave numbers. Plans are built
/// once under a global lock; execution uses the new-array interface and is
/// thread-safe.
class Spectral {
 public:
  explicit Spectral(const TorusGrid& g) : grid_(g) {
    g.validate();
    dims_.push_back(g.nt);
    for (int i = 0; i < g.d; ++i) dims_.push_back(g.nx);
    nspec_ = g.size() / static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.nx / 2 + 1);
    {
      std::lock_guard<std::mutex> lk(plan_mutex());
      std::vector<double> r(g.size());
      fftw_complex* c = fftw_alloc_complex(nspec_);
      const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
      fwd_ = fftw_plan_dft_r2c(static_cast<int>(dims_.size()), dims_.data(), r.data(), c, flags);
      bwd_ = fftw_plan_dft_c2r(static_cast<int>(dims_.size()), dims_.data(), c, r.data(), flags);
      fftw_free(c);
    }
    if (!fwd_ || !bwd_) throw std::runtime_error("FFTW plan creation failed");
    build_wavenumbers();
  }
  ~Spectral() {
    std::lock_guard<std::mutex> lk(plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  const TorusGrid& grid() const { return grid_; }
  std::size_t nspec() const { return nspec_; }

  /// Unnormalized forward transform.
  void forward(const double* in, cplx* out) const {
    fftw_execute_dft_r2c(fwd_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }
  std::vector<cplx> forward(const Field& f) const {
    std::vector<cplx> s(nspec_);
    forward(f.data(), s.data());
    return s;
  }
  /// Inverse transform including the 1/N factor; the input is preserved.
  void backward(const cplx* in, double* out) const {
    std::vector<cplx> tmp(in, in + nspec_);
    fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(tmp.data()), out);
    const double s = 1.0 / static_cast<double>(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) out[i] *= s;
  }
  Field backward(const std::vector<cplx>& s) const {
    Field f(grid_.size());
    backward(s.data(), f.data());
    return f;
  }

  /// Angular frequencies per spectral slot.
  const std::vector<double>& omega() const { return omega_; }
  const std::vector<double>& ksq() const { return ksq_; }
  const std::vector<double>& k(int axis) const { return k_[static_cast<std::size_t>(axis)]; }
  /// True where an odd derivative along `axis` must vanish (Nyquist plane).
  bool nyquist(int axis, std::size_t s) const { return nyq_[static_cast<std::size_t>(axis)][s] != 0; }
  /// True for slots whose time index is the Nyquist frequency.
  bool nyquist_t(std::size_t s) const { return nyqt_[s] != 0; }

 private:
  static std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
  }
  void build_wavenumbers() {
    const auto& g = grid_;
    const double tw = 2 * std::numbers::pi / g.period_t, xw = 2 * std::numbers::pi / g.period_x;
    omega_.assign(nspec_, 0.0);
    ksq_.assign(nspec_, 0.0);
    nyqt_.assign(nspec_, 0);
    k_.assign(static_cast<std::size_t>(g.d), std::vector<double>(nspec_, 0.0));
    nyq_.assign(static_cast<std::size_t>(g.d), std::vector<char>(nspec_, 0));
    const int half = g.nx / 2 + 1;
    for (std::size_t s = 0; s < nspec_; ++s) {
      std::size_t r = s;
      std::vector<int> idx(static_cast<std::size_t>(g.d + 1));
      idx[static_cast<std::size_t>(g.d)] = static_cast<int>(r % static_cast<std::size_t>(half));
      r /= static_cast<std::size_t>(half);
      for (int a = g.d - 1; a >= 1; --a) {
        idx[static_cast<std::size_t>(a)] = static_cast<int>(r % static_cast<std::size_t>(g.nx));
        r /= static_cast<std::size_t>(g.nx);
      }
      idx[0] = static_cast<int>(r);
      const int it = idx[0];
      const int ft = it <= g.nt / 2 ? it : it - g.nt;
      omega_[s] = tw * ft;
      nyqt_[s] = it == g.nt / 2;
      double k2 = 0.0;
      for (int a = 0; a < g.d; ++a) {
        const int i = idx[static_cast<std::size_t>(a + 1)];
        const int fk = i <= g.nx / 2 ? i : i - g.nx;
        const double kk = xw * fk;
        k_[static_cast<std::size_t>(a)][s] = kk;
        nyq_[static_cast<std::size_t>(a)][s] = i == g.nx / 2;
        k2 += kk * kk;
      }
      ksq_[s] = k2;
    }
  }

  TorusGrid grid_;
  std::vector<int> dims_;
  std::size_t nspec_ = 0;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
  std::vector<double> omega_, ksq_;
  std::vector<std::vector<double>> k_;
  std::vector<std::vector<char>> nyq_;
  std::vector<char> nyqt_;
};

/// Shared transform object per grid.
inline std::shared_ptr<const Spectral> spectral_for(const TorusGrid& g) {
  static std::mutex m;
  static std::map<std::array<double, 5>, std::weak_ptr<const Spectral>> cache;
  std::lock_guard<std::mutex> lk(m);
  std::array<double, 5> key{double(g.d), double(g.nx), double(g.nt), g.period_x, g.period_t};
  if (auto sp = cache[key].lock()) return sp;
  auto sp = std::make_shared<const Spectral>(g);
  cache[key] = sp;
  return sp;
}

/// Applies a Fourier multiplier m(slot) to a real field.
template <class M>
Field apply_multiplier(const Spectral& sp, const Field& f, M&& m) {
  auto s = sp.forward(f);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] *= m(i);
  return sp.backward(s);
}

inline Field laplacian(const Spectral& sp, const Field& f) {
  return apply_multiplier(sp, f, [&](std::size_t i) { return cplx(-sp.ksq()[i], 0.0); });
}

inline Field gradient(const Spectral& sp, const Field& f, int axis) {
  return apply_multiplier(sp, f, [&](std::size_t i) {
    return sp.nyquist(axis, i) ? cplx(0, 0) : cplx(0.0, sp.k(axis)[i]);
  });
}

inline Field time_derivative(const Spectral& sp, const Field& f) {
  return apply_multiplier(sp, f, [&](std::size_t i) {
    return sp.nyquist_t(i) ? cplx(0, 0) : cplx(0.0, sp.omega()[i]);
  });
}

inline double field_mean(const Field& f) { return pairwise_sum(f) / static_cast<double>(f.size()); }

inline double field_max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

/// Taylor coefficients in a0 of a space-time field: c[m](y) multiplies (a0 - center)^m.
struct JetField {
  double center = 1.0;
  std::vector<Field> c;
  int stale = 0;

  JetField() = default;
  JetField(double center_, int order, std::size_t n)
      : center(center_), c(static_cast<std::size_t>(order) + 1, Field(n, 0.0)) {}

  int order() const { return static_cast<int>(c.size()) - 1; }
  std::size_t npts() const { return c.empty() ? 0 : c[0].size(); }
  bool empty() const { return c.empty(); }

  AJet at(std::size_t p) const {
    AJet j(center, order());
    for (std::size_t m = 0; m < c.size(); ++m) j.c[m] = c[m][p];
    j.stale = stale;
    return j;
  }

  JetField& operator+=(const JetField& o) {
    check(o);
    for (std::size_t m = 0; m < c.size(); ++m)
      for (std::size_t p = 0; p < c[m].size(); ++p) c[m][p] += o.c[m][p];
    stale = std::max(stale, o.stale);
    return *this;
  }
  JetField& operator-=(const JetField& o) {
    check(o);
    for (std::size_t m = 0; m < c.size(); ++m)
      for (std::size_t p = 0; p < c[m].size(); ++p) c[m][p] -= o.c[m][p];
    stale = std::max(stale, o.stale);
    return *this;
  }
  JetField& operator*=(double s) {
    for (auto& f : c)
      for (auto& v : f) v *= s;
    return *this;
  }
  /// Adds a constant-in-space jet.
  void add_constant(const AJet& a) {
    for (std::size_t m = 0; m < c.size(); ++m)
      for (auto& v : c[m]) v += a.c[m];
    stale = std::max(stale, a.stale);
  }
  void check(const JetField& o) const {
    if (o.c.size() != c.size() || o.center != center || o.npts() != npts())
      throw std::invalid_argument("jet field shape mismatch");
  }
};

/// Pointwise truncated Cauchy product, r += s * a * b.
inline void jet_field_fma(JetField& r, const JetField& a, const JetField& b, double s = 1.0) {
  r.check(a);
  r.check(b);
  const int J = r.order();
  const std::size_t n = r.npts();
  parallel_blocks(n, 1 << 14, [&](std::size_t lo, std::size_t hi) {
    for (int i = 0; i <= J; ++i)
      for (int j = 0; i + j <= J; ++j) {
        const double* pa = a.c[static_cast<std::size_t>(i)].data();
        const double* pb = b.c[static_cast<std::size_t>(j)].data();
        double* pr = r.c[static_cast<std::size_t>(i + j)].data();
        for (std::size_t p = lo; p < hi; ++p) pr[p] += s * pa[p] * pb[p];
      }
  });
  r.stale = std::max({r.stale, a.stale, b.stale});
}

inline JetField jet_field_mul(const JetField& a, const JetField& b) {
  JetField r(a.center, a.order(), a.npts());
  jet_field_fma(r, a, b);
  return r;
}

/// Product with a spatially constant jet, r += a * k.
inline void jet_field_axpy(JetField& r, const JetField& a, const AJet& k) {
  r.check(a);
  const int J = r.order();
  for (int i = 0; i <= J; ++i)
    for (int j = 0; i + j <= J; ++j) {
      const double kv = k.c[static_cast<std::size_t>(j)];
      if (kv == 0.0) continue;
      auto& pr = r.c[static_cast<std::size_t>(i + j)];
      const auto& pa = a.c[static_cast<std::size_t>(i)];
      for (std::size_t p = 0; p < pr.size(); ++p) pr[p] += kv * pa[p];
    }
  r.stale = std::max({r.stale, a.stale, k.stale});
}

inline JetField jet_field_map(const Spectral& sp, const JetField& a, Field (*op)(const Spectral&, const Field&)) {
  JetField r = a;
  parallel_for(a.c.size(), [&](std::size_t m) { r.c[m] = op(sp, a.c[m]); });
  return r;
}

}  // namespace mrs
