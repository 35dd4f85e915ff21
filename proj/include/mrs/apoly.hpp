#pragma once
// Truncated Taylor jets in the ellipticity parameter a0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "index.hpp"

namespace mrs {

/// Jet order J = ceil(2/alpha) + 1.
inline int jet_order(Rational alpha) {
  auto c = (2 * alpha.q + alpha.p - 1) / alpha.p;
  return static_cast<int>(c) + 1;
}

/// Taylor coefficients of tau(a0) at `center`: tau(center + h) = sum_m c[m] h^m.
/// `stale` counts trailing coefficients invalidated by differentiation.
struct AJet {
  double center = 1.0;
  std::vector<double> c;
  int stale = 0;

  AJet() = default;
  AJet(double center_, int order) : center(center_), c(static_cast<std::size_t>(order) + 1, 0.0) {}
  static AJet constant(double center, int order, double v) {
    AJet j(center, order);
    j.c[0] = v;
    return j;
  }
  /// The jet of a0 itself.
  static AJet identity(double center, int order) {
    AJet j(center, order);
    j.c[0] = center;
    if (order >= 1) j.c[1] = 1.0;
    return j;
  }

  int order() const { return static_cast<int>(c.size()) - 1; }
  /// Number of trustworthy leading coefficients.
  int valid() const { return std::max(0, static_cast<int>(c.size()) - stale); }
  bool is_zero() const {
    return std::all_of(c.begin(), c.end(), [](double v) { return v == 0.0; });
  }

  AJet& operator+=(const AJet& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.c[i];
    stale = std::max(stale, o.stale);
    return *this;
  }
  AJet& operator-=(const AJet& o) {
    check_compatible(o);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= o.c[i];
    stale = std::max(stale, o.stale);
    return *this;
  }
  AJet& operator*=(double s) {
    for (auto& v : c) v *= s;
    return *this;
  }
  friend AJet operator+(AJet a, const AJet& b) { return a += b; }
  friend AJet operator-(AJet a, const AJet& b) { return a -= b; }
  friend AJet operator*(AJet a, double s) { return a *= s; }
  friend AJet operator*(double s, AJet a) { return a *= s; }

  void check_compatible(const AJet& o) const {
    if (o.center != center || o.c.size() != c.size())
      throw std::invalid_argument("jet center/order mismatch");
  }
};

/// Cauchy product truncated at the common order.
inline AJet jet_mul(const AJet& a, const AJet& b) {
  a.check_compatible(b);
  AJet r(a.center, a.order());
  const int J = a.order();
  for (int i = 0; i <= J; ++i) {
    if (a.c[static_cast<std::size_t>(i)] == 0.0) continue;
    for (int j = 0; i + j <= J; ++j)
      r.c[static_cast<std::size_t>(i + j)] += a.c[static_cast<std::size_t>(i)] * b.c[static_cast<std::size_t>(j)];
  }
  r.stale = std::max(a.stale, b.stale);
  return r;
}

/// Multiplication by a0 (exact through order J).
inline AJet jet_mul_a0(const AJet& a) {
  AJet r(a.center, a.order());
  for (int i = 0; i <= a.order(); ++i) {
    r.c[static_cast<std::size_t>(i)] = a.center * a.c[static_cast<std::size_t>(i)];
    if (i > 0) r.c[static_cast<std::size_t>(i)] += a.c[static_cast<std::size_t>(i - 1)];
  }
  r.stale = a.stale;
  return r;
}

/// d/da0: (c0, c1, c2, ...) -> (c1, 2 c2, ..., 0). Refuses once `budget`
/// coefficients have been invalidated (default: the order).
inline AJet jet_ddiff(const AJet& a, int budget = -1) {
  if (a.order() < 1) throw std::invalid_argument("jet_ddiff on an order-0 jet");
  if (budget < 0) budget = a.order();
  if (a.stale >= budget)
    throw std::runtime_error("jet derivative budget exhausted (stale=" + std::to_string(a.stale) + ")");
  AJet r(a.center, a.order());
  for (int i = 0; i < a.order(); ++i)
    r.c[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) * a.c[static_cast<std::size_t>(i + 1)];
  r.stale = a.stale + 1;
  return r;
}

inline double jet_eval_unchecked(const AJet& a, double a0) {
  const double h = a0 - a.center;
  double v = 0.0;
  for (int i = a.order(); i >= 0; --i) v = v * h + a.c[static_cast<std::size_t>(i)];
  return v;
}

/// Horner evaluation; a0 must lie within `halfwidth` of the center.
inline double jet_eval(const AJet& a, double a0, double halfwidth) {
  if (!(std::abs(a0 - a.center) <= halfwidth))
    throw std::out_of_range("a0 = " + std::to_string(a0) + " outside jet window around " +
                            std::to_string(a.center));
  return jet_eval_unchecked(a, a0);
}

/// Max coefficient distance over slots that are valid in both jets.
inline double jet_distance(const AJet& a, const AJet& b) {
  a.check_compatible(b);
  int n = std::min(a.valid(), b.valid());
  double m = 0.0;
  for (int i = 0; i < n; ++i) m = std::max(m, std::abs(a.c[static_cast<std::size_t>(i)] - b.c[static_cast<std::size_t>(i)]));
  return m;
}

/// Re-expands the truncated polynomial at a new center (exact for the
/// polynomial itself).
inline AJet jet_recenter(const AJet& a, double new_center) {
  const int J = a.order();
  AJet r = a;
  r.center = new_center;
  const double s = new_center - a.center;
  // Taylor shift by repeated synthetic division
  for (int i = 0; i < J; ++i)
    for (int k = J - 1; k >= i; --k) r.c[static_cast<std::size_t>(k)] += s * r.c[static_cast<std::size_t>(k + 1)];
  return r;
}

/// Nested evaluation intervals: level m uses
/// [center - halfwidth*pad(m), center + halfwidth*pad(m)] clipped to [Lambda, 1/Lambda],
/// sampled at `npts` equispaced points. pad(m) = ratio^m, strictly decreasing.
struct EllipticityWindow {
  double lambda = 0.5;
  double center = 1.0;
  double halfwidth = 0.25;
  int npts = 3;
  double ratio = 0.5;

  double pad(int m) const { return std::pow(ratio, std::max(0, m)); }
  std::vector<double> centers(int level) const {
    const double w = halfwidth * pad(level);
    const double lo = std::max(lambda, center - w), hi = std::min(1.0 / lambda, center + w);
    std::vector<double> pts;
    if (npts <= 1 || hi <= lo) { pts.push_back(std::clamp(center, lambda, 1.0 / lambda)); return pts; }
    for (int i = 0; i < npts; ++i) pts.push_back(lo + (hi - lo) * i / (npts - 1));
    return pts;
  }
  void validate() const {
    if (!(lambda > 0 && lambda < 1)) throw std::invalid_argument("Lambda must lie in (0,1)");
    if (center < lambda || center > 1.0 / lambda) throw std::invalid_argument("jet center outside [Lambda, 1/Lambda]");
    if (!(ratio > 0 && ratio < 1)) throw std::invalid_argument("pad ratio must lie in (0,1)");
    if (!(halfwidth > 0)) throw std::invalid_argument("window halfwidth must be positive");
  }
};

}  // namespace mrs
