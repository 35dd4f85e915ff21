#pragma once
// Multi-indices, exact homogeneities and the populated index set.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrs {

struct Rational {
  std::int64_t p = 0;
  std::int64_t q = 1;

  Rational() = default;
  Rational(std::int64_t p_, std::int64_t q_) : p(p_), q(q_) {
    if (q == 0) throw std::invalid_argument("rational with zero denominator");
    if (q < 0) { p = -p; q = -q; }
    auto g = std::gcd(p < 0 ? -p : p, q);
    if (g > 1) { p /= g; q /= g; }
  }
  double value() const { return static_cast<double>(p) / static_cast<double>(q); }
  bool operator==(const Rational&) const = default;

  /// Parses "p/q" or an integer.
  static Rational parse(const std::string& s) {
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Rational(std::stoll(s), 1);
      return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed rational '" + s + "'");
    }
  }
  std::string str() const { return std::to_string(p) + "/" + std::to_string(q); }
};

/// Exact homogeneity m + n*alpha.
struct Homogeneity {
  std::int64_t m = 0;  // |beta_x|
  std::int64_t n = 0;  // angle
  Rational alpha{1, 3};

  /// Scaled integer value (m*q + n*p), order-equivalent to m + n*alpha.
  std::int64_t scaled() const { return m * alpha.q + n * alpha.p; }
  double value() const { return static_cast<double>(m) + static_cast<double>(n) * alpha.value(); }

  bool operator==(const Homogeneity& o) const { return m == o.m && n == o.n; }
  std::strong_ordering operator<=>(const Homogeneity& o) const {
    if (auto c = scaled() <=> o.scaled(); c != 0) return c;
    if (auto c = m <=> o.m; c != 0) return c;
    return n <=> o.n;
  }
  Homogeneity operator+(const Homogeneity& o) const { return {m + o.m, n + o.n, alpha}; }
  Homogeneity operator-(const Homogeneity& o) const { return {m - o.m, n - o.n, alpha}; }
  std::string str() const {
    std::ostringstream os;
    os << m << (n >= 0 ? "+" : "") << n << "*" << alpha.str();
    return os.str();
  }
};

struct MultiIndex {
  std::vector<int> beta_x;            // length d
  std::map<int, int> beta_prime;      // k >= 1 -> count, no zero entries

  MultiIndex() = default;
  explicit MultiIndex(int d) : beta_x(static_cast<std::size_t>(d), 0) {}
  MultiIndex(std::vector<int> bx, std::map<int, int> bp) : beta_x(std::move(bx)), beta_prime(std::move(bp)) {
    normalize();
  }

  int dim() const { return static_cast<int>(beta_x.size()); }
  int abs_x() const { return std::accumulate(beta_x.begin(), beta_x.end(), 0); }
  bool is_zero() const { return abs_x() == 0 && beta_prime.empty(); }
  /// Purely polynomial: beta' = 0.
  bool is_polynomial() const { return beta_prime.empty() && abs_x() > 0; }
  /// Polynomial with |beta_x| >= 2: component identically zero.
  bool is_dormant() const { return beta_prime.empty() && abs_x() >= 2; }
  int prime(int k) const {
    auto it = beta_prime.find(k);
    return it == beta_prime.end() ? 0 : it->second;
  }

  void normalize() {
    for (auto it = beta_prime.begin(); it != beta_prime.end();) {
      if (it->first < 1 || it->second < 0) throw std::invalid_argument("invalid beta' entry");
      if (it->second == 0) it = beta_prime.erase(it); else ++it;
    }
  }

  MultiIndex operator+(const MultiIndex& o) const {
    if (o.dim() != dim()) throw std::invalid_argument("multi-index dimension mismatch");
    MultiIndex r = *this;
    for (std::size_t i = 0; i < beta_x.size(); ++i) r.beta_x[i] += o.beta_x[i];
    for (auto [k, c] : o.beta_prime) r.beta_prime[k] += c;
    return r;
  }
  /// Componentwise o <= *this.
  bool contains(const MultiIndex& o) const {
    for (std::size_t i = 0; i < beta_x.size(); ++i)
      if (o.beta_x[i] > beta_x[i]) return false;
    for (auto [k, c] : o.beta_prime)
      if (prime(k) < c) return false;
    return true;
  }
  /// *this - o; requires contains(o).
  MultiIndex operator-(const MultiIndex& o) const {
    if (!contains(o)) throw std::invalid_argument("multi-index subtraction underflow");
    MultiIndex r = *this;
    for (std::size_t i = 0; i < beta_x.size(); ++i) r.beta_x[i] -= o.beta_x[i];
    for (auto [k, c] : o.beta_prime) r.beta_prime[k] -= c;
    r.normalize();
    return r;
  }

  static MultiIndex unit_x(int d, int i) {
    MultiIndex r(d);
    r.beta_x.at(static_cast<std::size_t>(i)) = 1;
    return r;
  }
  static MultiIndex unit_prime(int d, int k, int count = 1) {
    MultiIndex r(d);
    if (count > 0) r.beta_prime[k] = count;
    return r;
  }

  bool operator==(const MultiIndex&) const = default;
  /// Storage order (not the graded order): beta_x, then beta'.
  bool operator<(const MultiIndex& o) const {
    if (beta_x != o.beta_x) return beta_x < o.beta_x;
    return beta_prime < o.beta_prime;
  }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < beta_x.size(); ++i) os << (i ? "," : "") << beta_x[i];
    os << ";";
    bool first = true;
    for (auto [k, c] : beta_prime) { os << (first ? "" : ",") << k << ":" << c; first = false; }
    os << ")";
    return os.str();
  }
};

inline int scaled_norm(const std::map<int, int>& beta_prime) {
  int s = 0;
  for (auto [k, c] : beta_prime) s += k * c;
  return s;
}

inline int angle(const MultiIndex& b) { return 1 + scaled_norm(b.beta_prime) - b.abs_x(); }

inline Homogeneity homogeneity(const MultiIndex& b, Rational alpha) {
  return {b.abs_x(), angle(b), alpha};
}

/// Returns (|b1|+|b2|, <b1>+<b2>); throws if the additivity identity fails.
inline std::pair<Homogeneity, int> additivity_check(const MultiIndex& b1, const MultiIndex& b2, Rational alpha) {
  auto h = homogeneity(b1, alpha) + homogeneity(b2, alpha);
  int a = angle(b1) + angle(b2);
  auto s = b1 + b2;
  auto hs = homogeneity(s, alpha) + Homogeneity{0, 1, alpha};
  if (!(h == hs) || a != angle(s) + 1)
    throw std::logic_error("homogeneity additivity violated for " + b1.str() + " + " + b2.str());
  return {h, a};
}

struct CriticalIntegers {
  int n = 0;        // n*alpha < 2 < (n+1)*alpha
  int n_prime = 0;  // n'*alpha < 1 < (n'+1)*alpha
  Homogeneity alpha_prime;
};

inline CriticalIntegers critical_integers(Rational alpha) {
  if (alpha.p <= 0 || alpha.p >= alpha.q) throw std::invalid_argument("alpha must lie in (0,1)");
  if ((2 * alpha.q) % alpha.p == 0)
    throw std::invalid_argument("alpha = " + alpha.str() + " is resonant: m*alpha = 2 for m = " +
                                std::to_string(2 * alpha.q / alpha.p));
  if (alpha.q % alpha.p == 0)
    throw std::invalid_argument("alpha = " + alpha.str() + " is resonant: m*alpha = 1 for m = " +
                                std::to_string(alpha.q / alpha.p));
  CriticalIntegers c;
  c.n = static_cast<int>((2 * alpha.q) / alpha.p);
  c.n_prime = static_cast<int>(alpha.q / alpha.p);
  c.alpha_prime = Homogeneity{0, c.n_prime + 1, alpha};
  return c;
}

/// Graded-lexicographic order: (homogeneity, |beta_x|, beta_x, beta').
struct GradedLess {
  Rational alpha;
  bool operator()(const MultiIndex& a, const MultiIndex& b) const {
    auto ha = homogeneity(a, alpha), hb = homogeneity(b, alpha);
    if (ha != hb) return ha < hb;
    if (a.abs_x() != b.abs_x()) return a.abs_x() < b.abs_x();
    return a < b;
  }
};

struct IndexEntry {
  MultiIndex beta;
  Homogeneity hom;
  bool dormant = false;
};

struct IndexSet {
  std::vector<IndexEntry> entries;
  Homogeneity cutoff;
  Rational alpha{1, 3};
  int d = 1;

  std::size_t size() const { return entries.size(); }
  bool contains(const MultiIndex& b) const {
    return std::any_of(entries.begin(), entries.end(), [&](const IndexEntry& e) { return e.beta == b; });
  }
  /// Entries strictly below a (lower) cutoff.
  IndexSet below(Homogeneity c) const {
    IndexSet r = *this;
    r.cutoff = c;
    std::erase_if(r.entries, [&](const IndexEntry& e) { return !(e.hom < c); });
    return r;
  }
  /// Distinct homogeneities present, ascending.
  std::vector<Homogeneity> homogeneities() const {
    std::vector<Homogeneity> h;
    for (auto& e : entries)
      if (h.empty() || !(h.back() == e.hom)) h.push_back(e.hom);
    return h;
  }
};

namespace detail {

// All multisets of size `size` drawn from pool (sorted by homogeneity), whose
// sum with `base` stays below cutoff; calls f(sum, parts).
inline void for_each_multiset(const std::vector<MultiIndex>& pool, const std::vector<Homogeneity>& homs,
                              std::size_t size, const MultiIndex& base, const Homogeneity& cutoff,
                              Rational alpha, const std::function<void(const MultiIndex&)>& f,
                              std::size_t start = 0) {
  if (size == 0) { f(base); return; }
  for (std::size_t i = start; i < pool.size(); ++i) {
    auto s = base + pool[i];
    // adding further factors never lowers the homogeneity
    if (!(homogeneity(s, alpha) < cutoff)) break;
    for_each_multiset(pool, homs, size - 1, s, cutoff, alpha, f, i);
  }
}

// Support of (D^(0))^k applied to a monomial with key gamma.
inline std::set<MultiIndex> d0_support(const MultiIndex& gamma, int k) {
  std::set<MultiIndex> cur{gamma};
  for (int s = 0; s < k; ++s) {
    std::set<MultiIndex> next;
    for (auto& g : cur) {
      auto a = g;
      a.beta_prime[1] += 1;  // z_1 d/da0
      next.insert(a);
      for (auto [j, c] : g.beta_prime) {
        auto b = g;
        b.beta_prime[j] -= 1;
        b.beta_prime[j + 1] += 1;
        b.normalize();
        next.insert(b);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace detail

/// Least fixed point of the population rules below cutoff. With
/// include_dormant, polynomial indices with |beta_x| >= 2 are appended and
/// flagged. Throws if the set grows past max_size.
inline IndexSet enumerate_populated(Rational alpha, int d, Homogeneity cutoff, bool include_dormant = false,
                                    std::size_t max_size = 100000) {
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  cutoff.alpha = alpha;
  auto crit = critical_integers(alpha);
  const Homogeneity two{2, 0, alpha};
  if (cutoff > two + Homogeneity{0, 1, alpha}) throw std::invalid_argument("cutoff exceeds 2+alpha");

  GradedLess less{alpha};
  std::set<MultiIndex, GradedLess> pop(less);
  auto add = [&](const MultiIndex& b) {
    if (homogeneity(b, alpha) < cutoff && pop.insert(b).second) {
      if (pop.size() > max_size) throw std::runtime_error("populated index set exceeds size bound");
      return true;
    }
    return false;
  };
  add(MultiIndex(d));
  for (int i = 0; i < d; ++i) add(MultiIndex::unit_x(d, i));

  bool grew = true;
  while (grew) {
    grew = false;
    std::vector<MultiIndex> pool(pop.begin(), pop.end());
    std::vector<Homogeneity> homs;
    for (auto& b : pool) homs.push_back(homogeneity(b, alpha));
    std::vector<MultiIndex> nonpoly;
    std::vector<Homogeneity> nonpoly_h;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!pool[i].is_polynomial()) { nonpoly.push_back(pool[i]); nonpoly_h.push_back(homs[i]); }

    std::vector<MultiIndex> fresh;
    // z_k Pi^k Delta Pi: beta = e_k' + beta_1 + ... + beta_{k+1}, Delta kills the affine sector
    for (int k = 1;; ++k) {
      auto ek = MultiIndex::unit_prime(d, k);
      if (!(homogeneity(ek, alpha) < cutoff)) break;
      for (auto& last : nonpoly) {
        auto base = ek + last;
        if (!(homogeneity(base, alpha) < cutoff)) continue;
        detail::for_each_multiset(pool, homs, static_cast<std::size_t>(k), base, cutoff, alpha,
                                  [&](const MultiIndex& b) { fresh.push_back(b); });
      }
    }
    // Pi^k (D^(0))^k q with q supported on populated (0, beta'), |beta'|_s <= n-1
    for (auto& g : pool) {
      if (g.abs_x() != 0 || scaled_norm(g.beta_prime) > crit.n - 1) continue;
      for (int k = 1;; ++k) {
        bool any = false;
        for (auto& s : detail::d0_support(g, k)) {
          if (!(homogeneity(s, alpha) < cutoff)) continue;
          any = true;
          detail::for_each_multiset(pool, homs, static_cast<std::size_t>(k), s, cutoff, alpha,
                                    [&](const MultiIndex& b) { fresh.push_back(b); });
        }
        if (!any) break;
      }
    }
    for (auto& b : fresh) grew |= add(b);
  }

  // distinct (m, n) pairs in range must not collide in value
  {
    std::map<std::int64_t, Homogeneity> seen;
    for (auto& b : pop) {
      auto h = homogeneity(b, alpha);
      auto [it, ok] = seen.emplace(h.scaled(), h);
      if (!ok && !(it->second == h))
        throw std::invalid_argument("homogeneities " + it->second.str() + " and " + h.str() +
                                    " collide for alpha = " + alpha.str());
    }
  }

  // dormant polynomial indices (zero components; exempt from the collision check)
  std::vector<int> bx(static_cast<std::size_t>(d), 0);
  std::function<void(int, int)> poly = [&](int axis, int left) {
    if (axis == d) {
      MultiIndex b(bx, {});
      if (b.abs_x() >= 2) add(b);
      return;
    }
    for (int c = 0; c <= left; ++c) { bx[static_cast<std::size_t>(axis)] = c; poly(axis + 1, left - c); }
    bx[static_cast<std::size_t>(axis)] = 0;
  };
  int max_x = 0;
  while (homogeneity(MultiIndex(std::vector<int>{max_x + 1}, {}), alpha) < cutoff) ++max_x;
  if (include_dormant) poly(0, max_x);

  IndexSet out;
  out.alpha = alpha;
  out.d = d;
  out.cutoff = cutoff;
  for (auto& b : pop) out.entries.push_back({b, homogeneity(b, alpha), b.is_dormant()});
  return out;
}

// Line format: "m n | b_1 ... b_d | k:c,k:c" with "-" for an empty beta'.
inline void write_index_set(std::ostream& os, const IndexSet& s) {
  os << "# index-set alpha " << s.alpha.str() << " d " << s.d << " cutoff " << s.cutoff.m << " "
     << s.cutoff.n << " size " << s.size() << "\n";
  for (auto& e : s.entries) {
    os << e.hom.m << " " << e.hom.n << " |";
    for (int v : e.beta.beta_x) os << " " << v;
    os << " | ";
    if (e.beta.beta_prime.empty()) os << "-";
    bool first = true;
    for (auto [k, c] : e.beta.beta_prime) { os << (first ? "" : ",") << k << ":" << c; first = false; }
    os << "\n";
  }
}

inline IndexSet read_index_set(std::istream& is) {
  IndexSet s;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty index-set stream");
  {
    std::istringstream hs(line);
    std::string hash, tag, key, alpha;
    std::size_t size = 0;
    hs >> hash >> tag >> key >> alpha;
    if (hash != "#" || tag != "index-set" || key != "alpha") throw std::runtime_error("bad index-set header");
    s.alpha = Rational::parse(alpha);
    hs >> key >> s.d >> key >> s.cutoff.m >> s.cutoff.n >> key >> size;
    if (!hs) throw std::runtime_error("bad index-set header");
    s.cutoff.alpha = s.alpha;
  }
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto p1 = line.find('|'), p2 = line.find('|', p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos) throw std::runtime_error("bad index-set line: " + line);
    std::istringstream a(line.substr(0, p1)), b(line.substr(p1 + 1, p2 - p1 - 1));
    std::string c = line.substr(p2 + 1);
    IndexEntry e;
    a >> e.hom.m >> e.hom.n;
    e.hom.alpha = s.alpha;
    e.beta.beta_x.resize(static_cast<std::size_t>(s.d));
    for (auto& v : e.beta.beta_x) b >> v;
    std::erase(c, ' ');
    if (c != "-") {
      std::istringstream cs(c);
      std::string item;
      while (std::getline(cs, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw std::runtime_error("bad beta' item: " + item);
        e.beta.beta_prime[std::stoi(item.substr(0, colon))] = std::stoi(item.substr(colon + 1));
      }
    }
    e.beta.normalize();
    if (!(homogeneity(e.beta, s.alpha) == e.hom)) throw std::runtime_error("homogeneity mismatch: " + line);
    e.dormant = e.beta.is_dormant();
    s.entries.push_back(std::move(e));
  }
  return s;
}

}  // namespace mrs
