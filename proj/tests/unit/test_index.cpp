#include "doctest.h"
#include "oracle/index_oracle.hpp"

#include <mrs/index.hpp>

#include <fstream>
#include <random>
#include <sstream>

using namespace mrs;

namespace {

MultiIndex mi(std::vector<int> x, std::map<int, int> p) { return MultiIndex(std::move(x), std::move(p)); }

Homogeneity H(std::int64_t m, std::int64_t n, Rational a) { return {m, n, a}; }

}  // namespace

TEST_CASE("scaled norm") {
  CHECK(scaled_norm({}) == 0);
  CHECK(scaled_norm({{1, 1}}) == 1);
  CHECK(scaled_norm({{1, 2}, {3, 1}}) == 5);
}

TEST_CASE("angle") {
  CHECK(angle(mi({0}, {})) == 1);
  CHECK(angle(mi({1}, {})) == 0);
  CHECK(angle(mi({1}, {{1, 1}})) == 1);
  CHECK(angle(mi({3}, {})) == -2);
}

TEST_CASE("homogeneity") {
  Rational a(3, 4);
  CHECK(homogeneity(mi({0}, {}), a).value() == doctest::Approx(0.75));
  CHECK(homogeneity(mi({1}, {}), a) == H(1, 0, a));
  CHECK(homogeneity(mi({1}, {}), Rational(9, 20)).value() == 1.0);
  CHECK(homogeneity(mi({1}, {{1, 1}}), a).value() == doctest::Approx(1.75));
}

TEST_CASE("additivity") {
  Rational a(3, 4);
  auto [h, s] = additivity_check(mi({0}, {}), mi({0}, {}), a);
  CHECK(s == 2);
  CHECK(angle(mi({0}, {})) + 1 == 2);
  auto [h2, s2] = additivity_check(mi({1}, {}), mi({0}, {{1, 1}}), a);
  CHECK(h2 == homogeneity(mi({1}, {{1, 1}}), a) + H(0, 1, a));
  (void)h;
  (void)s2;
}

TEST_CASE("critical integers") {
  auto c = critical_integers(Rational(3, 4));
  CHECK(c.n == 2);
  CHECK(c.n_prime == 1);
  CHECK(c.alpha_prime.value() == doctest::Approx(1.5));
  auto c2 = critical_integers(Rational(9, 20));
  CHECK(c2.n == 4);
  CHECK(c2.n_prime == 2);
  CHECK(c2.alpha_prime.value() == doctest::Approx(27.0 / 20));
  CHECK_THROWS_WITH_AS(critical_integers(Rational(1, 2)), doctest::Contains("resonant"), std::invalid_argument);
  CHECK_THROWS_AS(critical_integers(Rational(2, 3)), std::invalid_argument);  // 3*(2/3) = 2
  CHECK_THROWS_AS(critical_integers(Rational(5, 4)), std::invalid_argument);
}

TEST_CASE("enumerate alpha=3/4 d=1 cutoff 2") {
  Rational a(3, 4);
  auto s = enumerate_populated(a, 1, H(2, 0, a));
  REQUIRE(s.size() == 4);
  CHECK(s.entries[0].beta == mi({0}, {}));
  CHECK(s.entries[1].beta == mi({1}, {}));
  CHECK(s.entries[2].beta == mi({0}, {{1, 1}}));
  CHECK(s.entries[3].beta == mi({1}, {{1, 1}}));
  CHECK(s.entries[0].hom.value() == doctest::Approx(0.75));
  CHECK(s.entries[1].hom.value() == doctest::Approx(1.0));
  CHECK(s.entries[2].hom.value() == doctest::Approx(1.5));
  CHECK(s.entries[3].hom.value() == doctest::Approx(1.75));
}

TEST_CASE("cutoff alpha gives empty set") {
  Rational a(3, 4);
  CHECK(enumerate_populated(a, 1, H(0, 1, a)).size() == 0);
}

TEST_CASE("enumeration matches brute-force oracle") {
  struct Case { Rational a; int d; Homogeneity c; };
  std::vector<Case> cases = {
      {Rational(3, 4), 1, H(2, 0, Rational(3, 4))},  {Rational(3, 4), 1, H(2, 1, Rational(3, 4))},
      {Rational(9, 20), 1, H(2, 0, Rational(9, 20))}, {Rational(9, 20), 1, H(2, 1, Rational(9, 20))},
      {Rational(3, 4), 2, H(2, 1, Rational(3, 4))},  {Rational(3, 5), 1, H(2, 1, Rational(3, 5))},
  };
  for (auto& cs : cases)
    for (bool dormant : {false, true}) {
      auto s = enumerate_populated(cs.a, cs.d, cs.c, dormant);
      auto o = oracle::enumerate(cs.a.value(), cs.d, cs.c.value(), critical_integers(cs.a).n, dormant);
      std::set<MultiIndex> got;
      for (auto& e : s.entries) got.insert(e.beta);
      CAPTURE(cs.a.str());
      CAPTURE(cs.d);
      CHECK(got == o);
    }
}

TEST_CASE("alpha=9/20 cutoff 2 matches golden file") {
  Rational a(9, 20);
  auto s = enumerate_populated(a, 1, H(2, 0, a));
  std::ifstream in(std::string(MRS_TEST_DATA) + "/index_9_20_d1_cutoff2.txt");
  REQUIRE(in.good());
  auto g = read_index_set(in);
  REQUIRE(g.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(g.entries[i].beta == s.entries[i].beta);
    CHECK(g.entries[i].hom == s.entries[i].hom);
  }
}

TEST_CASE("canonical order and cutoff") {
  Rational a(9, 20);
  auto s = enumerate_populated(a, 1, H(2, 1, a));
  GradedLess less{a};
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(less(s.entries[i - 1].beta, s.entries[i].beta));
  for (auto& e : s.entries) CHECK(e.hom < s.cutoff);
}

TEST_CASE("exhaustive additivity and equal-homogeneity properties") {
  for (Rational a : {Rational(3, 4), Rational(9, 20)}) {
    auto s = enumerate_populated(a, 1, H(2, 1, a));
    for (auto& e1 : s.entries)
      for (auto& e2 : s.entries) {
        CHECK_NOTHROW(additivity_check(e1.beta, e2.beta, a));
        if (e1.hom == e2.hom) {
          CHECK(scaled_norm(e1.beta.beta_prime) - e1.beta.abs_x() ==
                scaled_norm(e2.beta.beta_prime) - e2.beta.abs_x());
          CHECK(angle(e1.beta) == angle(e2.beta));
        }
      }
  }
}

TEST_CASE("angle increments under D-type shifts") {
  // |beta| = |gamma| + (k + |a|) alpha - |a|  implies  <beta> = <gamma> + k + |a|
  for (Rational a : {Rational(3, 4), Rational(9, 20)}) {
    auto s = enumerate_populated(a, 1, H(2, 0, a));
    for (auto& g : s.entries)
      for (auto& b : s.entries)
        for (int k = 0; k <= 8; ++k)
          for (int ax = 0; ax <= 1; ++ax) {
            if (b.hom == g.hom + Homogeneity{-ax, k + ax, a}) CHECK(angle(b.beta) == angle(g.beta) + k + ax);
          }
  }
}

TEST_CASE("enumeration is monotone in cutoff and deterministic") {
  Rational a(9, 20);
  auto lo = enumerate_populated(a, 1, H(1, 1, a));
  auto hi = enumerate_populated(a, 1, H(2, 0, a));
  for (auto& e : lo.entries) CHECK(hi.contains(e.beta));
  auto again = enumerate_populated(a, 1, H(2, 0, a));
  std::ostringstream s1, s2;
  write_index_set(s1, hi);
  write_index_set(s2, again);
  CHECK(s1.str() == s2.str());
}

TEST_CASE("text format round trip") {
  Rational a(3, 4);
  auto s = enumerate_populated(a, 2, H(2, 1, a), true);
  std::stringstream ss;
  write_index_set(ss, s);
  auto r = read_index_set(ss);
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(r.entries[i].beta == s.entries[i].beta);
    CHECK(r.entries[i].dormant == s.entries[i].dormant);
  }
}

TEST_CASE("dormant polynomials are flagged") {
  Rational a(9, 20);
  CHECK_FALSE(enumerate_populated(a, 1, H(2, 0, a)).contains(mi({2}, {})));
  auto s = enumerate_populated(a, 1, H(2, 0, a), true);
  bool found = false;
  for (auto& e : s.entries)
    if (e.beta == mi({2}, {})) { found = true; CHECK(e.dormant); }
  CHECK(found);
}
