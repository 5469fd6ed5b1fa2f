#include "catch2/catch_amalgamated.hpp"

#include <random>

#include "pph/littlewood_paley.hpp"
#include "pph/maximal.hpp"

using namespace pph;

namespace {

SampledField random_field(const TorusGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SampledField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

// Cube sum by recursive halving, same association as the library's doubling.
double box_sum(const TorusGrid& g, const std::vector<double>& v, std::size_t a0, std::size_t a1, std::size_t w) {
  const std::size_t n = g.n();
  if (w == 1) return g.dim == 1 ? v[a0 % n] : v[(a0 % n) * n + a1 % n];
  std::size_t h = w / 2;
  if (g.dim == 1) return box_sum(g, v, a0, 0, h) + box_sum(g, v, a0 + h, 0, h);
  return ((box_sum(g, v, a0, a1, h) + box_sum(g, v, a0 + h, a1, h)) + box_sum(g, v, a0, a1 + h, h)) + box_sum(g, v, a0 + h, a1 + h, h);
}

// Exhaustive enumeration of every anchored dyadic cube containing each point.
std::vector<double> brute_hl(const SampledField& f, double r) {
  const auto& g = f.grid;
  const std::size_t n = g.n();
  std::vector<double> p(g.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::pow(std::abs(f.values[i]), r);
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t x = 0; x < g.size(); ++x) {
    auto ax = g.axes(x);
    for (std::size_t w = 1; w <= n; w *= 2) {
      double vol = g.dim == 1 ? double(w) : double(w) * double(w);
      for (std::size_t o0 = 0; o0 < w; ++o0) {
        std::size_t a0 = (ax[0] + n - o0) % n;
        if (g.dim == 1) {
          out[x] = std::max(out[x], box_sum(g, p, a0, 0, w) / vol);
          continue;
        }
        for (std::size_t o1 = 0; o1 < w; ++o1) out[x] = std::max(out[x], box_sum(g, p, a0, (ax[1] + n - o1) % n, w) / vol);
      }
    }
    out[x] = std::pow(out[x], 1.0 / r);
  }
  return out;
}

std::vector<double> brute_peetre(const SampledField& f, double sigma, double lambda) {
  const auto& g = f.grid;
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t x = 0; x < g.size(); ++x)
    for (std::size_t y = 0; y < g.size(); ++y)
      out[x] = std::max(out[x], std::abs(f.values[y]) * std::pow(1.0 + lambda * g.torus_distance(x, y), -sigma));
  return out;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]) / std::max(1e-300, std::abs(b[i])));
  return m;
}

}  // namespace

TEST_CASE("fast Hardy-Littlewood matches exhaustive enumeration exactly") {
  for (auto [d, J] : {std::pair{1, 6}, std::pair{1, 4}, std::pair{2, 4}, std::pair{2, 3}}) {
    auto g = TorusGrid::make(d, J, 2.0);
    auto f = random_field(g, 17 + J);
    for (double r : {0.5, 1.0, 2.0}) {
      auto fast = hl_maximal_values(f, r);
      auto ref = brute_hl(f, r);
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(fast[i] == ref[i]);
    }
  }
}

TEST_CASE("Hardy-Littlewood basic properties") {
  auto g = TorusGrid::make(1, 6, 2.0);
  SampledField ind(g);
  for (std::size_t i = 0; i < g.n() / 2; ++i) ind.values[i] = 1.0;
  for (double v : hl_maximal_values(ind, 1.0)) CHECK(v >= 0.5 - 1e-15);

  auto f = random_field(g, 3);
  auto m1 = hl_maximal_values(f, 0.5), m2 = hl_maximal_values(f, 1.0), m3 = hl_maximal_values(f, 3.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(m1[i] >= std::abs(f.values[i]) * (1 - 1e-14));
    CHECK(m1[i] <= m2[i] * (1 + 1e-14));
    CHECK(m2[i] <= m3[i] * (1 + 1e-14));
  }
  CHECK_THROWS_AS(hl_maximal_values(f, 0.0), ConfigError);
}

TEST_CASE("variant with zero damping sits between M and 2M") {
  auto g = TorusGrid::make(1, 6);
  auto f = random_field(g, 21);
  auto m = hl_maximal_values(f, 1.0);
  for (int k : {1, 3, 5}) {
    auto v = variant_maximal_values(f, 1.0, k, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double ratio = v[i] / m[i];
      CHECK((ratio >= 0.5 && ratio <= 2.0));
    }
    auto damped = variant_maximal_values(f, 1.0, k, 3.0);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(damped[i] <= v[i]);
  }
}

TEST_CASE("Peetre maximal agrees with the O(N^2) definition") {
  for (auto [d, J] : {std::pair{1, 7}, std::pair{2, 4}}) {
    auto g = TorusGrid::make(d, J, 2.0);
    auto f = random_field(g, 40 + J);
    for (int k : {0, 2, 4})
      for (double sigma : {0.5, 2.0, 4.0}) {
        auto fast = peetre_maximal_values(f, sigma, std::ldexp(1.0, k));
        CHECK(max_rel(fast, brute_peetre(f, sigma, std::ldexp(1.0, k))) < 1e-13);
      }
  }
}

TEST_CASE("Peetre indicator shortcut is exact") {
  auto g = TorusGrid::make(1, 8, 4.0);
  SampledField f(g);
  for (std::size_t i : {3u, 4u, 5u, 100u, 250u}) f.values[i] = cplx{0, 1.5};
  for (double sigma : {0.7, 3.0}) CHECK(max_rel(peetre_maximal_values(f, sigma, 8.0), brute_peetre(f, sigma, 8.0)) < 1e-14);
}

TEST_CASE("Peetre maximal properties") {
  auto g = TorusGrid::make(1, 7, 2.0);
  SampledField c(g, std::vector<cplx>(g.size(), cplx{-2.0, 0}));
  for (auto v : peetre_maximal(c, 1.5, 3).values) CHECK(v.real() == 2.0);

  auto f = random_field(g, 8);
  SampledField big(g);
  for (std::size_t i = 0; i < g.size(); ++i) big.values[i] = 1.5 * std::abs(f.values[i]);
  auto lo = peetre_maximal_values(f, 1.0, 4.0), hi = peetre_maximal_values(f, 3.0, 4.0), dom = peetre_maximal_values(big, 1.0, 4.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(lo[i] >= std::abs(f.values[i]));
    CHECK(hi[i] <= lo[i]);
    CHECK(dom[i] >= lo[i]);
  }
}

TEST_CASE("Peetre majorized by M_r for band-limited fields") {
  // ratio sup(Peetre_{d/r} f / M_r f) over k; recorded as bounded and roughly stable
  const int J = 11;
  auto g = TorusGrid::make(1, J);
  auto P = build_partition(g);
  const double r = 0.5;
  std::vector<double> ratios;
  for (int k = 3; k <= P.k_max(); ++k) {
    auto f = project(random_field(g, 100 + k), k, P);
    ratios.push_back(sup_ratio(peetre_maximal_values(f, 1.0 / r, std::ldexp(1.0, k)), hl_maximal_values(f, r)));
  }
  double lo = *std::min_element(ratios.begin(), ratios.end()), hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(lo >= 1.0);
  CHECK(hi < 50.0);
  CHECK(hi / lo < 5.0);
}

TEST_CASE("maximal lemma report") {
  auto g = TorusGrid::make(1, 9);
  std::vector<std::pair<int, SampledField>> zeros{{3, SampledField(g)}, {4, SampledField(g)}};
  auto z = check_maximal_lemma(zeros, 0.5, 1.0, 1);
  CHECK(z.lhs == 0.0);
  CHECK(z.rhs == 0.0);
  CHECK(z.ratio == 0.0);

  // unit-modulus mode: Peetre maximal is |f| itself, so both sides coincide
  std::vector<std::pair<int, SampledField>> one{{4, lattice_mode(g, 12)}};
  auto m = check_maximal_lemma(one, 0.5, 1.0, 2);
  CHECK(m.ratio == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(m.flagged);

  std::vector<std::pair<int, SampledField>> bad{{2, lattice_mode(g, 40)}};
  CHECK_THROWS_AS(check_maximal_lemma(bad, 0.5, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(check_maximal_lemma(one, 1.0, 0.5, 1), ConfigError);

  auto P = build_partition(g);
  std::vector<std::pair<int, SampledField>> fam;
  for (int k = 2; k <= P.k_max(); ++k) fam.emplace_back(k, project(random_field(g, 60 + k), k, P));
  for (auto kind : {LemmaKind::peetre, LemmaKind::variant}) {
    auto rep = check_maximal_lemma(fam, 0.5, 1.0, 2, 2.0, kind, kind == LemmaKind::variant ? 1.0 : 0.0);
    CHECK(rep.ratio >= 1.0);
    CHECK(rep.ratio < 100.0);
  }
}
