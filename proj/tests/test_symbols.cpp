#include "catch2/catch_amalgamated.hpp"

#include "pph/symbols.hpp"

using namespace pph;

namespace {

std::shared_ptr<const DyadicPartition> partition(int d, int J, double B = 1.0) {
  return std::make_shared<const DyadicPartition>(build_partition(TorusGrid::make(d, J, B)));
}

std::size_t lattice_flat(const TorusGrid& g, long long m0, long long m1 = 0) { return g.flat(g.wrap_index(m0), g.wrap_index(m1)); }

}  // namespace

TEST_CASE("identity symbol") {
  auto P = partition(1, 8);
  auto a = build_named_symbol({.kind = "multiplier", .band = -1}, P);
  const auto& g = a.grid;
  for (std::size_t x : {0u, 7u, 200u})
    for (long long m : {0, 5, -127, 127}) CHECK(eval_symbol(a, x, lattice_flat(g, m)) == cplx{1, 0});
  auto rows = seminorm_estimate(a, {.m = 0, .alpha_max = 2, .beta_max = 2});
  for (const auto& r : rows) {
    if (r.alpha[0] == 0 && r.beta[0] == 0)
      CHECK(r.estimate == 1.0);
    else
      CHECK(r.estimate == 0.0);
  }
}

TEST_CASE("band multipliers sum to one") {
  auto P = partition(1, 9);
  const auto& g = P->grid();
  std::vector<SeparableSymbol> bands;
  for (int k = 0; k <= P->k_max(); ++k) bands.push_back(build_named_symbol({.kind = "multiplier", .band = k}, P));
  for (long long m = -255; m <= 255; m += 3) {
    cplx s{0, 0};
    for (const auto& b : bands) s += eval_symbol(b, 11, lattice_flat(g, m));
    CHECK(std::abs(s - 1.0) < 1e-14);
  }
}

TEST_CASE("ching symbol at the center of its band") {
  auto P = partition(1, 12);
  const auto& g = P->grid();
  const double m = 0.5;
  auto a = build_named_symbol({.kind = "ching", .m = m, .first = 1, .last = 2, .c = 4}, P);
  for (int k : {1, 2}) {
    int t = 4 * k;
    long long xi = 1LL << t;  // B = 1: the lattice index is the frequency
    for (std::size_t x : {0u, 1u, 37u, 1000u}) {
      double xpos = g.point(x)[0];
      cplx expect = std::pow(2.0, t * m) * std::exp(cplx{0, 2.0 * kPi * (std::ldexp(1.0, -t) * xi - std::ldexp(1.0, t) * xpos)});
      CHECK(std::abs(eval_symbol(a, x, lattice_flat(g, xi)) - expect) < 1e-12 * std::abs(expect));
    }
  }
  CHECK_THROWS_AS(eval_symbol_at(a, {0.5 / 4096, 0}, {16, 0}), RangeError);
  CHECK_THROWS_AS(eval_symbol_at(a, {0, 0}, {16.5, 0}), RangeError);
  CHECK(eval_symbol_at(a, {0, 0}, {16, 0}) == eval_symbol(a, 0, 16));
}

TEST_CASE("dilated spatial factor matches its closed form") {
  auto P = partition(1, 12);
  const auto& g = P->grid();
  const double kappa = 4.0;
  auto a = build_named_symbol({.kind = "dilated", .m = 0, .first = 2, .last = 3, .kappa = kappa}, P);
  const double peak = std::exp(kappa) / std::cyl_bessel_i(0.0, kappa);
  for (const auto& term : a.terms) {
    int t = std::stoi(term.label.substr(term.label.find('_') + 1));
    auto vals = spatial_values(g, term.modes);
    for (std::size_t x = 0; x < g.size(); x += 37) {
      double ref = std::exp(kappa * std::cos(2.0 * kPi * std::ldexp(g.point(x)[0], t))) / std::cyl_bessel_i(0.0, kappa);
      CHECK(std::abs(vals[x] - ref) < 1e-14 * peak);
    }
  }
}

TEST_CASE("xi-derivative estimates agree with analytic jets") {
  auto P = partition(1, 9);
  const int k = 4, refine = 4;
  auto a = build_named_symbol({.kind = "multiplier", .band = k}, P);
  auto rows = seminorm_estimate(a, {.m = 0, .alpha_max = 2, .beta_max = 0, .refine = refine});
  const double dxi = 1.0 / refine;
  double ref1 = 0, ref2 = 0;
  for (double r = std::ldexp(1.0, k - 1); r <= std::ldexp(1.0, k + 1); r += dxi) {
    Jet j = P->radial_jet(k, r);
    ref1 = std::max(ref1, std::abs(j.d1) * (1 + r));
    ref2 = std::max(ref2, std::abs(j.d2) * (1 + r) * (1 + r));
  }
  CHECK(seminorm_lookup(rows, 1, 0) == Catch::Approx(ref1).epsilon(1e-4));
  CHECK(seminorm_lookup(rows, 2, 0) == Catch::Approx(ref2).epsilon(1e-3));
}

TEST_CASE("x-independent symbols have vanishing x-derivatives") {
  auto P = partition(2, 6);
  auto a = build_named_symbol({.kind = "multiplier", .band = 3}, P);
  for (const auto& r : seminorm_estimate(a, {.m = 0, .alpha_max = 1, .beta_max = 2})) {
    if (r.beta[0] + r.beta[1] > 0) CHECK(r.estimate == 0.0);
    if (r.beta[0] + r.beta[1] == 0 && r.alpha[0] + r.alpha[1] == 0) CHECK(r.estimate > 0.0);
  }
}

TEST_CASE("seminorm estimates scale with the symbol") {
  auto P = partition(1, 10);
  auto a = build_named_symbol({.kind = "modulated", .m = 0.5, .first = 1, .last = 5}, P);
  SymbolClassParams prm{.m = 0.5, .alpha_max = 2, .beta_max = 2};
  auto base = seminorm_estimate(a, prm);
  auto twice = seminorm_estimate(scaled(a, cplx{0, -3.0}), prm);
  REQUIRE(base.size() == twice.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(twice[i].estimate == Catch::Approx(3.0 * base[i].estimate).epsilon(1e-14));
}

TEST_CASE("modulated symbol: supports, stability, overflow") {
  auto P = partition(1, 9);
  const auto& g = P->grid();
  auto a4 = build_named_symbol({.kind = "modulated", .m = 0, .first = 1, .last = 4}, P);
  auto a6 = build_named_symbol({.kind = "modulated", .m = 0, .first = 1, .last = 6}, P);
  for (std::size_t i = 0; i < a6.terms.size(); ++i) {
    double scale = std::ldexp(1.0, static_cast<int>(i) + 1);
    for (const auto& [flat, v] : a6.terms[i].table) {
      double r = g.frequency_norm(flat);
      CHECK(r > 9.0 / 8.0 * scale);
      CHECK(r < 15.0 / 8.0 * scale);
    }
    REQUIRE(a6.terms[i].modes.size() == 1);
    CHECK(a6.terms[i].modes[0].n0 == static_cast<long long>(1.5 * scale));
  }
  SymbolClassParams prm{.m = 0, .alpha_max = 2, .beta_max = 2};
  auto r4 = seminorm_estimate(a4, prm), r6 = seminorm_estimate(a6, prm);
  for (std::size_t i = 0; i < r4.size(); ++i) {
    CHECK(r6[i].estimate >= r4[i].estimate * (1 - 1e-12));
    CHECK(r6[i].estimate <= 1.5 * r4[i].estimate);
  }
  // 27/8 * 2^7 = 432 > 256
  CHECK_THROWS_AS(build_named_symbol({.kind = "modulated", .first = 1, .last = 7}, P), ConfigError);
  CHECK_THROWS_AS(build_named_symbol({.kind = "ching", .first = 1, .last = 2, .c = 4}, P), ConfigError);
  CHECK_THROWS_AS(build_named_symbol({.kind = "nope"}, P), ConfigError);
}

TEST_CASE("twisted diagonal condition") {
  auto P = partition(1, 12);
  for (double C : {2.0, 4.0, 8.0}) {
    auto mult = build_named_symbol({.kind = "multiplier", .band = 5}, P);
    auto rep = twisted_diagonal_check(mult, C);
    CHECK(rep.satisfied);
    CHECK(rep.violation_mass == 0.0);
    CHECK(rep.total_mass > 0.0);

    // radial window: the negative half of each band meets the twisted diagonal
    auto mod = build_named_symbol({.kind = "modulated", .first = 1, .last = 8}, P);
    auto mrep = twisted_diagonal_check(mod, C);
    CHECK_FALSE(mrep.satisfied);
    CHECK(mrep.witness_xi[0] < 0.0);
    CHECK(mrep.witness_eta[0] > 0.0);

    auto ch = build_named_symbol({.kind = "ching", .m = 0, .first = 1, .last = 2, .c = 4}, P);
    auto bad = twisted_diagonal_check(ch, C);
    CHECK_FALSE(bad.satisfied);
    CHECK(bad.relative > 1e-3);
    double sum = std::abs(bad.witness_eta[0] + bad.witness_xi[0]);
    CHECK(C * (sum + 1) <= std::abs(bad.witness_xi[0]));
  }
  CHECK_THROWS_AS(twisted_diagonal_check(build_named_symbol({.kind = "multiplier"}, P), 1.0), ConfigError);
}

TEST_CASE("dense and separable twisted checks agree") {
  auto P = partition(1, 8);
  const auto& g = P->grid();
  auto a = build_named_symbol({.kind = "ching", .m = 0.5, .first = 1, .last = 1, .c = 4}, P);
  DenseSymbol D(g, 0.5);
  for (std::size_t x = 0; x < g.n(); ++x)
    for (std::size_t xi = 0; xi < g.n(); ++xi) D.at(x, xi) = eval_symbol(a, x, xi);
  for (double C : {2.0, 3.0}) {
    auto s = twisted_diagonal_check(a, C), d = twisted_diagonal_check(D, C);
    CHECK(d.total_mass == Catch::Approx(s.total_mass).epsilon(1e-10));
    CHECK(d.violation_mass == Catch::Approx(s.violation_mass).epsilon(1e-10));
  }
  CHECK_THROWS_AS(DenseSymbol(TorusGrid::make(1, 13), 0.0), CapacityError);
}

TEST_CASE("symbol manifest") {
  auto P = partition(1, 8);
  auto j = symbol_manifest(build_named_symbol({.kind = "modulated", .m = 1, .first = 1, .last = 3}, P));
  CHECK(j["kind"] == "modulated");
  CHECK(j["terms"].size() == 3);
  CHECK(j["params"]["last"] == 3);
}
