#include "catch2/catch_amalgamated.hpp"

#include <random>

#include "pph/pdo.hpp"

using namespace pph;

namespace {

std::shared_ptr<const DyadicPartition> partition(int d, int J, double B = 1.0) {
  return std::make_shared<const DyadicPartition>(build_partition(TorusGrid::make(d, J, B)));
}

SampledField random_field(const TorusGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SampledField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

double sup_diff(const SampledField& a, const SampledField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

// Defining sum with naive DFTs: T f(x) = B^{-1} sum_xi F(xi) f^(xi) e^{2 pi i x xi}, f^ = (B/N) sum_y f(y) e^{-2 pi i y xi}.
SampledField quadrature_multiplier(const SeparableSymbol& a, const SampledField& f) {
  const auto& g = f.grid;
  const std::size_t n = g.n();
  std::vector<cplx> fh(n);
  for (std::size_t m = 0; m < n; ++m) {
    cplx s{0, 0};
    for (std::size_t y = 0; y < n; ++y) s += f.values[y] * std::polar(1.0, -2.0 * kPi * double(m) * double(y) / double(n));
    fh[m] = s * g.period / double(n);
  }
  SampledField out(g);
  for (std::size_t x = 0; x < n; ++x) {
    cplx s{0, 0};
    for (std::size_t m = 0; m < n; ++m) s += eval_symbol(a, 0, m) * fh[m] * std::polar(1.0, 2.0 * kPi * double(g.signed_index(m)) * double(x) / double(n));
    out.values[x] = s / g.period;
  }
  return out;
}

}  // namespace

TEST_CASE("identity and multiplier application") {
  auto P = partition(1, 10);
  const auto& g = P->grid();
  auto f = random_field(g, 1);
  CHECK(sup_diff(apply_symbol(build_named_symbol({.kind = "multiplier", .band = -1}, P), f), f) < 1e-13);

  auto F = dft_forward(f);
  for (int k : {0, 1, 4, P->k_max()}) {
    auto a = build_named_symbol({.kind = "multiplier", .band = k}, P);
    auto S = apply_symbol_spectrum(a, F), ref = band_spectrum(F, k, *P);
    for (std::size_t i = 0; i < S.coeffs.size(); ++i) CHECK(S.coeffs[i] == ref.coeffs[i]);
    CHECK(sup_diff(apply_symbol(a, f), project(f, k, *P)) < 1e-12);
  }
}

TEST_CASE("multiplier application matches the defining quadrature") {
  auto P = partition(1, 8, 2.0);
  auto f = random_field(P->grid(), 2);
  for (int k : {0, 2, 4}) {
    auto a = build_named_symbol({.kind = "multiplier", .band = k}, P);
    CHECK(sup_diff(apply_symbol(a, f), quadrature_multiplier(a, f)) < 1e-10);
  }
}

TEST_CASE("separable and dense application agree") {
  auto P = partition(1, 8);
  const auto& g = P->grid();
  auto a = build_named_symbol({.kind = "dilated", .m = 0.5, .first = 1, .last = 4}, P);
  DenseSymbol D(g, 0.5);
  for (std::size_t x = 0; x < g.n(); ++x)
    for (std::size_t xi = 0; xi < g.n(); ++xi) D.at(x, xi) = eval_symbol(a, x, xi);
  auto f = random_field(g, 3);
  auto s = apply_symbol(a, f), d = apply_symbol(D, f), c = apply_symbol(to_separable(D), f);
  double scale = s.sup_norm();
  CHECK(sup_diff(s, d) < 1e-12 * scale);
  CHECK(sup_diff(s, c) < 1e-12 * scale);
}

TEST_CASE("linearity and term additivity") {
  auto P = partition(1, 10);
  const auto& g = P->grid();
  auto a = build_named_symbol({.kind = "modulated", .m = 1, .first = 1, .last = 6}, P);
  auto f = random_field(g, 4), h = random_field(g, 5);
  SampledField comb(g);
  const cplx alpha{0.3, -2.0};
  for (std::size_t i = 0; i < g.size(); ++i) comb.values[i] = f.values[i] + alpha * h.values[i];
  auto Tf = apply_symbol(a, f), Th = apply_symbol(a, h), Tc = apply_symbol(a, comb);
  SampledField lin(g);
  for (std::size_t i = 0; i < g.size(); ++i) lin.values[i] = Tf.values[i] + alpha * Th.values[i];
  CHECK(sup_diff(Tc, lin) < 1e-11 * Tc.sup_norm());

  SampledField parts(g);
  for (const auto& t : a.terms) {
    SeparableSymbol one = a;
    one.terms = {t};
    auto Tt = apply_symbol(one, f);
    for (std::size_t i = 0; i < g.size(); ++i) parts.values[i] += Tt.values[i];
  }
  CHECK(sup_diff(parts, Tf) < 1e-12 * Tf.sup_norm());
}

TEST_CASE("output past Nyquist is a hard error naming the term") {
  auto P = partition(1, 8);
  const auto& g = P->grid();
  auto a = multiplier_symbol(g, [](double, double) { return cplx{1, 0}; }, 100.0, 120.0);
  a.terms[0].modes = {Mode{20, 0, {1, 0}}};
  a.terms[0].label = "shifted";
  SampledField f = lattice_mode(g, 110);
  try {
    apply_symbol(a, f);
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find("shifted") != std::string::npos);
  }
  // spectrum away from the pushed band: no overflow
  CHECK_NOTHROW(apply_symbol(a, lattice_mode(g, 50)));
}

TEST_CASE("near plus far reconstructs the truncated operator") {
  auto P = partition(1, 11);
  const auto& g = P->grid();
  auto f = random_field(g, 6);
  std::vector<SeparableSymbol> symbols{build_named_symbol({.kind = "dilated", .m = 0.5, .first = 1, .last = 6}, P),
                                       build_named_symbol({.kind = "modulated", .m = 0, .first = 1, .last = 7}, P),
                                       build_named_symbol({.kind = "ching", .m = 0, .first = 1, .last = 2, .c = 3}, P)};
  DenseSymbol small(TorusGrid::make(1, 7), 0.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : small.table) v = {u(rng), u(rng)};
  for (const auto& a : symbols) {
    auto D = split_near_far(a, P);
    auto near = apply_symbol(D.near(), f), far = apply_symbol(D.far(), f), total = apply_symbol(D.total(), f);
    SampledField sum(g);
    for (std::size_t i = 0; i < g.size(); ++i) sum.values[i] = near.values[i] + far.values[i];
    CHECK(sup_diff(sum, total) < 1e-11 * std::max(1.0, total.sup_norm()));
    auto tw = twisted_diagonal_check(D.far(), 8.0);
    CHECK(tw.violation_mass <= 1e-12 * tw.total_mass);
  }
  auto Ps = partition(1, 7);
  auto Ds = split_near_far(to_separable(small), Ps);
  auto fs = random_field(Ps->grid(), 7);
  auto near = apply_symbol(Ds.near(), fs), far = apply_symbol(Ds.far(), fs), total = apply_symbol(Ds.total(), fs);
  for (std::size_t i = 0; i < fs.values.size(); ++i) CHECK(std::abs(near.values[i] + far.values[i] - total.values[i]) < 1e-11 * total.sup_norm());
}

TEST_CASE("x-independent symbols only have j = 0 pieces") {
  auto P = partition(1, 10);
  auto a = build_named_symbol({.kind = "multiplier", .band = 4}, P);
  auto D = split_near_far(a, P);
  for (int j = 1; j <= D.truncation(); ++j)
    for (int k = 0; k <= D.truncation(); ++k) CHECK(D.piece(j, k).terms.empty());
  CHECK_FALSE(D.piece(0, 4).terms.empty());
  for (int k = 3; k <= D.truncation(); ++k) CHECK(D.diag(k).terms.empty());
  auto f = random_field(P->grid(), 8);
  CHECK(sup_diff(apply_symbol(D.far(), f), apply_symbol(a, f)) < 1e-12);
  CHECK_THROWS_AS(split_near_far(a, P, P->k_max() - 1), ConfigError);
}

TEST_CASE("far bands have exact spectral support") {
  auto P = partition(1, 12);
  auto a = build_named_symbol({.kind = "dilated", .m = 0, .first = 1, .last = 8}, P);
  auto D = split_near_far(a, P);
  auto F = dft_forward(random_field(P->grid(), 10));
  for (int k = 3; k <= D.truncation(); ++k) {
    auto low = apply_symbol_spectrum(D.low(k), F);
    CHECK(spectrum_within(low, std::ldexp(1.0, k - 2), std::ldexp(1.0, k + 2)));
    auto high = apply_symbol_spectrum(D.high(k), F);
    CHECK(spectrum_within(high, std::ldexp(1.0, k - 2), std::ldexp(1.0, k + 2)));
  }
  // b_k annihilates inputs without band-k content
  auto low_input = band_spectrum(F, 2, *P);
  for (auto& c : apply_symbol_spectrum(D.low(6), low_input).coeffs) CHECK(c == cplx{0, 0});
}

TEST_CASE("truncated definition") {
  auto P = partition(1, 12);
  const auto& g = P->grid();
  auto f = random_field(g, 12);

  auto mult = build_named_symbol({.kind = "multiplier", .band = 4}, P);
  auto rm = apply_truncated(mult, f, P);
  CHECK(rm.cauchy);
  CHECK(rm.converged_at == 5);  // phi_4 overlaps the envelope bands 3..5 only
  CHECK(sup_diff(rm.value, apply_symbol(mult, f)) < 1e-12);

  auto mod = build_named_symbol({.kind = "modulated", .m = 0, .first = 1, .last = 5}, P);
  auto band_limited = project(f, 3, *P);
  auto rt = apply_truncated(mod, band_limited, P);
  CHECK(rt.cauchy);
  CHECK(sup_diff(rt.value, apply_symbol(mod, band_limited)) < 1e-12 * std::max(1.0, rt.value.sup_norm()));

  auto Ps = partition(1, 8);
  DenseSymbol D(Ps->grid(), 0.0);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : D.table) v = {u(rng), u(rng)};
  auto fs = project(random_field(Ps->grid(), 14), 2, *Ps);
  auto rd = apply_truncated(to_separable(D), fs, Ps);
  // input spectrum sits in |xi| < 2^3, so column k = 3 onwards adds nothing; rows j still grow
  REQUIRE(rd.increments.size() == static_cast<std::size_t>(Ps->k_max() - 2));
  CHECK_THROWS_AS(apply_truncated(mult, f, P, P->k_max()), ConfigError);
}

TEST_CASE("kernel size and decay estimates") {
  auto P = partition(1, 12);
  SECTION("multiplier band kernels scale like 2^{kd}") {
    std::vector<double> r;
    for (int k = 3; k <= P->k_max() - 2; ++k) {
      auto D = split_near_far(build_named_symbol({.kind = "multiplier", .band = k}, P), P);
      auto rows = kernel_decay_report(D, BandKind::full, {k}, {0.0, 2.0});
      r.push_back(rows[0].ratio);
      CHECK(std::isfinite(rows[1].ratio));
    }
    CHECK(*std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()) <= 4.0);
  }
  SECTION("dilated symbol: b_k kernel stable, W decays in j - k") {
    auto a = build_named_symbol({.kind = "dilated", .m = 0.5, .first = 1, .last = 9}, P);
    auto D = split_near_far(a, P);
    std::vector<int> ks{3, 4, 5, 6};
    auto rows = kernel_decay_report(D, BandKind::low, ks, {0.0, 2.0});
    for (double M : {0.0, 2.0}) {
      std::vector<double> r;
      for (auto& row : rows)
        if (row.M == M) r.push_back(row.ratio);
      CHECK(*std::min_element(r.begin(), r.end()) > 0.0);
      CHECK(*std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()) <= 4.0);
    }
    for (int k : {2, 3}) {
      auto w3 = kernel_decay_report(D, BandKind::piece, {k}, {2.0}, 3)[0].weighted_sup;
      auto w4 = kernel_decay_report(D, BandKind::piece, {k}, {2.0}, 4)[0].weighted_sup;
      auto w5 = kernel_decay_report(D, BandKind::piece, {k}, {2.0}, 5)[0].weighted_sup;
      CHECK(w3 > 0.0);
      CHECK(w4 <= w3 / 4.0);
      CHECK(w5 <= w3 / 64.0);
    }
  }
}

TEST_CASE("kernel oscillation") {
  auto P = partition(1, 12);
  auto a = build_named_symbol({.kind = "dilated", .m = 0, .first = 1, .last = 9}, P);
  auto D = split_near_far(a, P);
  const int mu = 8;
  std::vector<double> r;
  // below k = mu - 2 the difference quotient is in its linear regime; nearer mu it saturates
  for (int k = 2; k <= mu - 3; ++k) {
    double v = kernel_oscillation_check(kernel_of(D.diag(k), k), a.order, mu);
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
    r.push_back(v);
  }
  CHECK(*std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()) <= 4.0);
  CHECK_THROWS_AS(kernel_oscillation_check(kernel_of(D.diag(3), 3), 0.0, 2), ConfigError);

  std::vector<double> m;
  for (int k : {mu - 3, mu - 2}) {
    auto Dm = split_near_far(build_named_symbol({.kind = "multiplier", .band = k}, P), P);
    m.push_back(kernel_oscillation_check(kernel_of(Dm.full_band(k), k), 0.0, mu));
  }
  CHECK(std::max(m[0], m[1]) / std::min(m[0], m[1]) <= 4.0);
}

TEST_CASE("pointwise domination by the Peetre maximal function") {
  auto P = partition(1, 12);
  auto a = build_named_symbol({.kind = "dilated", .m = 0.5, .first = 1, .last = 9}, P);
  auto D = split_near_far(a, P);
  auto f = random_field(P->grid(), 15);
  std::vector<double> r;
  for (int k = 4; k <= 8; ++k) {
    auto rep = check_pointwise_domination(D.low(k), f, *P, k, 2.0);
    CHECK_FALSE(rep.degenerate);
    r.push_back(rep.ratio);
  }
  CHECK(*std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end()) <= 4.0);

  auto rep = check_pointwise_domination(D.low(7), SampledField(P->grid()), *P, 7, 2.0);
  CHECK(rep.numerator_sup == 0.0);
  CHECK(rep.degenerate);
  CHECK_THROWS_AS(check_pointwise_domination(D.low(7), f, *P, 7, 0.0), ConfigError);
}
