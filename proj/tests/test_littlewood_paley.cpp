#include "catch2/catch_amalgamated.hpp"

#include <filesystem>
#include <random>

#include "pph/littlewood_paley.hpp"

using namespace pph;

namespace {

// Composite Simpson integral of the unnormalized bump, independent of the Gauss rule in the library.
double simpson_bump(double a, double lo, double hi, int n = 200000) {
  auto f = [a](double s) { return (s <= -1 || s >= 1) ? 0.0 : std::exp(-a / (1 - s * s)); };
  double h = (hi - lo) / n, acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

SampledField random_field(const TorusGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SampledField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

double max_diff(const SampledField& a, const SampledField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace

TEST_CASE("cutoff ramp matches independent quadrature") {
  for (double a : {0.5, 1.0, 2.0}) {
    SmoothCutoff c(a);
    double z = simpson_bump(a, -1, 1);
    for (double u : {0.05, 0.2, 0.5, 0.73, 0.95}) {
      double ref = simpson_bump(a, -1, 2 * u - 1) / z;
      CHECK(std::abs(c.transition(u) - ref) < 1e-10);
    }
    CHECK(c.transition(0.5) == Catch::Approx(0.5).margin(1e-13));
  }
}

TEST_CASE("cutoff jets agree with finite differences") {
  SmoothCutoff c(1.0);
  const double h = 1e-4;
  for (double t : {1.1, 1.37, 1.5, 1.81, -1.42}) {
    auto j = c.eta_jet(t);
    double d1 = (c.eta(t + h) - c.eta(t - h)) / (2 * h);
    double d2 = (c.eta(t + h) - 2 * c.eta(t) + c.eta(t - h)) / (h * h);
    CHECK(j.v == c.eta(t));
    CHECK(j.d1 == Catch::Approx(d1).epsilon(1e-6).margin(1e-8));
    CHECK(j.d2 == Catch::Approx(d2).epsilon(1e-4).margin(1e-5));
  }
  CHECK(c.eta(1.0) == 1.0);
  CHECK(c.eta(2.0) == 0.0);
  CHECK(c.eta(-0.3) == 1.0);
}

TEST_CASE("partition residual vanishes by construction") {
  auto g = TorusGrid::make(1, 8);
  auto P = build_partition(g);
  CHECK(P.k_max() == 5);
  CHECK(P.residual() <= 1e-15);
  auto g2 = TorusGrid::make(2, 7, 2.0);
  CHECK(build_partition(g2).residual() <= 1e-15);
}

TEST_CASE("band values are bounded and supported in their annulus") {
  auto g = TorusGrid::make(1, 10, 2.0);
  auto P = build_partition(g);
  for (int k = 1; k <= P.k_max(); ++k) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      double r = g.frequency_norm(i), v = P.value(k, i);
      CHECK((v >= 0.0 && v <= 1.0));
      if (r <= std::ldexp(1.0, k - 1) || r >= std::ldexp(1.0, k + 1)) CHECK(v == 0.0);
    }
  }
  // k = 2 band: zero for |xi| <= 2 and |xi| >= 8
  for (std::size_t i = 0; i < g.size(); ++i) {
    double r = g.frequency_norm(i);
    if (r <= 2 || r >= 8) CHECK(P.value(2, i) == 0.0);
  }
}

TEST_CASE("low-pass complement telescopes") {
  // Phi = 1 - (eta(xi/2^K) - eta(xi)) evaluated directly; equals eta(xi) inside the top plateau
  auto g = TorusGrid::make(1, 9);
  auto P = build_partition(g);
  const int K = P.k_max();
  const auto& c = P.cutoff();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double r = g.frequency_norm(i);
    double direct = 1.0 - (c.eta(std::ldexp(r, -K)) - c.eta(r));
    CHECK(std::abs(P.value(0, i) - direct) < 1e-15);
    if (r <= std::ldexp(1.0, K)) CHECK(std::abs(P.value(0, i) - c.eta(r)) < 1e-15);
  }
}

TEST_CASE("projections of constants and single modes") {
  auto g = TorusGrid::make(1, 8);
  auto P = build_partition(g);
  SampledField one(g, std::vector<cplx>(g.size(), cplx{2.5, 0}));
  CHECK(max_diff(project(one, 0, P), one) < 1e-14);
  for (int k = 1; k <= P.k_max(); ++k) CHECK(project(one, k, P).sup_norm() < 1e-14);

  auto mode = lattice_mode(g, 3);
  SampledField sum(g);
  for (int k = 0; k <= P.k_max(); ++k) {
    auto pk = project(mode, k, P);
    for (std::size_t i = 0; i < g.size(); ++i) sum.values[i] += pk.values[i];
  }
  CHECK(max_diff(sum, mode) < 1e-12);
}

TEST_CASE("reconstruction of random fields") {
  auto g = TorusGrid::make(1, 11, 2.0);
  auto P = build_partition(g);
  auto f = random_field(g, 5);
  SampledField sum(g);
  for (int k = 0; k <= P.k_max(); ++k) {
    auto pk = project(f, k, P);
    for (std::size_t i = 0; i < g.size(); ++i) sum.values[i] += pk.values[i];
  }
  CHECK(max_diff(sum, f) < 1e-12 * f.sup_norm() * 10);
}

TEST_CASE("band spectra vanish exactly outside the annulus") {
  auto g = TorusGrid::make(2, 7);
  auto P = build_partition(g);
  auto F = dft_forward(random_field(g, 9));
  for (int k = 1; k <= P.k_max(); ++k) {
    auto B = band_spectrum(F, k, P);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double r = g.frequency_norm(i);
      if (r < std::ldexp(1.0, k - 1) || r > std::ldexp(1.0, k + 1)) CHECK(B.coeffs[i] == cplx{0, 0});
    }
  }
}

TEST_CASE("star projection") {
  auto g = TorusGrid::make(1, 10);
  auto P = build_partition(g);
  auto f = random_field(g, 13);
  for (int k = 1; k <= P.k_max() - 1; ++k) {
    auto pk = project(f, k, P);
    CHECK(max_diff(project_star(pk, k, P), pk) < 1e-12 * std::max(1.0, pk.sup_norm()));
    auto sum = project(f, k - 1, P);
    for (int j : {k, k + 1}) {
      auto pj = project(f, j, P);
      for (std::size_t i = 0; i < g.size(); ++i) sum.values[i] += pj.values[i];
    }
    CHECK(max_diff(project_star(f, k, P), sum) < 1e-12 * f.sup_norm() * 10);
  }
  // pure mode at |xi| = 2^k
  const int k = 4;
  auto mode = lattice_mode(g, 16);
  auto out = project_star(mode, k, P);
  double mult = P.radial(k - 1, 16) + P.radial(k, 16) + P.radial(k + 1, 16);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(out.values[i] - mult * mode.values[i]) < 1e-12);
  CHECK_THROWS_AS(project_star(f, 0, P), RangeError);
  CHECK_THROWS_AS(project_star(f, P.k_max(), P), RangeError);
  CHECK_THROWS_AS(project(f, P.k_max() + 1, P), RangeError);
}

TEST_CASE("partition needs enough bands") {
  CHECK_THROWS_AS(build_partition(TorusGrid::make(1, 4)), ConfigError);
  CHECK_NOTHROW(build_partition(TorusGrid::make(1, 6)));
}

TEST_CASE("partition export") {
  namespace fs = std::filesystem;
  auto dir = (fs::temp_directory_path() / "pph_partition_export").string();
  auto g = TorusGrid::make(1, 7);
  auto P = build_partition(g);
  export_partition(P, dir);
  CHECK(fs::exists(fs::path(dir) / "manifest.json"));
  auto c = read_container((fs::path(dir) / "band_03.bin").string());
  CHECK(c.tag == Domain::frequency);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(c.data[i].real() == P.value(3, i));
  fs::remove_all(dir);
}
