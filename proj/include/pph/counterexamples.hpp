#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "json.hpp"
#include "pph/maximal.hpp"
#include "pph/norms.hpp"
#include "pph/parallel.hpp"
#include "pph/pdo.hpp"
#include "pph/profiles.hpp"
#include "pph/symbols.hpp"

namespace pph {

/// A lacunary scheme the validator refused.
struct SchemeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Construction { random, random_mu, deterministic, ching, bspace_infty };

inline const char* to_string(Construction c) {
  switch (c) {
    case Construction::random: return "random";
    case Construction::random_mu: return "random_mu";
    case Construction::deterministic: return "deterministic";
    case Construction::ching: return "ching";
    case Construction::bspace_infty: return "bspace_infty";
  }
  return "?";
}

inline Construction construction_from(const std::string& s) {
  for (auto c : {Construction::random, Construction::random_mu, Construction::deterministic, Construction::ching, Construction::bspace_infty})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown construction kind '" + s + "'");
}

// ---- lacunary scheme -------------------------------------------------------------------

struct SchemeCheck {
  std::string name;
  bool ok = false;
  bool grid_dependent = false;
  std::string detail;
};

/// Scales t_k = c k for k = first..L; M is the base scale of the cubes and bumps.
struct LacunaryScheme {
  int c = 4;
  int M = 1;
  int L = 2;
  int first = 1;
  std::vector<SchemeCheck> checks;

  int scale(int k) const { return c * k; }
  int top() const { return scale(L); }
  bool valid() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const SchemeCheck& x) { return x.ok; });
  }
  std::string failures() const {
    std::string out;
    for (const auto& x : checks)
      if (!x.ok) out += (out.empty() ? "" : "; ") + x.name + ": " + x.detail;
    return out;
  }
};

inline nlohmann::json to_json(const LacunaryScheme& s) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& x : s.checks) checks.push_back({{"name", x.name}, {"ok", x.ok}, {"detail", x.detail}});
  return {{"c", s.c}, {"M", s.M}, {"L", s.L}, {"first", s.first}, {"checks", checks}};
}

/// Fills sc.checks with every support-separation condition the construction relies on.
/// mu is the box exponent for random_mu (cubes live in [0, 2^{-mu}]^d).
inline void validate_scheme(LacunaryScheme& sc, Construction kind, const TorusGrid& g, int mu = 0) {
  sc.checks.clear();
  auto add = [&](std::string name, bool ok, bool grid, std::string detail) { sc.checks.push_back({std::move(name), ok, grid, std::move(detail)}); };
  auto pw = [](int e) { return std::ldexp(1.0, e); };
  const bool indices = sc.c >= 1 && sc.first >= 1 && sc.L >= sc.first && sc.M >= 1;
  add("indices", indices, false, "need c >= 1, first >= 1, L >= first, M >= 1");
  if (!indices) return;
  const int kmax = max_band(g);
  const int tL = sc.top();

  if (kind == Construction::ching) {
    add("ching_disjoint", sc.c >= 3, false, "balls of radius 1 at 2^{t_k} must avoid the other star bands (c >= 3)");
    add("bands", tL <= kmax - 1, true, "t_L = " + std::to_string(tL) + " must be <= k_max - 1 = " + std::to_string(kmax - 1));
    return;
  }
  if (kind == Construction::bspace_infty) {
    add("lacunary", sc.c >= 3, false, "bands t_k +- 1 must be disjoint across k (c >= 3)");
    add("terms", sc.L >= sc.first + 1, false, "need at least one bump below t_L");
    add("bands", tL <= kmax - 1, true, "t_L = " + std::to_string(tL) + " must be <= k_max - 1 = " + std::to_string(kmax - 1));
    return;
  }

  add("window_disjoint", 15.0 / 8.0 < 9.0 / 8.0 * pw(sc.c), false, "(15/8) 2^{t_k} < (9/8) 2^{t_{k+1}}");
  add("window_condition", pw(2 - sc.c) <= 0.25, false, "2^{-c+2} <= 1/4 (c >= 4), so the window is 1 on every lower band");
  add("nyquist", 27.0 / 8.0 * pw(tL) < g.nyquist(), true, "(27/8) 2^{t_L} must stay below Nyquist " + std::to_string(g.nyquist()));
  add("bands_resolved", tL + 2 <= kmax, true, "t_L + 2 = " + std::to_string(tL + 2) + " must be <= k_max = " + std::to_string(kmax));
  const double plateau = 0.75 * pw(sc.scale(sc.first)) * g.period;
  add("plateau", plateau >= 8.0, true, std::to_string(plateau) + " lattice points across the finest window (need >= 8)");
  if (kind == Construction::random || kind == Construction::random_mu) {
    bool ok = true;
    std::string why = "cubes of side 2^{-t_k-M} tile the box";
    if (kind == Construction::random_mu && (mu < 1 || sc.scale(sc.first) + sc.M < mu)) {
      ok = false;
      why = "mu must be >= 1 and no larger than t_first + M";
    }
    if (g.period < 1.0) {
      ok = false;
      why = "period must be at least 1";
    }
    try {
      const std::size_t box = cube_cells(g, kind == Construction::random_mu ? mu : 0);
      for (int k = sc.first; k <= sc.L && ok; ++k)
        if (box % cube_cells(g, sc.scale(k) + sc.M) != 0) ok = false;
    } catch (const RangeError& e) {
      ok = false;
      why = e.what();
    }
    add("cubes", ok, true, why);
  }
  if (kind == Construction::deterministic) {
    const double cells = pw(-tL - sc.M) / g.spacing();
    add("bump_resolved", cells >= 8.0, true, std::to_string(cells) + " cells across the finest bump radius (need >= 8)");
  }
}

inline void require_valid(const LacunaryScheme& sc) {
  if (!sc.valid()) throw SchemeError("lacunary scheme refused (c = " + std::to_string(sc.c) + "): " + sc.failures());
}

/// Smallest grid 2^J (J <= J_cap) on which the scheme validates. Grid-independent failures
/// raise SchemeError; a scheme that needs more than J_cap raises CapacityError.
inline TorusGrid grid_for(LacunaryScheme& sc, Construction kind, int d, double B, int mu = 0, int J_cap = 22) {
  J_cap = std::min(J_cap, d == 1 ? 26 : 13);
  validate_scheme(sc, kind, TorusGrid::make(d, J_cap, B), mu);
  for (const auto& x : sc.checks)
    if (!x.ok && !x.grid_dependent) require_valid(sc);
  for (int J = 6; J <= J_cap; ++J) {
    auto g = TorusGrid::make(d, J, B);
    validate_scheme(sc, kind, g, mu);
    if (sc.valid()) return g;
  }
  validate_scheme(sc, kind, TorusGrid::make(d, J_cap, B), mu);
  throw CapacityError("L = " + std::to_string(sc.L) + " needs a grid above 2^" + std::to_string(J_cap) + ": " + sc.failures());
}

// ---- profiles --------------------------------------------------------------------------

struct GammaLambda {
  std::shared_ptr<const WindowProfile> window;
  std::shared_ptr<const PositiveKernelProfile> gamma;  // null unless requested
  std::vector<SchemeCheck> checks;
  double gamma_at_zero = 0;
};

/// Window and positive-kernel profiles with their defining properties verified on the grid.
inline GammaLambda build_gamma_lambda(const LacunaryScheme& sc, const DyadicPartition& P, bool with_gamma) {
  const auto& g = P.grid();
  GammaLambda out;
  out.window = std::make_shared<WindowProfile>(P.cutoff_ptr());
  const double lo = WindowProfile::kOuterLo * std::ldexp(1.0, sc.scale(sc.first)), hi = WindowProfile::kOuterHi * std::ldexp(1.0, sc.scale(sc.first));
  long long inside = 0;
  for (long long m = static_cast<long long>(std::floor(lo * g.period)); m <= static_cast<long long>(std::ceil(hi * g.period)); ++m) {
    double r = m / g.period;
    if (r > lo && r < hi) ++inside;
  }
  if (inside < 8) throw ConfigError("window plateau unresolved: " + std::to_string(inside) + " lattice points across the finest band (need >= 8)");
  bool plateau = true, nonneg = true;
  for (int k = sc.first; k <= sc.L; ++k) {
    const double t = std::ldexp(1.0, sc.scale(k));
    plateau = plateau && (*out.window)(lattice_index(g, 1.5 * t) / g.period / t) == 1.0;
  }
  for (int i = 0; i <= 4096; ++i) nonneg = nonneg && (*out.window)(2.0 * i / 4096.0) >= 0.0;
  out.checks.push_back({"window_center", plateau, false, "window equals 1 at 3/2 of every active scale"});
  out.checks.push_back({"window_nonnegative", nonneg, false, "window >= 0"});
  if (with_gamma) {
    out.gamma = std::make_shared<PositiveKernelProfile>(g.dim, sc.M);
    const double radius = std::ldexp(1.0, -sc.M + 1);
    double least = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 512; ++i) least = std::min(least, out.gamma->spatial(radius * i / 512.0));
    out.gamma_at_zero = out.gamma->spatial(0.0);
    out.checks.push_back({"gamma_lower", least >= 1.0 - 1e-12, false, "Gamma >= 1 on the ball of radius 2^{-M+1}, min " + std::to_string(least)});
  }
  return out;
}

// ---- fields ----------------------------------------------------------------------------

namespace detail {

/// fn(flat, r) for lattice points with lo < |xi| < hi.
template <class Fn>
void for_each_in_annulus(const TorusGrid& g, double lo, double hi, Fn&& fn) {
  const long long half = static_cast<long long>(g.n() / 2);
  const long long reach = std::min(static_cast<long long>(std::ceil(hi * g.period)), half);
  const long long a = std::max(-reach, -half), b = std::min(reach, half - 1);
  const long long c0 = g.dim == 2 ? a : 0, c1 = g.dim == 2 ? b : 0;
  for (long long m0 = a; m0 <= b; ++m0)
    for (long long m1 = c0; m1 <= c1; ++m1) {
      const double r = std::hypot(static_cast<double>(m0), static_cast<double>(m1)) / g.period;
      if (r > lo && r < hi) fn(g.flat(g.wrap_index(m0), g.wrap_index(m1)), m0, m1, r);
    }
}

inline double unit_bump(double rho) { return rho >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - rho * rho)); }

}  // namespace detail

/// Adds weight * window(|xi| / 2^t) * G(xi + v_t) to out, v_t = (3/2) 2^t e_1: the spectrum of
/// weight * Lambda_t * (g e^{-2 pi i <v_t, .>}).
inline void add_window_piece(const FrequencyField& G, int t, double weight, const WindowProfile& window, FrequencyField& out) {
  const auto& g = G.grid;
  const double scale = std::ldexp(1.0, t);
  const long long v = lattice_index(g, 1.5 * scale);
  detail::for_each_in_annulus(g, WindowProfile::kOuterLo * scale, WindowProfile::kOuterHi * scale, [&](std::size_t flat, long long m0, long long m1, double r) {
    out.coeffs[flat] += weight * window(r / scale) * G.coeffs[g.flat(g.wrap_index(m0 + v), g.wrap_index(m1))];
  });
}

/// Spectrum of f_L = sum_k 2^{-order t_k} Lambda_{t_k} * (g_{t_k} e^{-2 pi i <v_{t_k}, .>}) with gs[k - first] = g_{t_k}.
inline FrequencyField lambda_field_spectrum(const LacunaryScheme& sc, const WindowProfile& window, double order, const std::vector<SampledField>& gs) {
  if (gs.size() != static_cast<std::size_t>(sc.L - sc.first + 1)) throw StructuralError("lambda field: one g per scale");
  FrequencyField out(gs.front().grid);
  for (int k = sc.first; k <= sc.L; ++k) {
    const int t = sc.scale(k);
    add_window_piece(dft_forward(gs[static_cast<std::size_t>(k - sc.first)]), t, std::pow(2.0, -order * t), window, out);
  }
  return out;
}

/// The symbol sum_{k >= 1} 2^{km} window(xi / 2^k) e^{2 pi i <v_k, x>}, truncated at the top scale.
inline SeparableSymbol lambda_symbol(const LacunaryScheme& sc, std::shared_ptr<const DyadicPartition> P, double m) {
  return build_named_symbol({.kind = "modulated", .m = m, .first = 1, .last = sc.top()}, std::move(P));
}

/// Random selector/sign fields h_k^{omega,t} for k = first..L on cubes of side 2^{-t_k-M}
/// inside the box [0, 2^{-mu}]^d (mu = 0: the unit cube).
struct RandomDraw {
  std::vector<SampledField> h;
  std::size_t cubes = 0, selected = 0;
};

inline std::mt19937_64 trial_engine(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

inline RandomDraw draw_random(const LacunaryScheme& sc, const TorusGrid& g, int mu, std::uint64_t seed, std::uint64_t trial) {
  if (sc.L < 1) throw ConfigError("random draw: L must be positive");
  auto rng = trial_engine(seed, trial);
  const double prob = 1.0 / sc.L;
  const std::size_t box = cube_cells(g, mu);
  RandomDraw out;
  for (int k = sc.first; k <= sc.L; ++k) {
    const std::size_t cells = cube_cells(g, sc.scale(k) + sc.M), per = box / cells;
    SampledField h(g);
    const std::size_t count = g.dim == 1 ? per : per * per;
    for (std::size_t q = 0; q < count; ++q) {
      const bool theta = static_cast<double>(rng() >> 11) * 0x1p-53 < prob;
      const double sign = (rng() & 1U) ? 1.0 : -1.0;
      ++out.cubes;
      if (!theta) continue;
      ++out.selected;
      const std::size_t a0 = (g.dim == 1 ? q : q / per) * cells, a1 = g.dim == 1 ? 0 : (q % per) * cells;
      for (std::size_t i = 0; i < cells; ++i)
        for (std::size_t j = 0; j < (g.dim == 1 ? 1 : cells); ++j) h.values[g.flat(a0 + i, a1 + j)] = sign;
    }
    out.h.push_back(std::move(h));
  }
  return out;
}

/// g_t(x) = 2^{t d / p} g(2^t x), g a nonnegative bump of radius 2^{-M} centred at the origin.
inline SampledField hp_bump(const TorusGrid& g, int t, int M, double p) {
  SampledField f(g);
  const double amp = std::pow(2.0, t * g.dim / p), radius = std::ldexp(1.0, -t - M);
  for (std::size_t i = 0; i < g.size(); ++i) f.values[i] = amp * detail::unit_bump(g.torus_distance(0, i) / radius);
  return f;
}

/// ||g||_{L^1} of the unscaled bump (radius 2^{-M}).
inline double hp_bump_l1(int d, int M) {
  using boost::math::quadrature::gauss_kronrod;
  if (d == 1) return std::ldexp(2.0 * gauss_kronrod<double, 61>::integrate(detail::unit_bump, 0.0, 1.0, 15, 1e-14), -M);
  auto f = [](double r) { return 2.0 * kPi * r * detail::unit_bump(r); };
  return std::ldexp(gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-14), -2 * M);
}

// ---- exact identities ------------------------------------------------------------------

struct IdentityReport {
  std::string name;
  int l = 0, n = 0;
  double max_rel_error = 0;
  bool ok = false;
};

/// (phi_{t_l} + phi_{t_l+1}) * d_{t_n} = 2^{-s t_n} (phi_{t_l} + phi_{t_l+1}) * g_{t_n} for l < n,
/// where d_{t_n} is the image of the n-th piece of f_L under the modulated symbol.
inline IdentityReport double_condition_check(const LacunaryScheme& sc, std::shared_ptr<const DyadicPartition> part, double s, int l, int n,
                                             const SampledField& g_n, double tol = 1e-10) {
  require_valid(sc);
  if (!(l < n)) throw ConfigError("band identity needs l < n (the diagonal term is excluded)");
  if (l < sc.first || n > sc.L) throw RangeError("band identity: indices outside the scheme");
  const auto& P = *part;
  const int tl = sc.scale(l), tn = sc.scale(n);
  WindowProfile window(P.cutoff_ptr());
  FrequencyField G = dft_forward(g_n), piece(G.grid);
  add_window_piece(G, tn, std::pow(2.0, -s * tn), window, piece);
  auto term = build_named_symbol({.kind = "modulated", .m = 0, .first = tn, .last = tn}, part);
  FrequencyField D = apply_symbol_spectrum(term, piece);
  FrequencyField lhs(G.grid), rhs(G.grid);
  for (int k : {tl, tl + 1})
    P.for_each_in_band(k, [&](std::size_t i, double v) {
      lhs.coeffs[i] += v * D.coeffs[i];
      rhs.coeffs[i] += std::pow(2.0, -s * tn) * v * G.coeffs[i];
    });
  auto a = dft_inverse(lhs), b = dft_inverse(rhs);
  double err = 0, ref = b.sup_norm();
  for (std::size_t i = 0; i < a.values.size(); ++i) err = std::max(err, std::abs(a.values[i] - b.values[i]));
  IdentityReport r{"band_identity", l, n, ref > 0 ? err / ref : err, false};
  r.ok = r.max_rel_error <= tol;
  return r;
}

/// Weights v_k = k^{-power} log(k + 1)^{-log_power}.
struct VSequence {
  double power = 1.0, log_power = 0.0;
  double operator()(int k) const { return std::pow(static_cast<double>(k), -power) * std::pow(std::log(k + 1.0), -log_power); }
};

inline VSequence v_preset(const std::string& name) {
  if (name == "divergence") return {1.0, 0.0};
  if (name == "control") return {2.0, 0.0};
  throw ConfigError("unknown v preset '" + name + "'");
}

/// Spectrum of f_L = sum_k v_k 2^{-t_k (s+m)} G(x - 2^{-t_k} e_1) e^{2 pi i 2^{t_k} x_1}, G^ = eta(2|xi|).
inline FrequencyField ching_field_spectrum(const LacunaryScheme& sc, const DyadicPartition& P, double order, const VSequence& v) {
  const auto& g = P.grid();
  const auto& cut = *P.cutoff_ptr();
  FrequencyField out(g);
  for (int k = sc.first; k <= sc.L; ++k) {
    const int t = sc.scale(k);
    const double weight = v(k) * std::pow(2.0, -order * t), shift = std::ldexp(1.0, -t);
    const long long c = lattice_index(g, std::ldexp(1.0, t));
    const long long reach = static_cast<long long>(std::ceil(g.period));
    for (long long d0 = -reach; d0 <= reach; ++d0)
      for (long long d1 = g.dim == 2 ? -reach : 0; d1 <= (g.dim == 2 ? reach : 0); ++d1) {
        const double e0 = d0 / g.period, e1 = d1 / g.period, r = std::hypot(e0, e1);
        const double amp = unit_bump_spectrum(cut, r);
        if (amp == 0.0) continue;
        const double ph = -2.0 * kPi * e0 * shift;
        out.coeffs[g.flat(g.wrap_index(c + d0), g.wrap_index(d1))] += weight * amp * cplx{std::cos(ph), std::sin(ph)};
      }
  }
  return out;
}

/// T_a f_L = G(x) sum_k 2^{-s t_k} v_k for the ching pair, checked on the grid.
inline IdentityReport ching_closed_form_check(const LacunaryScheme& sc, std::shared_ptr<const DyadicPartition> part, double s, double m,
                                              const VSequence& v, double tol = 1e-10) {
  require_valid(sc);
  const auto& P = *part;
  const auto& g = P.grid();
  auto a = build_named_symbol({.kind = "ching", .m = m, .first = sc.first, .last = sc.L, .c = sc.c}, part);
  auto image = dft_inverse(apply_symbol_spectrum(a, ching_field_spectrum(sc, P, s + m, v)));
  FrequencyField Gs(g);
  detail::for_each_in_annulus(g, -1.0, 1.0 + 1e-12, [&](std::size_t flat, long long, long long, double r) {
    Gs.coeffs[flat] = unit_bump_spectrum(*P.cutoff_ptr(), r);
  });
  auto G = dft_inverse(Gs);
  double total = 0;
  for (int k = sc.first; k <= sc.L; ++k) total += std::pow(2.0, -s * sc.scale(k)) * v(k);
  double err = 0, ref = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    err = std::max(err, std::abs(image.values[i] - total * G.values[i]));
    ref = std::max(ref, std::abs(total * G.values[i]));
  }
  IdentityReport r{"ching_closed_form", sc.first, sc.L, err / ref, false};
  r.ok = r.max_rel_error <= tol;
  return r;
}

// ---- analytic evaluators ---------------------------------------------------------------

struct ChingRow {
  int L = 0;
  double partial_sum = 0;  // sum 2^{-s t_k} v_k
  double norm_proxy = 0;   // (sum v_k^q)^{1/q}
};

inline std::vector<ChingRow> ching_partial_sums(int c, int first, double s, double q, const VSequence& v, int L_max) {
  if (!(q > 0)) throw ConfigError("ching sums: q must be positive");
  std::vector<ChingRow> rows;
  double sum = 0, vq = 0;
  for (int k = first; k <= L_max; ++k) {
    sum += std::pow(2.0, -s * c * k) * v(k);
    vq = std::isinf(q) ? std::max(vq, v(k)) : vq + std::pow(v(k), q);
    rows.push_back({k, sum, std::isinf(q) ? vq : std::pow(vq, 1.0 / q)});
  }
  return rows;
}

/// Finite-L value of the random lower bound:
/// [ (1/L) sum_{l=first}^{L-first} ( sum_{n=1}^{L-l} 2^{-2(s+d-d/q) t_n} (1 - 1/L)^{(2/q) 2^{t_n d}} )^{q/2} ]^{1/q}.
inline double random_lower_bound(const LacunaryScheme& sc, int d, double s, double q) {
  if (sc.L < 2) return 0.0;
  const double e = s + d - d / q, keep = 1.0 - 1.0 / sc.L;
  double outer = 0;
  for (int l = sc.first; l <= sc.L - sc.first; ++l) {
    double inner = 0;
    for (int n = 1; n <= sc.L - l; ++n) {
      const double t = sc.scale(n);
      inner += std::pow(2.0, -2.0 * e * t) * std::pow(keep, 2.0 / q * std::pow(2.0, t * d));
    }
    outer += std::pow(inner, q / 2.0);
  }
  return std::pow(outer / sc.L, 1.0 / q);
}

/// True while the asymptotic window floor(log2(L) / (c d)) is still empty.
inline bool pre_asymptotic(const LacunaryScheme& sc, int d) { return std::floor(std::log2(static_cast<double>(sc.L)) / (sc.c * d)) < 1; }

/// Lower bound for the h^p construction's main term:
/// ||g||_1 (|annulus| 2^{t d})^{1/p} [ sum_{j=first}^{L-first} ( sum_{n=1}^{L-j} 2^{-t_n (s+d-d/p)} )^p ]^{1/p}.
inline double hp_lower_bound(const LacunaryScheme& sc, int d, double s, double p) {
  const double e = s + d - d / p;
  const double shell = (d == 1 ? 2.0 : kPi) * (1.0 - std::ldexp(1.0, -d)) * std::ldexp(1.0, -sc.M * d);
  double outer = 0;
  for (int j = sc.first; j <= sc.L - sc.first; ++j) {
    double inner = 0;
    for (int n = 1; n <= sc.L - j; ++n) inner += std::pow(2.0, -e * sc.scale(n));
    outer += std::pow(inner, p);
  }
  return hp_bump_l1(d, sc.M) * std::pow(shell * outer, 1.0 / p);
}

/// The same main term evaluated on the grid:
/// [ sum_j int_{2^{-t_j-M-1} <= |x| <= 2^{-t_j-M}} | sum_n 2^{-s t_n} Gamma_{t_j} * g_{t_{n+j}} |^p dx ]^{1/p}.
inline double hp_main_term_on_grid(const LacunaryScheme& sc, const DyadicPartition& P, const PositiveKernelProfile& gamma, double s, double p) {
  const auto& g = P.grid();
  std::vector<FrequencyField> G;
  for (int k = sc.first + 1; k <= sc.L; ++k) G.push_back(dft_forward(hp_bump(g, sc.scale(k), sc.M, p)));
  double total = 0;
  for (int j = sc.first; j <= sc.L - sc.first; ++j) {
    const double scale = std::ldexp(1.0, sc.scale(j));
    FrequencyField acc(g);
    for (int n = 1; n <= sc.L - j; ++n) {
      const auto& Gn = G[static_cast<std::size_t>(n + j - sc.first - 1)];
      const double w = std::pow(2.0, -s * sc.scale(n));
      detail::for_each_in_annulus(g, scale, 2.0 * scale, [&](std::size_t flat, long long, long long, double r) {
        acc.coeffs[flat] += w * gamma.spectral(r / scale) * Gn.coeffs[flat];
      });
    }
    auto conv = dft_inverse(acc);
    const double outer = std::ldexp(1.0, -sc.scale(j) - sc.M), inner = outer / 2.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double r = g.torus_distance(0, i);
      if (r >= inner && r <= outer) total += std::pow(std::abs(conv.values[i]), p) * g.cell_volume();
    }
  }
  return std::pow(total, 1.0 / p);
}

/// sup-norm of Pi_{t+i} applied to phi(2^t .), i in {-1, 0, 1}: the integral of phi^(u) phi^(2^{-i} u).
inline double band_overlap(const SmoothCutoff& cut, int d, int i) {
  using boost::math::quadrature::gauss_kronrod;
  auto phi = [&](double u) { return cut.eta(u) - cut.eta(2.0 * u); };
  auto f = [&](double u) { return phi(u) * phi(std::ldexp(u, -i)) * (d == 1 ? 2.0 : 2.0 * kPi * u); };
  return gauss_kronrod<double, 61>::integrate(f, 0.25, 4.0, 15, 1e-14);
}

/// ||T_a g_L||_{B_inf^{s,q}} for the p = infinity construction: one bump per lacunary scale
/// k = first..L-1, each seen by three bands.
inline double bspace_image_norm(const LacunaryScheme& sc, const SmoothCutoff& cut, int d, double s, double q) {
  double ov[3];
  for (int i = -1; i <= 1; ++i) ov[i + 1] = band_overlap(cut, d, i);
  double acc = 0;
  for (int k = sc.first; k <= sc.L - 1; ++k)
    for (int i = -1; i <= 1; ++i) {
      const double term = std::pow(2.0, s * (sc.scale(k) + i)) * ov[i + 1];
      acc = std::isinf(q) ? std::max(acc, term) : acc + std::pow(term, q);
    }
  return std::pow(2.0, -s * sc.top()) * (std::isinf(q) ? acc : std::pow(acc, 1.0 / q));
}

/// g_L = 2^{-s t_L} e^{-2 pi i 2^{t_L} x_1} sum_{k=first}^{L-1} phi(2^{t_k}(x - x_k)) on the grid,
/// with the bump centres x_k spread over the period.
inline SampledField bspace_field(const LacunaryScheme& sc, const DyadicPartition& P, double s) {
  const auto& g = P.grid();
  FrequencyField F(g);
  const long long top = lattice_index(g, std::ldexp(1.0, sc.top()));
  const int count = sc.L - sc.first;
  for (int k = sc.first; k <= sc.L - 1; ++k) {
    const int t = sc.scale(k);
    const std::size_t centre = (g.n() / static_cast<std::size_t>(count)) * static_cast<std::size_t>(k - sc.first);
    const double x0 = g.point(g.flat(centre, 0))[0], amp = std::pow(2.0, -s * sc.top()) * std::ldexp(1.0, -t * g.dim);
    detail::for_each_in_annulus(g, std::ldexp(1.0, t - 1), std::ldexp(1.0, t + 1), [&](std::size_t, long long m0, long long m1, double r) {
      const double ph = -2.0 * kPi * (m0 / g.period) * x0;
      F.coeffs[g.flat(g.wrap_index(m0 - top), g.wrap_index(m1))] += amp * P.radial(t, r) * cplx{std::cos(ph), std::sin(ph)};
    });
  }
  return dft_inverse(F);
}

// ---- Monte Carlo helpers ---------------------------------------------------------------

struct KhintchineRow {
  double p = 0, lp_mean = 0, l2 = 0, ratio = 0;
};

/// (E |sum a_n r_n|^p)^{1/p} over random signs, against (sum |a_n|^2)^{1/2}.
inline KhintchineRow khintchine_check(const std::vector<cplx>& a, double p, int samples, std::uint64_t seed) {
  auto rng = trial_engine(seed, 0);
  double acc = 0;
  for (int i = 0; i < samples; ++i) {
    cplx s{0, 0};
    for (const auto& x : a) s += (rng() & 1U) ? x : -x;
    acc += std::pow(std::abs(s), p);
  }
  double l2 = 0;
  for (const auto& x : a) l2 += std::norm(x);
  KhintchineRow r{p, std::pow(acc / samples, 1.0 / p), std::sqrt(l2), 0};
  r.ratio = r.lp_mean / r.l2;
  return r;
}

/// ||(sum_k (Peetre_{sigma, 2^{t_k}} |h_k|)^q)^{1/q}||_{L^p}^p, or for mu > 0 the D_mu cube supremum
/// of the mean of sum_k (...)^q.
inline double random_upper_functional(const RandomDraw& draw, const LacunaryScheme& sc, double p, double q, double sigma, int mu = 0) {
  const auto& g = draw.h.front().grid;
  std::vector<double> acc(g.size(), 0.0);
  for (std::size_t i = 0; i < draw.h.size(); ++i) {
    SampledField mod(g);
    for (std::size_t x = 0; x < g.size(); ++x) mod.values[x] = std::abs(draw.h[i].values[x]);
    auto pm = peetre_maximal_values(mod, sigma, std::ldexp(1.0, sc.scale(sc.first + static_cast<int>(i))));
    for (std::size_t x = 0; x < g.size(); ++x) acc[x] += power(pm[x], q);
  }
  if (mu > 0) return dyadic_sup_power_mean(g, acc, mu, q);
  double total = 0;
  for (double v : acc) total += power(v, p / q);
  return total * g.cell_volume();
}

struct SlopeFit {
  double slope = 0, intercept = 0, residual = 0;
};

/// Least-squares slope of log(ratio) against log(L); residual is the RMS misfit.
inline SlopeFit fit_loglog_slope(const std::vector<double>& Ls, const std::vector<double>& ratios) {
  if (Ls.size() != ratios.size() || Ls.size() < 3) throw ConfigError("slope fit needs at least 3 rows");
  const std::size_t n = Ls.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(Ls[i] > 0) || !(ratios[i] > 0)) throw ConfigError("slope fit needs positive L and ratios");
    x[i] = std::log(Ls[i]);
    y[i] = std::log(ratios[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw RangeError("slope fit: all L equal");
  SlopeFit f{sxy / sxx, 0, 0};
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

// ---- experiments -----------------------------------------------------------------------

struct ExperimentConfig {
  Construction kind = Construction::random;
  int d = 1, c = 4, M = 1, first = 1;
  std::vector<int> L_list;
  double s = 0, m = 0;
  SpaceSpec space;
  int trials = 64;
  std::uint64_t seed = 0;
  double B = 1;
  int mu = 1;                // random_mu box exponent
  double sigma = 0;          // 0: max(d/p, d/q) + 1/2
  VSequence v;               // ching weights
  int cross_check_max = 3;   // deterministic: grid cross-check for L up to this
  int J_cap = 22;
  std::string expect;        // "growth", "bounded", or empty for the default
};

struct GrowthRow {
  int L = 0;
  double mean_ratio = 0, std = 0, lower_bound_analytic = 0;
  double slope_running = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json extra = nlohmann::json::object();
};

struct GrowthTable {
  std::string kind;
  int c = 0;
  std::vector<GrowthRow> rows;
  double slope = std::numeric_limits<double>::quiet_NaN(), residual = std::numeric_limits<double>::quiet_NaN();
  double predicted = std::numeric_limits<double>::quiet_NaN();
  std::string verdict, expect;
  bool pass = false;
  std::vector<std::string> notices;
  int max_feasible_L = -1;
};

inline double critical_index(const ExperimentConfig& cfg) {
  const double d = cfg.d;
  switch (cfg.kind) {
    case Construction::random:
    case Construction::random_mu: return d / std::min(1.0, cfg.space.q) - d;
    case Construction::deterministic: return d / std::min(1.0, cfg.space.p) - d;
    default: return 0.0;
  }
}

inline double predicted_exponent(const ExperimentConfig& cfg) {
  const double d = cfg.d, s = cfg.s;
  switch (cfg.kind) {
    case Construction::random:
    case Construction::random_mu: return s <= critical_index(cfg) ? -(s + d - d / cfg.space.q) / (2 * d) : 0.0;
    case Construction::deterministic: return 0.0 - (s + d - d / cfg.space.p);
    case Construction::bspace_infty: return s == 0 ? 1.0 / cfg.space.q : std::numeric_limits<double>::quiet_NaN();
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

inline GrowthRow random_row(const ExperimentConfig& cfg, LacunaryScheme sc) {
  const bool boxed = cfg.kind == Construction::random_mu;
  const int mu = boxed ? cfg.mu : 0;
  auto g = grid_for(sc, cfg.kind, cfg.d, cfg.B, mu, cfg.J_cap);
  auto part = std::make_shared<const DyadicPartition>(build_partition(g));
  auto window = build_gamma_lambda(sc, *part, false);
  auto a = lambda_symbol(sc, part, cfg.m);
  const double q = cfg.space.q, p = cfg.space.p;
  const double sigma = cfg.sigma > 0 ? cfg.sigma : std::max(cfg.d / p, cfg.d / q) + 0.5;
  struct Trial {
    double ratio = 0, num = 0, den = 0, upper = 0, selected = 0, cubes = 0;
  };
  std::vector<Trial> out(static_cast<std::size_t>(cfg.trials));
  parallel_for(out.size(), [&](std::size_t i) {
    auto draw = draw_random(sc, g, mu, cfg.seed ^ (static_cast<std::uint64_t>(sc.L) << 48), i);
    auto F = lambda_field_spectrum(sc, *window.window, cfg.s + cfg.m, draw.h);
    auto f = dft_inverse(F);
    auto Tf = dft_inverse(apply_symbol_spectrum(a, F));
    Trial t;
    if (boxed) {
      t.num = f_infty_mu_functional(Tf, cfg.s, q, mu, *part, Side::lhs);
      t.den = f_infty_mu_functional(f, cfg.s + cfg.m, q, mu, *part, Side::rhs);
    } else {
      t.num = norm_of(Tf, {cfg.space.family, p, q, cfg.s}, *part).total;
      t.den = norm_of(f, {cfg.space.family, p, q, cfg.s + cfg.m}, *part).total;
    }
    t.ratio = t.den > 0 ? t.num / t.den : 0.0;
    t.upper = random_upper_functional(draw, sc, p, q, sigma, mu);
    t.selected = static_cast<double>(draw.selected);
    t.cubes = static_cast<double>(draw.cubes);
    out[i] = t;
  });
  std::vector<double> ratios, ups;
  double sel = 0, cubes = 0, num = 0, den = 0;
  std::size_t degenerate = 0;
  for (const auto& t : out) {
    if (t.den > 0)
      ratios.push_back(t.ratio);
    else
      ++degenerate;
    ups.push_back(t.upper);
    sel += t.selected;
    cubes += t.cubes;
    num += t.num;
    den += t.den;
  }
  if (ratios.empty()) throw RangeError("random experiment: every trial drew an empty field");
  GrowthRow row;
  row.L = sc.L;
  mean_std(ratios, row.mean_ratio, row.std);
  row.lower_bound_analytic = random_lower_bound(sc, cfg.d, cfg.s, q);
  double up_mean, up_sd;
  mean_std(ups, up_mean, up_sd);
  const double upper = boxed ? up_mean : std::pow(up_mean, 1.0 / p);
  row.extra = {{"J", g.log2_size},
               {"trials", cfg.trials},
               {"degenerate_trials", degenerate},
               {"mean_image_norm", num / cfg.trials},
               {"mean_input_norm", den / cfg.trials},
               {"upper_functional", upper},
               {"sigma", sigma},
               {"selection_rate", sel / cubes},
               {"pre_asymptotic", pre_asymptotic(sc, cfg.d)}};
  if (boxed) row.extra["mu"] = mu;
  return row;
}

inline GrowthRow deterministic_row(const ExperimentConfig& cfg, LacunaryScheme sc) {
  GrowthRow row;
  row.L = sc.L;
  const double p = cfg.space.p;
  row.lower_bound_analytic = hp_lower_bound(sc, cfg.d, cfg.s, p);
  row.mean_ratio = row.lower_bound_analytic / std::pow(static_cast<double>(sc.L), 1.0 / p);
  row.extra = {{"source", "analytic"}};
  if (sc.L <= cfg.cross_check_max && sc.L - sc.first >= sc.first) {
    auto g = grid_for(sc, Construction::deterministic, cfg.d, cfg.B, 0, cfg.J_cap);
    auto part = std::make_shared<const DyadicPartition>(build_partition(g));
    auto prof = build_gamma_lambda(sc, *part, true);
    for (const auto& c : prof.checks)
      if (!c.ok) throw ConfigError("profile check failed: " + c.name + " (" + c.detail + ")");
    const double grid_term = hp_main_term_on_grid(sc, *part, *prof.gamma, cfg.s, p);
    std::vector<SampledField> gs;
    for (int k = sc.first; k <= sc.L; ++k) gs.push_back(hp_bump(g, sc.scale(k), sc.M, p));
    auto F = lambda_field_spectrum(sc, *prof.window, cfg.s + cfg.m, gs);
    auto a = lambda_symbol(sc, part, cfg.m);
    const double num = norm_of(dft_inverse(apply_symbol_spectrum(a, F)), {cfg.space.family, p, cfg.space.q, cfg.s}, *part).total;
    const double den = norm_of(dft_inverse(F), {cfg.space.family, p, cfg.space.q, cfg.s + cfg.m}, *part).total;
    row.extra["J"] = g.log2_size;
    row.extra["grid_main_term"] = grid_term;
    row.extra["grid_over_analytic"] = grid_term / row.lower_bound_analytic;
    row.extra["measured_ratio"] = num / den;
    row.extra["gamma_at_zero"] = prof.gamma_at_zero;
  }
  return row;
}

}  // namespace detail

inline GrowthTable run_blowup_experiment(const ExperimentConfig& cfg) {
  if (cfg.L_list.empty()) throw ConfigError("experiment: empty L list");
  cfg.space.validate();
  if (cfg.d != 1 && cfg.d != 2) throw ConfigError("experiment: d must be 1 or 2");
  if (cfg.trials < 1) throw ConfigError("experiment: trials must be positive");
  std::vector<int> Ls = cfg.L_list;
  std::sort(Ls.begin(), Ls.end());
  Ls.erase(std::unique(Ls.begin(), Ls.end()), Ls.end());

  GrowthTable tab;
  tab.kind = to_string(cfg.kind);
  tab.c = cfg.c;
  tab.predicted = predicted_exponent(cfg);
  const bool growth_expected = cfg.s <= critical_index(cfg);
  tab.expect = cfg.expect.empty() ? (growth_expected ? "growth" : "bounded") : cfg.expect;
  if (tab.expect != "growth" && tab.expect != "bounded") throw ConfigError("expect must be 'growth' or 'bounded'");

  std::unique_ptr<SmoothCutoff> cut;
  for (int L : Ls) {
    LacunaryScheme sc{cfg.c, cfg.M, L, cfg.first, {}};
    GrowthRow row;
    try {
      switch (cfg.kind) {
        case Construction::ching: {
          validate_scheme(sc, cfg.kind, TorusGrid::make(cfg.d, 10, cfg.B));
          for (const auto& x : sc.checks)
            if (!x.ok && !x.grid_dependent) require_valid(sc);
          auto rows = ching_partial_sums(cfg.c, cfg.first, cfg.s, cfg.space.q, cfg.v, L);
          row.L = L;
          row.lower_bound_analytic = rows.back().partial_sum;
          row.mean_ratio = rows.back().partial_sum / rows.back().norm_proxy;
          row.extra = {{"partial_sum", rows.back().partial_sum}, {"norm_proxy", rows.back().norm_proxy}};
          break;
        }
        case Construction::bspace_infty: {
          validate_scheme(sc, cfg.kind, TorusGrid::make(cfg.d, 10, cfg.B));
          for (const auto& x : sc.checks)
            if (!x.ok && !x.grid_dependent) require_valid(sc);
          if (!cut) cut = std::make_unique<SmoothCutoff>();
          row.L = L;
          row.mean_ratio = row.lower_bound_analytic = bspace_image_norm(sc, *cut, cfg.d, cfg.s, cfg.space.q);
          row.extra = {{"bumps", L - cfg.first}};
          break;
        }
        case Construction::deterministic: row = detail::deterministic_row(cfg, sc); break;
        default: row = detail::random_row(cfg, sc); break;
      }
    } catch (const CapacityError& e) {
      tab.notices.push_back(std::string("L = ") + std::to_string(L) + " infeasible: " + e.what());
      continue;
    }
    tab.max_feasible_L = L;
    tab.rows.push_back(std::move(row));
    if (tab.rows.size() >= 3) {
      std::vector<double> x, y;
      for (const auto& r : tab.rows) {
        x.push_back(r.L);
        y.push_back(r.mean_ratio);
      }
      bool positive = std::all_of(y.begin(), y.end(), [](double v) { return v > 0; });
      if (positive) tab.rows.back().slope_running = fit_loglog_slope(x, y).slope;
    }
  }
  if (!tab.notices.empty()) tab.notices.push_back("max feasible L = " + std::to_string(tab.max_feasible_L));
  if (tab.rows.empty()) {
    tab.verdict = "infeasible";
    return tab;
  }

  bool increasing = true;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (std::size_t i = 0; i < tab.rows.size(); ++i) {
    const double r = tab.rows[i].mean_ratio;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    if (i > 0 && !(r > tab.rows[i - 1].mean_ratio)) increasing = false;
  }
  if (!std::isnan(tab.rows.back().slope_running)) {
    std::vector<double> x, y;
    for (const auto& r : tab.rows) {
      x.push_back(r.L);
      y.push_back(r.mean_ratio);
    }
    auto fit = fit_loglog_slope(x, y);
    tab.slope = fit.slope;
    tab.residual = fit.residual;
  }
  const bool slope_ok = std::isnan(tab.slope) || tab.slope > 0;
  const bool bounded = lo > 0 && hi / lo <= 3.0;
  tab.verdict = (increasing && slope_ok && tab.rows.size() >= 2) ? "growing" : bounded ? "bounded" : "inconclusive";
  tab.pass = tab.expect == "growth" ? tab.verdict == "growing" : bounded;
  return tab;
}

inline nlohmann::json to_json(const GrowthTable& t) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"L", r.L},
                    {"mean_ratio", num(r.mean_ratio)},
                    {"std", num(r.std)},
                    {"lower_bound_analytic", num(r.lower_bound_analytic)},
                    {"slope_running", num(r.slope_running)},
                    {"extra", r.extra}});
  return {{"kind", t.kind},          {"c", t.c},          {"rows", rows},         {"slope", num(t.slope)}, {"residual", num(t.residual)},
          {"predicted", num(t.predicted)}, {"verdict", t.verdict}, {"expect", t.expect}, {"pass", t.pass}, {"notices", t.notices},
          {"max_feasible_L", t.max_feasible_L}};
}

}  // namespace pph
