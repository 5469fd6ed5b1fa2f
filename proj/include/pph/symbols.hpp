#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pph/grid.hpp"
#include "pph/littlewood_paley.hpp"
#include "pph/parallel.hpp"
#include "pph/profiles.hpp"

namespace pph {

/// One spatial Fourier mode c * exp(2 pi i <n/B, x>), n an integer lattice index.
struct Mode {
  long long n0 = 0, n1 = 0;
  cplx c{1, 0};
};

using Envelope = std::function<cplx(double, double)>;
using SparseTable = std::vector<std::pair<std::size_t, cplx>>;

/// F(xi) G(x): envelope F given both as a continuous profile and as its nonzero lattice
/// samples, spatial factor G as a sparse spectrum. The envelope vanishes outside lo <= |xi| <= hi.
struct SymbolTerm {
  Envelope envelope;
  double lo = 0, hi = 0;
  SparseTable table;
  std::vector<Mode> modes;
  std::string label;
};

struct SeparableSymbol {
  TorusGrid grid;
  double order = 0;
  std::string kind = "custom";
  nlohmann::json params = nlohmann::json::object();
  std::vector<SymbolTerm> terms;
};

/// Full (x, xi) table for small one-dimensional grids; entry [x * N + xi_flat].
struct DenseSymbol {
  TorusGrid grid;
  double order = 0;
  std::vector<cplx> table;

  static constexpr int kMaxLog2 = 12;
  DenseSymbol() = default;
  DenseSymbol(const TorusGrid& g, double m) : grid(g), order(m) {
    if (g.dim != 1 || g.log2_size > kMaxLog2) throw CapacityError("dense symbol: only d = 1 with N <= 2^12");
    table.assign(g.n() * g.n(), cplx{0, 0});
  }
  cplx& at(std::size_t x, std::size_t xi) { return table[x * grid.n() + xi]; }
  const cplx& at(std::size_t x, std::size_t xi) const { return table[x * grid.n() + xi]; }
};

// ---- lattice helpers --------------------------------------------------------

/// Integer lattice index of a frequency, which must sit on the lattice.
inline long long lattice_index(const TorusGrid& g, double freq) {
  double m = freq * g.period, r = std::round(m);
  if (std::abs(m - r) > 1e-9 * std::max(1.0, std::abs(m))) throw ConfigError("frequency " + std::to_string(freq) + " is not on the lattice");
  return static_cast<long long>(r);
}

inline bool inside_lattice(const TorusGrid& g, long long m) {
  auto h = static_cast<long long>(g.n() / 2);
  return m > -h && m < h;
}

/// Nonzero lattice samples of env on lo <= |xi| <= hi, Nyquist rows included.
inline SparseTable tabulate_envelope(const TorusGrid& g, const Envelope& env, double lo, double hi) {
  SparseTable out;
  const auto half = static_cast<long long>(g.n() / 2);
  const auto reach = static_cast<long long>(std::min(std::floor(hi * g.period), static_cast<double>(half)));
  const long long first = std::max(-reach, -half), last = std::min(reach, half - 1);
  auto visit = [&](long long a, long long b) {
    double x0 = static_cast<double>(a) / g.period, x1 = static_cast<double>(b) / g.period;
    double r = std::hypot(x0, x1);
    if (r < lo || r > hi) return;
    cplx v = env(x0, x1);
    if (v != cplx{0, 0}) out.emplace_back(g.flat(g.wrap_index(a), g.dim == 2 ? g.wrap_index(b) : 0), v);
  };
  for (long long a = first; a <= last; ++a) {
    if (g.dim == 1) {
      visit(a, 0);
      continue;
    }
    for (long long b = first; b <= last; ++b) visit(a, b);
  }
  std::sort(out.begin(), out.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
  return out;
}

inline SymbolTerm make_term(const TorusGrid& g, Envelope env, double lo, double hi, std::vector<Mode> modes, std::string label) {
  SymbolTerm t;
  t.envelope = std::move(env);
  t.lo = lo;
  t.hi = hi;
  t.table = tabulate_envelope(g, t.envelope, lo, hi);
  t.modes = std::move(modes);
  t.label = std::move(label);
  return t;
}

namespace detail {

inline const std::vector<cplx>& twiddles(std::size_t n) {
  static thread_local std::map<std::size_t, std::vector<cplx>> cache;
  auto& tw = cache[n];
  if (tw.empty()) {
    tw.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      double t = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n);
      tw[j] = {std::cos(t), std::sin(t)};
    }
  }
  return tw;
}

inline std::size_t phase_index(const TorusGrid& g, const Mode& md, std::size_t flat) {
  const auto N = static_cast<long long>(g.n());
  auto a = g.axes(flat);
  long long ph = (md.n0 % N) * static_cast<long long>(a[0]) % N;
  if (g.dim == 2) ph = (ph + (md.n1 % N) * static_cast<long long>(a[1]) % N) % N;
  if (ph < 0) ph += N;
  return static_cast<std::size_t>(ph);
}

}  // namespace detail

/// Values of sum_m c_m exp(2 pi i <n_m/B, x>) on the grid.
inline std::vector<cplx> spatial_values(const TorusGrid& g, const std::vector<Mode>& modes) {
  std::vector<cplx> out(g.size(), cplx{0, 0});
  if (modes.size() <= 64) {
    const auto& tw = detail::twiddles(g.n());
    for (const auto& md : modes)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += md.c * tw[detail::phase_index(g, md, i)];
    return out;
  }
  FrequencyField F(g);
  const double w = std::pow(g.period, g.dim);
  for (const auto& md : modes) F.coeffs[g.flat(g.wrap_index(md.n0), g.dim == 2 ? g.wrap_index(md.n1) : 0)] += md.c * w;
  return dft_inverse(F).values;
}

inline cplx spatial_value(const TorusGrid& g, const std::vector<Mode>& modes, std::size_t flat) {
  const auto& tw = detail::twiddles(g.n());
  cplx s{0, 0};
  for (const auto& md : modes) s += md.c * tw[detail::phase_index(g, md, flat)];
  return s;
}

/// Sparse spectrum of a sampled spatial factor (exact zeros dropped).
inline std::vector<Mode> modes_of(const SampledField& f) {
  auto F = dft_forward(f);
  const double w = 1.0 / std::pow(f.grid.period, f.grid.dim);
  std::vector<Mode> out;
  for (std::size_t i = 0; i < F.coeffs.size(); ++i) {
    if (F.coeffs[i] == cplx{0, 0}) continue;
    auto a = f.grid.axes(i);
    out.push_back({f.grid.signed_index(a[0]), f.grid.dim == 2 ? f.grid.signed_index(a[1]) : 0, F.coeffs[i] * w});
  }
  return out;
}

/// Spatial modes after applying the radial lattice multiplier m(|eta|); zero products dropped.
inline std::vector<Mode> filter_modes(const TorusGrid& g, const std::vector<Mode>& modes, const std::function<double(double)>& mult) {
  std::vector<Mode> out;
  for (const auto& md : modes) {
    double r = std::hypot(static_cast<double>(md.n0), static_cast<double>(md.n1)) / g.period;
    double v = mult(r);
    if (v != 0.0 && md.c != cplx{0, 0}) out.push_back({md.n0, md.n1, md.c * v});
  }
  return out;
}

// ---- evaluation ---------------------------------------------------------------

inline cplx table_lookup(const SparseTable& t, std::size_t flat) {
  auto it = std::lower_bound(t.begin(), t.end(), flat, [](const auto& p, std::size_t v) { return p.first < v; });
  return (it != t.end() && it->first == flat) ? it->second : cplx{0, 0};
}

/// a(x, xi) at grid point x_flat and lattice point xi_flat.
inline cplx eval_symbol(const SeparableSymbol& a, std::size_t x_flat, std::size_t xi_flat) {
  if (x_flat >= a.grid.size() || xi_flat >= a.grid.size()) throw RangeError("eval_symbol: index off the grid");
  cplx s{0, 0};
  for (const auto& t : a.terms) {
    cplx F = table_lookup(t.table, xi_flat);
    if (F != cplx{0, 0}) s += F * spatial_value(a.grid, t.modes, x_flat);
  }
  return s;
}

inline cplx eval_symbol(const DenseSymbol& a, std::size_t x_flat, std::size_t xi_flat) {
  if (x_flat >= a.grid.size() || xi_flat >= a.grid.size()) throw RangeError("eval_symbol: index off the grid");
  return a.at(x_flat, xi_flat);
}

/// Coordinate form; x must be a grid point and xi a lattice frequency.
inline cplx eval_symbol_at(const SeparableSymbol& a, std::array<double, 2> x, std::array<double, 2> xi) {
  const auto& g = a.grid;
  auto snap = [](double v) {
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9 * std::max(1.0, std::abs(v))) throw RangeError("eval_symbol: off-lattice query");
    return static_cast<long long>(r);
  };
  std::size_t xf = g.flat(g.wrap_index(snap(x[0] / g.spacing())), g.dim == 2 ? g.wrap_index(snap(x[1] / g.spacing())) : 0);
  long long m0 = snap(xi[0] * g.period), m1 = g.dim == 2 ? snap(xi[1] * g.period) : 0;
  if (!inside_lattice(g, m0) || !inside_lattice(g, m1)) throw RangeError("eval_symbol: frequency outside the lattice");
  return eval_symbol(a, xf, g.flat(g.wrap_index(m0), g.wrap_index(m1)));
}

// ---- seminorms ----------------------------------------------------------------

struct SymbolClassParams {
  double m = 0;
  int alpha_max = 2;
  int beta_max = 2;
  double step = 1e-3;  // relative finite-difference step (scaled by 1 + |xi|)
  int refine = 4;      // xi samples per lattice spacing

  void validate() const {
    if (alpha_max < 0 || beta_max < 0) throw ConfigError("seminorm: orders must be nonnegative");
    if (!(step > 0)) throw ConfigError("seminorm: step must be positive");
    if (refine < 1) throw ConfigError("seminorm: refinement must be >= 1");
  }
};

struct SeminormRow {
  std::array<int, 2> alpha{0, 0}, beta{0, 0};
  double estimate = 0;
  std::array<double, 2> witness_x{0, 0}, witness_xi{0, 0};
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Central difference of order (a0, a1) of env at xi with step h.
inline cplx envelope_derivative(const Envelope& env, double x0, double x1, std::array<int, 2> a, double h) {
  cplx s{0, 0};
  for (int i = 0; i <= a[0]; ++i)
    for (int j = 0; j <= a[1]; ++j) {
      double w = binomial(a[0], i) * binomial(a[1], j) * (((i + j) % 2) ? -1.0 : 1.0);
      s += w * env(x0 + (0.5 * a[0] - i) * h, x1 + (0.5 * a[1] - j) * h);
    }
  return s / std::pow(h, a[0] + a[1]);
}

inline std::vector<std::array<int, 2>> multi_indices(int dim, int max_order) {
  std::vector<std::array<int, 2>> out;
  for (int total = 0; total <= max_order; ++total)
    for (int a0 = total; a0 >= 0; --a0) {
      int a1 = total - a0;
      if (dim == 1 && a1 != 0) continue;
      out.push_back({a0, a1});
    }
  return out;
}

}  // namespace detail

/// sup over sampled (x, xi) of |d_xi^alpha d_x^beta a| / (1 + |xi|)^{m - |alpha| + |beta|}, per (alpha, beta).
/// x-derivatives are exact on the spatial spectra; xi-derivatives are central differences of the
/// continuous envelopes sampled on a refined lattice.
inline std::vector<SeminormRow> seminorm_estimate(const SeparableSymbol& a, const SymbolClassParams& prm) {
  prm.validate();
  const auto& g = a.grid;
  if (g.size() > (std::size_t{1} << 14)) throw CapacityError("seminorm_estimate: grid above 2^14 points");
  const double nyq = g.nyquist() - 1.0 / g.period;
  auto alphas = detail::multi_indices(g.dim, prm.alpha_max), betas = detail::multi_indices(g.dim, prm.beta_max);

  // xi samples: refined lattice inside the union of envelope supports
  std::vector<std::array<double, 2>> samples;
  {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (const auto& t : a.terms) {
      lo = std::min(lo, t.lo);
      hi = std::max(hi, std::min(t.hi, nyq));
    }
    const double dxi = 1.0 / (g.period * prm.refine);
    if (g.dim == 1) {
      for (double r = std::floor(lo / dxi) * dxi; r <= hi + 1e-12; r += dxi) {
        samples.push_back({r, 0.0});
        if (r > 0) samples.push_back({-r, 0.0});
      }
    } else {
      for (double u = -hi; u <= hi + 1e-12; u += dxi)
        for (double v = -hi; v <= hi + 1e-12; v += dxi) {
          double r = std::hypot(u, v);
          if (r >= lo - dxi && r <= hi) samples.push_back({u, v});
        }
    }
  }

  // spatial derivative fields per term and beta
  std::vector<std::vector<std::vector<cplx>>> dfields(a.terms.size());
  std::vector<std::vector<double>> dsup(a.terms.size());
  for (std::size_t t = 0; t < a.terms.size(); ++t)
    for (const auto& b : betas) {
      std::vector<Mode> dm;
      for (const auto& md : a.terms[t].modes) {
        cplx f = std::pow(cplx{0, 2.0 * kPi * static_cast<double>(md.n0) / g.period}, b[0]) *
                 std::pow(cplx{0, 2.0 * kPi * static_cast<double>(md.n1) / g.period}, b[1]);
        if (b[0] == 0 && b[1] == 0) f = 1.0;
        dm.push_back({md.n0, md.n1, md.c * f});
      }
      dfields[t].push_back(spatial_values(g, dm));
      double m = 0;
      for (auto& v : dfields[t].back()) m = std::max(m, std::abs(v));
      dsup[t].push_back(m);
    }

  std::vector<SeminormRow> rows;
  for (const auto& al : alphas)
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      SeminormRow row;
      row.alpha = al;
      row.beta = betas[bi];
      const int order_shift = -(al[0] + al[1]) + (betas[bi][0] + betas[bi][1]);
      std::vector<double> best(samples.size(), 0.0);
      std::vector<std::size_t> best_x(samples.size(), 0);
      parallel_chunks(samples.size(), 256, [&](std::size_t s_lo, std::size_t s_hi) {
        std::vector<cplx> acc;
        for (std::size_t s = s_lo; s < s_hi; ++s) {
          auto xi = samples[s];
          double r = std::hypot(xi[0], xi[1]);
          double h = prm.step * (1.0 + r);
          std::vector<std::pair<std::size_t, cplx>> active;
          for (std::size_t t = 0; t < a.terms.size(); ++t) {
            const auto& term = a.terms[t];
            double reach = h * (al[0] + al[1]);
            if (r + reach < term.lo || r - reach > term.hi) continue;
            cplx c = detail::envelope_derivative(term.envelope, xi[0], xi[1], al, h);
            if (c != cplx{0, 0}) active.emplace_back(t, c);
          }
          double val = 0;
          std::size_t wx = 0;
          if (active.size() == 1) {
            val = std::abs(active[0].second) * dsup[active[0].first][bi];
            const auto& fld = dfields[active[0].first][bi];
            for (std::size_t x = 0; x < fld.size(); ++x)
              if (std::abs(fld[x]) == dsup[active[0].first][bi]) {
                wx = x;
                break;
              }
          } else if (active.size() > 1) {
            acc.assign(g.size(), cplx{0, 0});
            for (auto& [t, c] : active) {
              const auto& fld = dfields[t][bi];
              for (std::size_t x = 0; x < acc.size(); ++x) acc[x] += c * fld[x];
            }
            for (std::size_t x = 0; x < acc.size(); ++x)
              if (std::abs(acc[x]) > val) {
                val = std::abs(acc[x]);
                wx = x;
              }
          }
          double q = val / std::pow(1.0 + r, prm.m + order_shift);
          best[s] = std::isfinite(q) ? q : std::numeric_limits<double>::infinity();
          best_x[s] = wx;
        }
      });
      for (std::size_t s = 0; s < samples.size(); ++s)
        if (best[s] > row.estimate || (std::isinf(best[s]) && !std::isinf(row.estimate))) {
          row.estimate = best[s];
          row.witness_xi = samples[s];
          row.witness_x = g.point(best_x[s]);
        }
      rows.push_back(row);
    }
  return rows;
}

inline double seminorm_lookup(const std::vector<SeminormRow>& rows, int alpha, int beta) {
  for (const auto& r : rows)
    if (r.alpha[0] == alpha && r.alpha[1] == 0 && r.beta[0] == beta && r.beta[1] == 0) return r.estimate;
  throw RangeError("seminorm: order not computed");
}

// ---- twisted diagonal -----------------------------------------------------------

struct TwistedDiagonalReport {
  bool satisfied = true;
  double C = 0;
  double violation_mass = 0, total_mass = 0, relative = 0;
  std::array<double, 2> witness_eta{0, 0}, witness_xi{0, 0};
};

namespace detail {

inline bool in_twisted_region(double C, std::array<double, 2> eta, std::array<double, 2> xi) {
  double s = std::hypot(eta[0] + xi[0], eta[1] + xi[1]);
  return C * (s + 1.0) <= std::hypot(xi[0], xi[1]);
}

inline void finish(TwistedDiagonalReport& r, double tol) {
  r.relative = r.total_mass > 0 ? r.violation_mass / r.total_mass : 0.0;
  r.satisfied = r.relative <= tol;
}

}  // namespace detail

/// Mass of |a^(eta, xi)|^2 (spatial transform in x) on the region C(|eta + xi| + 1) <= |xi|.
inline TwistedDiagonalReport twisted_diagonal_check(const SeparableSymbol& a, double C, double tol = 1e-12) {
  if (!(C > 1)) throw ConfigError("twisted diagonal: C must exceed 1");
  const auto& g = a.grid;
  std::map<std::pair<long long, long long>, std::size_t> ids;
  std::vector<std::array<double, 2>> eta_of;
  std::vector<std::vector<std::pair<std::size_t, cplx>>> term_modes(a.terms.size());
  for (std::size_t t = 0; t < a.terms.size(); ++t)
    for (const auto& md : a.terms[t].modes) {
      auto key = std::make_pair(md.n0, md.n1);
      auto it = ids.find(key);
      if (it == ids.end()) {
        it = ids.emplace(key, eta_of.size()).first;
        eta_of.push_back({static_cast<double>(md.n0) / g.period, static_cast<double>(md.n1) / g.period});
      }
      term_modes[t].emplace_back(it->second, md.c);
    }
  struct Entry {
    std::size_t flat, term;
    cplx F;
  };
  std::vector<Entry> entries;
  for (std::size_t t = 0; t < a.terms.size(); ++t)
    for (const auto& [flat, F] : a.terms[t].table) entries.push_back({flat, t, F});
  std::sort(entries.begin(), entries.end(), [](const Entry& p, const Entry& q) { return p.flat < q.flat || (p.flat == q.flat && p.term < q.term); });

  TwistedDiagonalReport rep;
  rep.C = C;
  double worst = -1;
  std::vector<cplx> acc(eta_of.size(), cplx{0, 0});
  std::vector<std::size_t> touched;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    touched.clear();
    for (; j < entries.size() && entries[j].flat == entries[i].flat; ++j)
      for (auto& [id, c] : term_modes[entries[j].term]) {
        if (acc[id] == cplx{0, 0}) touched.push_back(id);
        acc[id] += entries[j].F * c;
      }
    auto xi = g.frequency(entries[i].flat);
    for (auto id : touched) {
      double w = std::norm(acc[id]);
      acc[id] = cplx{0, 0};
      rep.total_mass += w;
      if (detail::in_twisted_region(C, eta_of[id], xi)) {
        rep.violation_mass += w;
        if (w > worst) {
          worst = w;
          rep.witness_eta = eta_of[id];
          rep.witness_xi = xi;
        }
      }
    }
    i = j;
  }
  detail::finish(rep, tol);
  return rep;
}

inline TwistedDiagonalReport twisted_diagonal_check(const DenseSymbol& a, double C, double tol = 1e-12) {
  if (!(C > 1)) throw ConfigError("twisted diagonal: C must exceed 1");
  const auto& g = a.grid;
  const std::size_t n = g.n();
  TwistedDiagonalReport rep;
  rep.C = C;
  double worst = -1;
  for (std::size_t xi = 0; xi < n; ++xi) {
    SampledField col(g);
    for (std::size_t x = 0; x < n; ++x) col.values[x] = a.at(x, xi);
    auto S = dft_forward(col);
    auto xv = g.frequency(xi);
    for (std::size_t e = 0; e < n; ++e) {
      double w = std::norm(S.coeffs[e]);
      rep.total_mass += w;
      auto ev = g.frequency(e);
      if (detail::in_twisted_region(C, ev, xv)) {
        rep.violation_mass += w;
        if (w > worst) {
          worst = w;
          rep.witness_eta = ev;
          rep.witness_xi = xv;
        }
      }
    }
  }
  detail::finish(rep, tol);
  return rep;
}

// ---- named symbols --------------------------------------------------------------

struct NamedSymbolParams {
  std::string kind = "multiplier";  // multiplier | modulated | ching | bspace_infty | dilated
  double m = 0;
  int first = 1;  // first summation index
  int last = 4;   // truncation
  int c = 4;      // lacunarity t_k = c k for ching / bspace_infty
  int band = -1;  // multiplier: band index, -1 for a = 1
  double kappa = 4.0;
};

inline nlohmann::json to_json(const NamedSymbolParams& p) {
  return {{"kind", p.kind}, {"m", p.m}, {"first", p.first}, {"last", p.last}, {"c", p.c}, {"band", p.band}, {"kappa", p.kappa}};
}

namespace detail {

inline void check_output_band(const TorusGrid& g, double top, const std::string& what, int max_feasible) {
  if (!(top < g.nyquist())) {
    throw ConfigError(what + " reaches frequency " + std::to_string(top) + " >= Nyquist " + std::to_string(g.nyquist()) +
                      "; max feasible truncation " + std::to_string(max_feasible));
  }
}

}  // namespace detail

/// phi*_t = phi_{t-1} + phi_t + phi_{t+1} as a radial function.
inline double star_profile(const DyadicPartition& P, int t, double r) {
  double s = 0;
  for (int k = t - 1; k <= std::min(P.k_max(), t + 1); ++k) s += P.radial(k, r);
  return s;
}

inline SeparableSymbol build_named_symbol(const NamedSymbolParams& p, std::shared_ptr<const DyadicPartition> part) {
  const auto& P = *part;
  const auto& g = P.grid();
  SeparableSymbol a;
  a.grid = g;
  a.order = p.m;
  a.kind = p.kind;
  a.params = to_json(p);
  auto pw = [](int e) { return std::ldexp(1.0, e); };

  if (p.kind == "multiplier") {
    if (p.band < 0) {
      a.terms.push_back(make_term(g, [](double, double) { return cplx{1, 0}; }, 0.0, std::numeric_limits<double>::infinity(), {Mode{}}, "one"));
    } else {
      if (p.band > P.k_max()) throw ConfigError("multiplier: band above k_max");
      int k = p.band;
      double lo = k == 0 ? 0.0 : pw(k - 1), hi = k == 0 ? std::numeric_limits<double>::infinity() : pw(k + 1);
      a.terms.push_back(make_term(g, [part, k](double x0, double x1) { return cplx{part->radial(k, std::hypot(x0, x1)), 0}; }, lo, hi, {Mode{}},
                                  "band_" + std::to_string(k)));
    }
    return a;
  }

  if (p.first < 1 || p.last < p.first) throw ConfigError(p.kind + ": need 1 <= first <= last");

  if (p.kind == "modulated") {
    int feasible = 0;
    while (27.0 / 8.0 * pw(feasible + 1) < g.nyquist()) ++feasible;
    detail::check_output_band(g, 27.0 / 8.0 * pw(p.last), "modulated symbol output", feasible);
    auto window = std::make_shared<WindowProfile>(P.cutoff_ptr());
    for (int k = p.first; k <= p.last; ++k) {
      double scale = pw(k), weight = std::pow(2.0, k * p.m);
      long long v = lattice_index(g, 1.5 * scale);
      a.terms.push_back(make_term(
          g, [window, scale, weight](double x0, double x1) { return cplx{weight * (*window)(std::hypot(x0, x1) / scale), 0}; },
          WindowProfile::kOuterLo * scale, WindowProfile::kOuterHi * scale, {Mode{v, 0, {1, 0}}}, "modulated_" + std::to_string(k)));
    }
    return a;
  }

  if (p.kind == "ching" || p.kind == "bspace_infty") {
    if (p.c < 1) throw ConfigError(p.kind + ": lacunarity must be >= 1");
    int feasible = 0;
    while (p.c * (feasible + 1) <= P.k_max() - 1) ++feasible;
    if (p.c * p.last > P.k_max() - 1)
      throw ConfigError(p.kind + ": band " + std::to_string(p.c * p.last) + " above k_max - 1 = " + std::to_string(P.k_max() - 1) +
                        "; max feasible truncation " + std::to_string(feasible));
    const bool ching = p.kind == "ching";
    for (int k = p.first; k <= p.last; ++k) {
      int t = p.c * k;
      double weight = ching ? std::pow(2.0, t * p.m) : 1.0, shift = pw(-t);
      long long v = lattice_index(g, pw(t));
      Envelope env = [part, t, weight, shift, ching](double x0, double x1) {
        double s = star_profile(*part, t, std::hypot(x0, x1));
        if (s == 0.0) return cplx{0, 0};
        if (!ching) return cplx{s, 0};
        double ph = 2.0 * kPi * shift * x0;
        return weight * s * cplx{std::cos(ph), std::sin(ph)};
      };
      a.terms.push_back(make_term(g, env, t == 1 ? 0.0 : pw(t - 2), pw(t + 2), {Mode{ching ? -v : v, 0, {1, 0}}}, p.kind + "_" + std::to_string(k)));
    }
    return a;
  }

  if (p.kind == "dilated") {
    if (p.last > P.k_max()) throw ConfigError("dilated: truncation above k_max = " + std::to_string(P.k_max()));
    if (!(p.kappa > 0)) throw ConfigError("dilated: kappa must be positive");
    const double i0 = std::cyl_bessel_i(0.0, p.kappa);
    for (int t = p.first; t <= p.last; ++t) {
      // psi(2^t x_1) with psi(y) = exp(kappa cos 2 pi y) / I_0(kappa), truncated to |eta| <= 2^{k_max}
      // so that no spatial mode reaches the high residual of the low-pass band
      std::vector<Mode> modes;
      const long long step = lattice_index(g, pw(t)), top = lattice_index(g, pw(P.k_max()));
      for (long long n = 0;; ++n) {
        long long idx = n * step;
        double c = std::cyl_bessel_i(static_cast<double>(n), p.kappa) / i0;
        if (idx > top || c < 1e-40) break;
        modes.push_back({idx, 0, {c, 0}});
        if (n > 0) modes.push_back({-idx, 0, {c, 0}});
      }
      double weight = std::pow(2.0, t * p.m);
      a.terms.push_back(make_term(g, [part, t, weight](double x0, double x1) { return cplx{weight * part->radial(t, std::hypot(x0, x1)), 0}; },
                                  pw(t - 1), pw(t + 1), std::move(modes), "dilated_" + std::to_string(t)));
    }
    return a;
  }

  throw ConfigError("unknown symbol kind '" + p.kind + "'");
}

/// x-independent symbol a(x, xi) = F(xi) supported in lo <= |xi| <= hi.
inline SeparableSymbol multiplier_symbol(const TorusGrid& g, Envelope env, double lo, double hi, double order = 0) {
  SeparableSymbol a;
  a.grid = g;
  a.order = order;
  a.kind = "multiplier";
  a.terms.push_back(make_term(g, std::move(env), lo, hi, {Mode{}}, "multiplier"));
  return a;
}

inline SeparableSymbol scaled(SeparableSymbol a, cplx lambda) {
  for (auto& t : a.terms)
    for (auto& md : t.modes) md.c *= lambda;
  return a;
}

inline nlohmann::json symbol_manifest(const SeparableSymbol& a) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : a.terms) {
    nlohmann::json jt{{"label", t.label}, {"support", {t.lo, std::isfinite(t.hi) ? t.hi : -1.0}}, {"lattice_points", t.table.size()}};
    if (t.modes.size() <= 8) {
      nlohmann::json ms = nlohmann::json::array();
      for (const auto& md : t.modes) ms.push_back({md.n0, md.n1, md.c.real(), md.c.imag()});
      jt["modes"] = ms;
    } else {
      jt["mode_count"] = t.modes.size();
    }
    terms.push_back(jt);
  }
  return {{"kind", a.kind},
          {"m", a.order},
          {"params", a.params},
          {"grid", {{"d", a.grid.dim}, {"J", a.grid.log2_size}, {"B", a.grid.period}}},
          {"terms", terms}};
}

}  // namespace pph
