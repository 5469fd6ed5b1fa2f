#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pph/grid.hpp"
#include "pph/littlewood_paley.hpp"
#include "pph/maximal.hpp"
#include "pph/parallel.hpp"
#include "pph/symbols.hpp"

namespace pph {

// ---- application ------------------------------------------------------------------

namespace detail {

inline constexpr std::size_t kFewModes = 32;

inline std::array<long long, 2> signed_axes(const TorusGrid& g, std::size_t flat) {
  auto a = g.axes(flat);
  return {g.signed_index(a[0]), g.dim == 2 ? g.signed_index(a[1]) : 0};
}

inline double max_abs(const std::vector<cplx>& v) {
  double m = 0;
  for (auto& c : v) m = std::max(m, std::abs(c));
  return m;
}

// Target index on the lattice; the Nyquist row is reachable only without a shift along that axis.
inline bool representable(const TorusGrid& g, long long target, long long shift) {
  auto h = static_cast<long long>(g.n() / 2);
  if (target == -h || target == h) return shift == 0;
  return target > -h && target < h;
}

// out += spectrum of G(x) * IFFT(table . F)(x) for one term.
inline void accumulate_term(const TorusGrid& g, const SymbolTerm& t, const FrequencyField& F, double noise_floor, FrequencyField& out) {
  if (t.table.empty() || t.modes.empty()) return;
  const std::size_t work = t.table.size() * t.modes.size();
  const double fft_cost = 4.0 * static_cast<double>(g.size()) * std::max(1, g.dim * g.log2_size);
  if (t.modes.size() <= kFewModes || static_cast<double>(work) <= fft_cost) {
    const bool strict = t.modes.size() <= kFewModes;
    for (const auto& [flat, env] : t.table) {
      cplx p = env * F.coeffs[flat];
      if (p == cplx{0, 0}) continue;
      auto xi = signed_axes(g, flat);
      for (const auto& md : t.modes) {
        long long o0 = xi[0] + md.n0, o1 = xi[1] + md.n1;
        cplx v = md.c * p;
        if (strict && (!representable(g, o0, md.n0) || !representable(g, o1, md.n1))) {
          if (std::abs(v) > noise_floor)
            throw RangeError("apply_symbol: term '" + t.label + "' pushes output to frequency index " + std::to_string(o0) + " past Nyquist");
          continue;
        }
        out.coeffs[g.flat(g.wrap_index(o0), g.dim == 2 ? g.wrap_index(o1) : 0)] += v;
      }
    }
    return;
  }
  FrequencyField Pf(g);
  for (const auto& [flat, env] : t.table) Pf.coeffs[flat] = env * F.coeffs[flat];
  auto u = dft_inverse(Pf);
  auto G = spatial_values(g, t.modes);
  for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] *= G[i];
  auto U = dft_forward(u);
  for (std::size_t i = 0; i < U.coeffs.size(); ++i) out.coeffs[i] += U.coeffs[i];
}

}  // namespace detail

/// Spectrum of T_a f. Each term is applied as a spectral shift (few spatial modes) or in space.
inline FrequencyField apply_symbol_spectrum(const SeparableSymbol& a, const FrequencyField& F) {
  if (!(a.grid == F.grid)) throw StructuralError("apply_symbol: grid mismatch");
  FrequencyField out(F.grid);
  const double floor = 1e-13 * detail::max_abs(F.coeffs);
  for (const auto& t : a.terms) detail::accumulate_term(a.grid, t, F, floor, out);
  return out;
}

inline SampledField apply_symbol(const SeparableSymbol& a, const SampledField& f) { return dft_inverse(apply_symbol_spectrum(a, dft_forward(f))); }

/// Direct quadrature B^{-d} sum_xi a(x, xi) f^(xi) e^{2 pi i x xi}.
inline SampledField apply_symbol(const DenseSymbol& a, const SampledField& f) {
  if (!(a.grid == f.grid)) throw StructuralError("apply_symbol: grid mismatch");
  const auto& g = a.grid;
  auto F = dft_forward(f);
  const auto& tw = detail::twiddles(g.n());
  const std::size_t n = g.n();
  SampledField out(g);
  parallel_chunks(n, 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t x = lo; x < hi; ++x) {
      cplx s{0, 0};
      for (std::size_t xi = 0; xi < n; ++xi) s += a.at(x, xi) * F.coeffs[xi] * tw[(x * xi) % n];
      out.values[x] = s / g.period;
    }
  });
  return out;
}

/// One term per frequency column: the envelope is the lattice indicator, the spatial factor the column's spectrum.
inline SeparableSymbol to_separable(const DenseSymbol& a) {
  const auto& g = a.grid;
  SeparableSymbol s;
  s.grid = g;
  s.order = a.order;
  s.kind = "dense";
  for (std::size_t xi = 0; xi < g.n(); ++xi) {
    SampledField col(g);
    bool any = false;
    for (std::size_t x = 0; x < g.n(); ++x) {
      col.values[x] = a.at(x, xi);
      any = any || col.values[x] != cplx{0, 0};
    }
    if (!any) continue;
    const double at = g.frequency(xi)[0], h = 0.5 / g.period;
    SymbolTerm t;
    t.envelope = [at, h](double x0, double) { return std::abs(x0 - at) < h ? cplx{1, 0} : cplx{0, 0}; };
    t.lo = t.hi = std::abs(at);
    t.table = {{xi, cplx{1, 0}}};
    t.modes = modes_of(col);
    t.label = "column_" + std::to_string(g.signed_index(xi));
    s.terms.push_back(std::move(t));
  }
  return s;
}

// ---- paradifferential decomposition ---------------------------------------------------

struct BandRange {
  int lo = 0, hi = -1;
  bool empty() const { return hi < lo; }
};

/// sum_{k in K, j in J} a_{j,k} with a_{j,k}(x, xi) = (phi_j * a(., xi))(x) phi_k(xi).
inline SeparableSymbol band_block(const SeparableSymbol& a, std::shared_ptr<const DyadicPartition> part, BandRange K, BandRange J,
                                  const std::string& kind) {
  const auto& P = *part;
  K.lo = std::max(K.lo, 0);
  K.hi = std::min(K.hi, P.k_max());
  J.lo = std::max(J.lo, 0);
  J.hi = std::min(J.hi, P.k_max());
  SeparableSymbol out;
  out.grid = a.grid;
  out.order = a.order;
  out.kind = kind;
  if (K.empty() || J.empty()) return out;
  auto env_mult = [part, K](double r) {
    double s = 0;
    for (int k = K.lo; k <= K.hi; ++k) s += part->radial(k, r);
    return s;
  };
  auto sp_mult = [part, J](double r) {
    double s = 0;
    for (int j = J.lo; j <= J.hi; ++j) s += part->radial(j, r);
    return s;
  };
  for (const auto& t : a.terms) {
    auto modes = filter_modes(a.grid, t.modes, sp_mult);
    if (modes.empty()) continue;
    SparseTable table;
    for (const auto& [flat, v] : t.table) {
      double w = env_mult(a.grid.frequency_norm(flat));
      if (w != 0.0) table.emplace_back(flat, v * w);
    }
    if (table.empty()) continue;
    SymbolTerm nt;
    Envelope base = t.envelope;
    nt.envelope = [base, env_mult](double x0, double x1) {
      double w = env_mult(std::hypot(x0, x1));
      return w == 0.0 ? cplx{0, 0} : base(x0, x1) * w;
    };
    nt.lo = K.lo >= 1 ? std::max(t.lo, std::ldexp(1.0, K.lo - 1)) : t.lo;
    nt.hi = K.lo == 0 ? t.hi : std::min(t.hi, std::ldexp(1.0, K.hi + 1));  // the low-pass band keeps the high residual
    nt.table = std::move(table);
    nt.modes = std::move(modes);
    nt.label = t.label + "[k" + std::to_string(K.lo) + "-" + std::to_string(K.hi) + ",j" + std::to_string(J.lo) + "-" + std::to_string(J.hi) + "]";
    out.terms.push_back(std::move(nt));
  }
  return out;
}

inline void append_terms(SeparableSymbol& into, const SeparableSymbol& from) {
  for (const auto& t : from.terms) into.terms.push_back(t);
}

/// Pieces a_{j,k} for j, k <= n_trunc and their groupings.
class ParaDecomposition {
 public:
  ParaDecomposition(SeparableSymbol a, std::shared_ptr<const DyadicPartition> part, int n_trunc)
      : a_(std::move(a)), part_(std::move(part)), n_(n_trunc) {
    if (!(a_.grid == part_->grid())) throw StructuralError("decomposition: grid mismatch");
    if (n_ < 0 || n_ > part_->k_max() - 2) throw ConfigError("decomposition: truncation must lie in [0, k_max - 2] = [0, " + std::to_string(part_->k_max() - 2) + "]");
  }

  const SeparableSymbol& source() const { return a_; }
  std::shared_ptr<const DyadicPartition> partition() const { return part_; }
  int truncation() const { return n_; }

  SeparableSymbol piece(int j, int k) const { return band_block(a_, part_, {k, k}, {j, j}, "a_jk"); }
  /// b_k = sum_{j <= k-3} a_{j,k}
  SeparableSymbol low(int k) const { return band_block(a_, part_, {k, k}, {0, std::min(k - 3, n_)}, "b_k"); }
  /// c_j = sum_{k <= j-3} a_{j,k}
  SeparableSymbol high(int j) const { return band_block(a_, part_, {0, std::min(j - 3, n_)}, {j, j}, "c_j"); }
  /// d_k = sum_{|j-k| <= 2} a_{j,k}
  SeparableSymbol diag(int k) const { return band_block(a_, part_, {k, k}, {k - 2, std::min(k + 2, n_)}, "d_k"); }
  /// a phi_k(xi), all spatial bands
  SeparableSymbol full_band(int k) const { return band_block(a_, part_, {k, k}, {0, part_->k_max()}, "a_k"); }

  SeparableSymbol near() const {
    SeparableSymbol s = empty("near");
    for (int k = 0; k <= n_; ++k) append_terms(s, diag(k));
    return s;
  }
  SeparableSymbol far() const {
    SeparableSymbol s = empty("far");
    for (int k = 3; k <= n_; ++k) append_terms(s, low(k));
    for (int j = 3; j <= n_; ++j) append_terms(s, high(j));
    return s;
  }
  SeparableSymbol total() const { return band_block(a_, part_, {0, n_}, {0, n_}, "total"); }

 private:
  SeparableSymbol empty(const std::string& kind) const {
    SeparableSymbol s;
    s.grid = a_.grid;
    s.order = a_.order;
    s.kind = kind;
    return s;
  }
  SeparableSymbol a_;
  std::shared_ptr<const DyadicPartition> part_;
  int n_;
};

inline ParaDecomposition split_near_far(const SeparableSymbol& a, std::shared_ptr<const DyadicPartition> part, std::optional<int> n_trunc = {}) {
  return ParaDecomposition(a, part, n_trunc.value_or(part->k_max() - 2));
}

/// True when every nonzero coefficient lies in lo <= |xi| <= hi.
inline bool spectrum_within(const FrequencyField& F, double lo, double hi) {
  for (std::size_t i = 0; i < F.coeffs.size(); ++i) {
    if (F.coeffs[i] == cplx{0, 0}) continue;
    double r = F.grid.frequency_norm(i);
    if (r < lo || r > hi) return false;
  }
  return true;
}

// ---- truncated definition ------------------------------------------------------------

struct TruncatedResult {
  SampledField value;
  std::vector<double> increments;  // increments[N-1] = sup |S_N - S_{N-1}|
  int converged_at = -1;           // S_N is final from here on, at grid resolution
  bool cauchy = false;
};

/// S_N f = sum_{j,k <= N} T_{a_{j,k}} f for N = 0..n_trunc.
inline TruncatedResult apply_truncated(const SeparableSymbol& a, const SampledField& f, std::shared_ptr<const DyadicPartition> part,
                                       std::optional<int> n_trunc = {}) {
  const int N = n_trunc.value_or(part->k_max() - 2);
  if (N < 0 || N > part->k_max() - 2) throw ConfigError("apply_truncated: truncation must lie in [0, k_max - 2]");
  auto F = dft_forward(f);
  const double tol = 1e-12 * f.sup_norm();
  TruncatedResult res;
  FrequencyField prev(f.grid);
  for (int n = 0; n <= N; ++n) {
    auto S = apply_symbol_spectrum(band_block(a, part, {0, n}, {0, n}, "S_N"), F);
    if (n > 0) {
      FrequencyField diff(f.grid);
      for (std::size_t i = 0; i < diff.coeffs.size(); ++i) diff.coeffs[i] = S.coeffs[i] - prev.coeffs[i];
      res.increments.push_back(dft_inverse(diff).sup_norm());
    }
    prev = std::move(S);
  }
  res.value = dft_inverse(prev);
  // smallest N after which every remaining increment (at least two) is below tolerance
  int tail = 0;
  for (auto it = res.increments.rbegin(); it != res.increments.rend() && *it < tol; ++it) ++tail;
  if (tail >= 2) res.converged_at = static_cast<int>(res.increments.size()) - tail;
  res.cauchy = res.converged_at >= 0;
  return res;
}

// ---- kernels -------------------------------------------------------------------------

/// K(x, y) = sum_t S_t(x) kappa_t(x - y), kappa_t the inverse transform of the envelope table.
struct KernelBand {
  TorusGrid grid;
  int k = 0, j = -1;
  std::vector<std::vector<cplx>> spatial, profile;

  bool empty() const { return spatial.empty(); }
  cplx at(std::size_t x, std::size_t z) const {
    cplx s{0, 0};
    for (std::size_t t = 0; t < spatial.size(); ++t) s += spatial[t][x] * profile[t][z];
    return s;
  }
};

inline KernelBand kernel_of(const SeparableSymbol& piece, int k, int j = -1) {
  KernelBand K;
  K.grid = piece.grid;
  K.k = k;
  K.j = j;
  for (const auto& t : piece.terms) {
    FrequencyField E(piece.grid);
    for (const auto& [flat, v] : t.table) E.coeffs[flat] = v;
    K.profile.push_back(dft_inverse(E).values);
    K.spatial.push_back(spatial_values(piece.grid, t.modes));
  }
  return K;
}

namespace detail {

inline double origin_distance(const TorusGrid& g, std::size_t z) { return g.torus_distance(0, z); }

}  // namespace detail

/// sup over (x, z) of |K(x, x - z)| (1 + lambda |z|)^M.
inline double weighted_sup(const KernelBand& K, double lambda, double M) {
  if (K.empty()) return 0.0;
  const auto& g = K.grid;
  const std::size_t n = g.size();
  if (n > (std::size_t{1} << 14)) throw CapacityError("kernel weighted sup: grid above 2^14 points");
  std::vector<double> w(n);
  for (std::size_t z = 0; z < n; ++z) w[z] = std::pow(1.0 + lambda * detail::origin_distance(g, z), M);
  if (K.spatial.size() == 1) {
    double a = 0, b = 0;
    for (auto& v : K.spatial[0]) a = std::max(a, std::abs(v));
    for (std::size_t z = 0; z < n; ++z) b = std::max(b, std::abs(K.profile[0][z]) * w[z]);
    return a * b;
  }
  std::vector<double> best(n, 0.0);
  parallel_chunks(n, 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t z = lo; z < hi; ++z) {
      double m = 0;
      for (std::size_t x = 0; x < n; ++x) m = std::max(m, std::abs(K.at(x, z)));
      best[z] = m * w[z];
    }
  });
  return *std::max_element(best.begin(), best.end());
}

enum class BandKind { low, high, diag, piece, full };

inline const char* to_string(BandKind b) {
  switch (b) {
    case BandKind::low: return "b";
    case BandKind::high: return "c";
    case BandKind::diag: return "d";
    case BandKind::piece: return "a";
    case BandKind::full: return "full";
  }
  return "?";
}

inline SeparableSymbol select_band(const ParaDecomposition& D, BandKind kind, int k, int j = -1) {
  switch (kind) {
    case BandKind::low: return D.low(k);
    case BandKind::high: return D.high(j);
    case BandKind::diag: return D.diag(k);
    case BandKind::piece: return D.piece(j, k);
    case BandKind::full: return D.full_band(k);
  }
  throw ConfigError("unknown band kind");
}

struct KernelRow {
  int k = 0, j = -1;
  double M = 0;
  double weighted_sup = 0, normalizer = 1, ratio = 0;
};

/// Rows (k, j, M): weighted sup of the band kernel over 2^{k(m+d)}, times 2^{(j-k)N} for pieces with j > k.
inline std::vector<KernelRow> kernel_decay_report(const ParaDecomposition& D, BandKind kind, const std::vector<int>& ks,
                                                  const std::vector<double>& Ms, int j_offset = 0, int taylor_order = 3) {
  const auto& a = D.source();
  std::vector<KernelRow> rows;
  for (int k : ks) {
    int j = kind == BandKind::piece || kind == BandKind::high ? k + j_offset : -1;
    auto K = kernel_of(select_band(D, kind, k, j), k, j);
    for (double M : Ms) {
      KernelRow r;
      r.k = k;
      r.j = j;
      r.M = M;
      r.weighted_sup = weighted_sup(K, std::ldexp(1.0, k), M);
      r.normalizer = std::pow(2.0, k * (a.order + a.grid.dim));
      if (j > k) r.normalizer *= std::pow(2.0, -(j - k) * taylor_order);
      r.ratio = r.weighted_sup / r.normalizer;
      rows.push_back(r);
    }
  }
  return rows;
}

/// max over sampled x, y in the cube [0, 2^{-mu})^d of int |U(x, z) - U(y, z)| dz, divided by 2^{km} 2^{-(mu-k)}.
inline double kernel_oscillation_check(const KernelBand& U, double order, int mu, int samples = 8) {
  const auto& g = U.grid;
  const int k = U.k;
  if (k < 1 || k > mu) throw ConfigError("kernel oscillation: need 1 <= k <= mu");
  const double side_cells = std::ldexp(1.0, -mu) / g.spacing();
  if (side_cells < 1.0) throw CapacityError("kernel oscillation: cube below grid resolution");
  if (U.empty()) return 0.0;
  const auto cells = static_cast<std::size_t>(side_cells);
  const std::size_t stride = std::max<std::size_t>(1, cells / static_cast<std::size_t>(samples));
  std::vector<std::size_t> pts;
  for (std::size_t a = 0; a < cells; a += stride)
    for (std::size_t b = 0; b < (g.dim == 2 ? cells : 1); b += stride) pts.push_back(g.flat(a, b));
  const std::size_t n = g.size();
  auto diff = [&](std::size_t x) {
    auto ax = g.axes(x);
    std::vector<cplx> row(n);
    for (std::size_t z = 0; z < n; ++z) {
      auto az = g.axes(z);
      std::size_t d0 = (ax[0] + g.n() - az[0]) % g.n(), d1 = g.dim == 2 ? (ax[1] + g.n() - az[1]) % g.n() : 0;
      row[z] = U.at(x, g.flat(d0, d1));
    }
    return row;
  };
  std::vector<std::vector<cplx>> rows(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) { rows[i] = diff(pts[i]); });
  double best = 0;
  for (std::size_t p = 0; p < pts.size(); ++p)
    for (std::size_t q = p + 1; q < pts.size(); ++q) {
      double s = 0;
      for (std::size_t z = 0; z < n; ++z) s += std::abs(rows[p][z] - rows[q][z]);
      best = std::max(best, s * g.cell_volume());
    }
  return best / (std::pow(2.0, k * order) * std::ldexp(1.0, -(mu - k)));
}

// ---- pointwise domination ------------------------------------------------------------

struct DominationReport {
  int k = 0;
  double ratio = 0;
  double numerator_sup = 0;
  bool degenerate = false;  // Peetre majorant of Pi*_k f vanishes identically
};

/// sup_x |T_piece f(x)| / (2^{km} Peetre_{sigma, 2^k}(Pi*_k f)(x)) over points with a nonzero denominator.
inline DominationReport check_pointwise_domination(const SeparableSymbol& piece, const SampledField& f, const DyadicPartition& P, int k, double sigma) {
  if (!(sigma > 0)) throw ConfigError("pointwise domination: sigma must be positive");
  DominationReport rep;
  rep.k = k;
  auto Tf = apply_symbol(piece, f);
  rep.numerator_sup = Tf.sup_norm();
  auto star = peetre_maximal_values(project_star(f, k, P), sigma, std::ldexp(1.0, k));
  const double scale = std::pow(2.0, k * piece.order);
  const double floor = 1e-300;
  double best = 0;
  bool any = false;
  for (std::size_t i = 0; i < star.size(); ++i) {
    if (star[i] <= floor) continue;
    any = true;
    best = std::max(best, std::abs(Tf.values[i]) / (scale * star[i]));
  }
  rep.degenerate = !any;
  rep.ratio = best;
  return rep;
}

}  // namespace pph
