#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pph/cubes.hpp"
#include "pph/grid.hpp"
#include "pph/parallel.hpp"

namespace pph {

struct MaximalParams {
  double r = 1.0;
  double sigma = 1.0;
  double epsilon = 0.0;
  int k = 0;

  void validate() const {
    if (!(r > 0)) throw ConfigError("maximal: r must be positive");
    if (!(sigma > 0)) throw ConfigError("maximal: sigma must be positive");
    if (!(epsilon >= 0)) throw ConfigError("maximal: epsilon must be nonnegative");
  }
};

inline std::vector<double> moduli(const SampledField& f) {
  std::vector<double> out(f.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(f.values[i]);
  return out;
}

inline SampledField real_field(const TorusGrid& g, const std::vector<double>& v) {
  SampledField out(g);
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = v[i];
  return out;
}

namespace detail {

// Cyclic sliding maximum: out[x] = max over a in {x-w+1, ..., x} of in[a mod n].
inline void cyclic_window_max(const double* in, double* out, std::size_t n, std::size_t stride, std::size_t w) {
  if (w >= n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, in[i * stride]);
    for (std::size_t i = 0; i < n; ++i) out[i * stride] = m;
    return;
  }
  std::deque<long long> dq;
  auto at = [&](long long j) { return in[static_cast<std::size_t>(((j % (long long)n) + (long long)n) % (long long)n) * stride]; };
  const long long start = -static_cast<long long>(w) + 1;
  for (long long j = start; j < static_cast<long long>(n); ++j) {
    while (!dq.empty() && at(dq.back()) <= at(j)) dq.pop_back();
    dq.push_back(j);
    while (dq.front() <= j - static_cast<long long>(w)) dq.pop_front();
    if (j >= 0) out[static_cast<std::size_t>(j) * stride] = at(dq.front());
  }
}

}  // namespace detail

/// For each dyadic side w = 1, 2, 4, ..., N cells, computes the pointwise maximum of the
/// mean of g over all anchored cubes of that side containing x, and hands it to visit(w, values).
/// Cube sums are formed by pairwise doubling so every cube sum has a fixed association order.
template <class Visit>
void scale_maxima(const TorusGrid& grid, const std::vector<double>& g, Visit&& visit) {
  const std::size_t n = grid.n();
  std::vector<double> sums = g, next(g.size()), means(g.size()), maxima(g.size()), tmp(g.size());
  for (std::size_t w = 1;; w *= 2) {
    const double vol = grid.dim == 1 ? static_cast<double>(w) : static_cast<double>(w) * static_cast<double>(w);
    for (std::size_t i = 0; i < sums.size(); ++i) means[i] = sums[i] / vol;
    if (grid.dim == 1) {
      detail::cyclic_window_max(means.data(), maxima.data(), n, 1, w);
    } else {
      for (std::size_t r = 0; r < n; ++r) detail::cyclic_window_max(means.data() + r * n, tmp.data() + r * n, n, 1, w);
      for (std::size_t c = 0; c < n; ++c) detail::cyclic_window_max(tmp.data() + c, maxima.data() + c, n, n, w);
    }
    visit(w, static_cast<const std::vector<double>&>(maxima));
    if (w >= n) break;
    if (grid.dim == 1) {
      for (std::size_t a = 0; a < n; ++a) next[a] = sums[a] + sums[(a + w) % n];
    } else {
      for (std::size_t a0 = 0; a0 < n; ++a0)
        for (std::size_t a1 = 0; a1 < n; ++a1) {
          std::size_t b0 = (a0 + w) % n, b1 = (a1 + w) % n;
          next[a0 * n + a1] = ((sums[a0 * n + a1] + sums[b0 * n + a1]) + sums[a0 * n + b1]) + sums[b0 * n + b1];
        }
    }
    std::swap(sums, next);
  }
}

/// M_r f = (M |f|^r)^{1/r} over anchored cubes with dyadic sides B/N, ..., B.
inline std::vector<double> hl_maximal_values(const SampledField& f, double r) {
  if (!(r > 0)) throw ConfigError("maximal: r must be positive");
  std::vector<double> g(f.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(std::abs(f.values[i]), r);
  std::vector<double> best(g.size(), 0.0);
  scale_maxima(f.grid, g, [&](std::size_t, const std::vector<double>& m) {
    for (std::size_t i = 0; i < m.size(); ++i) best[i] = std::max(best[i], m[i]);
  });
  for (auto& v : best) v = std::pow(v, 1.0 / r);
  return best;
}

inline SampledField hl_maximal(const SampledField& f, double r) { return real_field(f.grid, hl_maximal_values(f, r)); }

/// M_r^{k,eps}: small-cube supremum (2^k l(Q) <= 1) plus the damped large-cube supremum.
inline std::vector<double> variant_maximal_values(const SampledField& f, double r, int k, double epsilon) {
  MaximalParams{r, 1.0, epsilon, k}.validate();
  std::vector<double> g(f.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(std::abs(f.values[i]), r);
  std::vector<double> small(g.size(), 0.0), large(g.size(), 0.0);
  const double h = f.grid.spacing();
  scale_maxima(f.grid, g, [&](std::size_t w, const std::vector<double>& m) {
    double scaled_side = std::ldexp(static_cast<double>(w) * h, k);
    if (scaled_side <= 1.0) {
      for (std::size_t i = 0; i < m.size(); ++i) small[i] = std::max(small[i], std::pow(m[i], 1.0 / r));
    } else {
      double damp = std::pow(scaled_side, -epsilon);
      for (std::size_t i = 0; i < m.size(); ++i) large[i] = std::max(large[i], damp * std::pow(m[i], 1.0 / r));
    }
  });
  for (std::size_t i = 0; i < g.size(); ++i) small[i] += large[i];
  return small;
}

inline SampledField variant_maximal(const SampledField& f, double r, int k, double epsilon) {
  return real_field(f.grid, variant_maximal_values(f, r, k, epsilon));
}

namespace detail {

// Weights (1 + lambda * m * h)^{-sigma} for integer cell offsets m = 0..n/2.
inline std::vector<double> peetre_weights(const TorusGrid& g, double sigma, double lambda) {
  std::vector<double> w(g.n() / 2 + 1);
  for (std::size_t m = 0; m < w.size(); ++m) w[m] = std::pow(1.0 + lambda * static_cast<double>(m) * g.spacing(), -sigma);
  return w;
}

// If |f| takes only the values {0, c}, returns c (and true); exact shortcut applies.
inline bool two_level(const std::vector<double>& a, double& c) {
  c = 0;
  for (double v : a) {
    if (v == 0) continue;
    if (c == 0) c = v;
    else if (v != c) return false;
  }
  return true;
}

// Cyclic distance (in cells) to the nearest nonzero entry; n/2+1 if none.
inline std::vector<std::size_t> cyclic_distance(const std::vector<double>& a) {
  const std::size_t n = a.size(), far = n / 2 + 1;
  std::vector<std::size_t> d(n, far);
  bool any = false;
  for (double v : a) any = any || v != 0;
  if (!any) return d;
  std::size_t last = far * 4;
  // two sweeps in each direction cover the wrap-around
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] != 0) last = 0;
      else if (last < far * 4) ++last;
      d[i] = std::min(d[i], last);
    }
  last = far * 4;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t j = n; j-- > 0;) {
      if (a[j] != 0) last = 0;
      else if (last < far * 4) ++last;
      d[j] = std::min(d[j], last);
    }
  for (auto& v : d) v = std::min(v, far);
  return d;
}

}  // namespace detail

/// Peetre maximal function sup_y |f(x-y)| / (1 + lambda |y|)^sigma over grid translates,
/// with |y| the torus distance. Exact on the grid: the scan over y stops once the weight bound
/// certifies no farther translate can win.
inline std::vector<double> peetre_maximal_values(const SampledField& f, double sigma, double lambda) {
  if (!(sigma > 0)) throw ConfigError("peetre: sigma must be positive");
  if (!(lambda > 0)) throw ConfigError("peetre: scale must be positive");
  const auto& g = f.grid;
  const std::size_t n = g.n(), half = n / 2;
  auto a = moduli(f);
  double fmax = 0;
  for (double v : a) fmax = std::max(fmax, v);
  std::vector<double> out(a.size(), 0.0);
  if (fmax == 0) return out;

  if (g.dim == 1) {
    auto w = detail::peetre_weights(g, sigma, lambda);
    double c = 0;
    if (detail::two_level(a, c)) {
      auto dist = detail::cyclic_distance(a);
      for (std::size_t i = 0; i < n; ++i) out[i] = dist[i] <= half ? c * w[dist[i]] : 0.0;
      return out;
    }
    parallel_chunks(n, 1024, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t x = lo; x < hi; ++x) {
        double best = a[x];
        for (std::size_t m = 1; m <= half; ++m) {
          if (w[m] * fmax <= best) break;
          best = std::max(best, a[(x + n - m) % n] * w[m]);
          best = std::max(best, a[(x + m) % n] * w[m]);
        }
        out[x] = best;
      }
    });
    return out;
  }

  const double h = g.spacing();
  parallel_chunks(a.size(), 64, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t x = lo; x < hi; ++x) {
      auto ax = g.axes(x);
      double best = a[x];
      for (std::size_t ring = 1; ring <= half; ++ring) {
        if (std::pow(1.0 + lambda * static_cast<double>(ring) * h, -sigma) * fmax <= best) break;
        const auto R = static_cast<long long>(ring);
        for (long long d0 = -R; d0 <= R; ++d0)
          for (long long d1 = -R; d1 <= R; ++d1) {
            if (std::max(std::llabs(d0), std::llabs(d1)) != R) continue;
            double dist = std::sqrt(static_cast<double>(d0 * d0 + d1 * d1)) * h;
            std::size_t y0 = g.wrap_index(static_cast<long long>(ax[0]) - d0), y1 = g.wrap_index(static_cast<long long>(ax[1]) - d1);
            best = std::max(best, a[y0 * n + y1] * std::pow(1.0 + lambda * dist, -sigma));
          }
      }
      out[x] = best;
    }
  });
  return out;
}

/// 𝔐_{sigma, 2^k} f.
inline SampledField peetre_maximal(const SampledField& f, double sigma, int k) {
  return real_field(f.grid, peetre_maximal_values(f, sigma, std::ldexp(1.0, k)));
}

/// sup_x a(x) / b(x) over points with b > 0.
inline double sup_ratio(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (b[i] > 0) m = std::max(m, a[i] / b[i]);
  return m;
}

enum class LemmaKind { peetre, variant };

struct MaximalLemmaReport {
  std::string lemma;
  double r = 0, q = 0, epsilon = 0;
  int mu = 0;
  double lhs = 0, rhs = 0, ratio = 0;
  bool flagged = false;
};

/// Spectral energy of f outside |xi| <= radius, relative to total.
inline double tail_outside_ball(const SampledField& f, double radius) {
  auto F = dft_forward(f);
  double in = 0, out = 0;
  for (std::size_t i = 0; i < F.coeffs.size(); ++i) (F.grid.frequency_norm(i) <= radius ? in : out) += std::norm(F.coeffs[i]);
  return in + out == 0 ? 0.0 : out / (in + out);
}

/// Sup over D_mu cubes of ((1/|P|) ∫_P sum_k v_k^q)^{1/q}, given the pointwise sum of v_k^q.
inline double dyadic_sup_power_mean(const TorusGrid& g, const std::vector<double>& sum_q, int mu, double q) {
  auto means = aligned_cube_means(g, sum_q, cube_cells(g, mu));
  double m = 0;
  for (double v : means) m = std::max(m, v);
  return std::pow(m, 1.0 / q);
}

/// Compares the D_mu cube average of the maximal functions of a band-limited family against
/// the same average of |f_k|^q. fields holds (k, f_k); only k >= mu enters.
inline MaximalLemmaReport check_maximal_lemma(const std::vector<std::pair<int, SampledField>>& fields, double r, double q, int mu,
                                              double A = 2.0, LemmaKind kind = LemmaKind::peetre, double epsilon = 0.0,
                                              double sanity_ceiling = 1e3) {
  if (!(r > 0 && q > r)) throw ConfigError("maximal lemma: need 0 < r < q");
  if (fields.empty()) throw ConfigError("maximal lemma: empty family");
  const auto& g = fields.front().second.grid;
  const double d = g.dim;
  std::vector<double> lhs_sum(g.size(), 0.0), rhs_sum(g.size(), 0.0);
  for (const auto& [k, f] : fields) {
    if (!(f.grid == g)) throw StructuralError("maximal lemma: grid mismatch");
    double tail = tail_outside_ball(f, A * std::ldexp(1.0, k));
    if (tail > 1e-20) throw ConfigError("maximal lemma: f_" + std::to_string(k) + " not supported in |xi| <= A 2^k");
    if (k < mu) continue;
    std::vector<double> m = kind == LemmaKind::peetre ? peetre_maximal_values(f, d / r, std::ldexp(1.0, k))
                                                      : variant_maximal_values(f, r, k, epsilon);
    for (std::size_t i = 0; i < g.size(); ++i) {
      lhs_sum[i] += std::pow(m[i], q);
      rhs_sum[i] += std::pow(std::abs(f.values[i]), q);
    }
  }
  MaximalLemmaReport rep;
  rep.lemma = kind == LemmaKind::peetre ? "peetre_family" : "variant_family";
  rep.r = r;
  rep.q = q;
  rep.epsilon = epsilon;
  rep.mu = mu;
  rep.lhs = dyadic_sup_power_mean(g, lhs_sum, mu, q);
  rep.rhs = dyadic_sup_power_mean(g, rhs_sum, mu, q);
  rep.ratio = rep.rhs > 0 ? rep.lhs / rep.rhs : (rep.lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  rep.flagged = rep.ratio > sanity_ceiling;
  return rep;
}

}  // namespace pph
