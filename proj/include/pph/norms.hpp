#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pph/cubes.hpp"
#include "pph/grid.hpp"
#include "pph/littlewood_paley.hpp"
#include "pph/parallel.hpp"

namespace pph {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Family { besov, triebel };

struct SpaceSpec {
  Family family = Family::triebel;
  double p = 2, q = 2, s = 0;

  void validate() const {
    if (!(p > 0) || !(q > 0)) throw ConfigError("space: p and q must be positive or infinite");
    if (!std::isfinite(s)) throw ConfigError("space: s must be finite");
  }
};

struct TauPair {
  double tau_pq = 0, tau_p = 0;
};

/// tau_{p,q} = d/min(1,p,q) - d and tau_p = d/min(1,p) - d.
inline TauPair tau(double p, double q, int d) {
  if (!(p > 0) || !(q > 0)) throw ConfigError("tau: p and q must be positive");
  return {d / std::min({1.0, p, q}) - d, d / std::min(1.0, p) - d};
}

struct NormReport {
  double total = 0;
  double low = 0;                  // ||Pi_0 f||
  std::vector<double> band_terms;  // 2^{sk} ||Pi_k f||_{L^p}, k = 1..k_max
  std::optional<CubeRef> witness;  // F_inf supremum cube
  int mu = 0;
};

inline nlohmann::json to_json(const NormReport& r, const std::string& space, double s, double q) {
  nlohmann::json j{{"space", space}, {"s", s}, {"q", std::isfinite(q) ? nlohmann::json(q) : nlohmann::json("inf")}, {"total", r.total},
                   {"low", r.low}, {"bands", r.band_terms}};
  if (r.witness) j["witness_cube"] = {{"mu", r.witness->mu}, {"anchor", r.witness->anchor}};
  return j;
}

// ---- helpers ------------------------------------------------------------------------

/// a^e for a >= 0, with the exponents used by the experiments done without pow.
inline double power(double a, double e) {
  if (e == 1.0) return a;
  if (e == 2.0) return a * a;
  if (e == 0.5) return std::sqrt(a);
  return std::pow(a, e);
}

inline double lp_norm(const SampledField& f, double p) {
  if (std::isinf(p)) return f.sup_norm();
  double s = 0;
  for (auto& v : f.values) s += power(std::abs(v), p);
  return std::pow(s * f.grid.cell_volume(), 1.0 / p);
}

inline double lp_norm(const TorusGrid& g, const std::vector<double>& v, double p) {
  if (std::isinf(p)) return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += power(x, p);
  return std::pow(s * g.cell_volume(), 1.0 / p);
}

/// Calls visit(k, Pi_k f) for k = hi..lo (descending), one band in memory at a time.
template <class Fn>
void for_each_band(const FrequencyField& F, const DyadicPartition& P, int lo, int hi, Fn&& visit) {
  FrequencyField buf(F.grid);
  for (int k = std::min(hi, P.k_max()); k >= std::max(lo, 0); --k) {
    P.for_each_in_band(k, [&](std::size_t i, double v) { buf.coeffs[i] = F.coeffs[i] * v; });
    visit(k, dft_inverse(buf));
    P.for_each_in_band(k, [&](std::size_t i, double) { buf.coeffs[i] = cplx{0, 0}; });
  }
}

// ---- Besov / Triebel -------------------------------------------------------------------

inline NormReport besov_norm(const SampledField& f, const SpaceSpec& sp, const DyadicPartition& P) {
  sp.validate();
  auto F = dft_forward(f);
  NormReport r;
  r.band_terms.assign(static_cast<std::size_t>(P.k_max()), 0.0);
  for_each_band(F, P, 0, P.k_max(), [&](int k, const SampledField& b) {
    double v = lp_norm(b, sp.p);
    if (k == 0)
      r.low = v;
    else
      r.band_terms[static_cast<std::size_t>(k - 1)] = std::pow(2.0, sp.s * k) * v;
  });
  double tail = 0;
  if (std::isinf(sp.q)) {
    for (double t : r.band_terms) tail = std::max(tail, t);
  } else {
    for (double t : r.band_terms) tail += std::pow(t, sp.q);
    tail = std::pow(tail, 1.0 / sp.q);
  }
  r.total = r.low + tail;
  return r;
}

inline NormReport triebel_norm(const SampledField& f, const SpaceSpec& sp, const DyadicPartition& P);

/// F_inf^{s,q}: ||Pi_0 f||_inf + sup over dyadic cubes P of side 2^{-mu} < 1 of
/// ((1/|P|) int_P sum_{k >= mu} 2^{skq} |Pi_k f|^q)^{1/q}. mu_max caps the cube family.
inline NormReport f_infty_norm(const SampledField& f, const SpaceSpec& sp, const DyadicPartition& P, int mu_max = -1) {
  sp.validate();
  if (std::isinf(sp.q)) return besov_norm(f, {Family::besov, kInf, kInf, sp.s}, P);
  const auto& g = f.grid;
  const int top = std::min(P.k_max(), g.log2_size - static_cast<int>(std::round(std::log2(g.period))));
  const int last = mu_max < 0 ? top : std::min(mu_max, top);
  if (last < 1) throw RangeError("F_inf: no dyadic cube of side < 1 fits the grid");
  auto F = dft_forward(f);
  NormReport r;
  r.band_terms.assign(static_cast<std::size_t>(P.k_max()), 0.0);
  std::vector<double> acc(g.size(), 0.0);
  double best = -1;
  for_each_band(F, P, 0, P.k_max(), [&](int k, const SampledField& b) {
    if (k == 0) {
      r.low = b.sup_norm();
      return;
    }
    const double w = std::pow(2.0, sp.s * k * sp.q);
    double bsup = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double a = std::abs(b.values[i]);
      bsup = std::max(bsup, a);
      acc[i] += w * power(a, sp.q);
    }
    r.band_terms[static_cast<std::size_t>(k - 1)] = std::pow(2.0, sp.s * k) * bsup;
    if (k > last) return;
    // acc now holds sum_{j >= k}; cubes of side 2^{-k}
    const std::size_t cells = cube_cells(g, k);
    auto means = aligned_cube_means(g, acc, cells);
    auto it = std::max_element(means.begin(), means.end());
    if (*it > best) {
      best = *it;
      r.witness = CubeRef{k, cube_anchor(g, cells, static_cast<std::size_t>(it - means.begin()))};
      r.mu = k;
    }
  });
  r.total = r.low + std::pow(std::max(best, 0.0), 1.0 / sp.q);
  return r;
}

inline NormReport triebel_norm(const SampledField& f, const SpaceSpec& sp, const DyadicPartition& P) {
  sp.validate();
  if (std::isinf(sp.p)) return f_infty_norm(f, sp, P);
  const auto& g = f.grid;
  auto F = dft_forward(f);
  NormReport r;
  r.band_terms.assign(static_cast<std::size_t>(P.k_max()), 0.0);
  std::vector<double> acc(g.size(), 0.0);
  for_each_band(F, P, 0, P.k_max(), [&](int k, const SampledField& b) {
    if (k == 0) {
      r.low = lp_norm(b, sp.p);
      return;
    }
    const double w = std::pow(2.0, sp.s * k);
    r.band_terms[static_cast<std::size_t>(k - 1)] = w * lp_norm(b, sp.p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double a = w * std::abs(b.values[i]);
      acc[i] = std::isinf(sp.q) ? std::max(acc[i], a) : acc[i] + power(a, sp.q);
    }
  });
  if (!std::isinf(sp.q))
    for (auto& v : acc) v = power(v, 1.0 / sp.q);
  r.total = r.low + lp_norm(g, acc, sp.p);
  return r;
}

inline NormReport norm_of(const SampledField& f, const SpaceSpec& sp, const DyadicPartition& P) {
  return sp.family == Family::besov ? besov_norm(f, sp, P) : triebel_norm(f, sp, P);
}

// ---- mu-truncated functional ----------------------------------------------------------

enum class Side { lhs, rhs };

/// lhs: sup_{P in D_mu} ((1/|P|) int_P sum_{k >= mu} 2^{skq} |Pi_k f|^q)^{1/q}.
/// rhs: sup_{0 <= k < mu} 2^{ks} ||Pi_k f||_inf plus the same cube term.
/// Callers pass s + m as the smoothness for the right-hand side of the boundedness inequality.
/// Evaluates every mu in mus from one pass over the bands.
inline std::vector<double> f_infty_mu_profile(const SampledField& f, double s, double q, const std::vector<int>& mus, const DyadicPartition& P,
                                              Side side) {
  if (!(q > 0) || std::isinf(q)) throw ConfigError("mu functional: q must be positive and finite");
  const auto& g = f.grid;
  const int top = std::min(P.k_max(), g.log2_size - static_cast<int>(std::round(std::log2(g.period))));
  int lowest = top;
  for (int mu : mus) {
    if (mu < 1 || mu > top) throw RangeError("mu functional: mu must lie in [1, " + std::to_string(top) + "]");
    lowest = std::min(lowest, mu);
  }
  auto F = dft_forward(f);
  std::vector<double> acc(g.size(), 0.0), cube(static_cast<std::size_t>(top) + 1, 0.0), band_sup(static_cast<std::size_t>(top) + 1, 0.0);
  for_each_band(F, P, side == Side::rhs ? 0 : lowest, P.k_max(), [&](int k, const SampledField& b) {
    if (k < top + 1) band_sup[static_cast<std::size_t>(k)] = std::pow(2.0, k * s) * b.sup_norm();
    if (k < lowest) return;
    const double w = std::pow(2.0, s * k * q);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += w * power(std::abs(b.values[i]), q);
    if (k <= top && std::find(mus.begin(), mus.end(), k) != mus.end()) {
      auto means = aligned_cube_means(g, acc, cube_cells(g, k));
      cube[static_cast<std::size_t>(k)] = std::pow(*std::max_element(means.begin(), means.end()), 1.0 / q);
    }
  });
  std::vector<double> out;
  for (int mu : mus) {
    double low = 0;
    if (side == Side::rhs)
      for (int k = 0; k < mu; ++k) low = std::max(low, band_sup[static_cast<std::size_t>(k)]);
    out.push_back(low + cube[static_cast<std::size_t>(mu)]);
  }
  return out;
}

inline double f_infty_mu_functional(const SampledField& f, double s, double q, int mu, const DyadicPartition& P, Side side) {
  return f_infty_mu_profile(f, s, q, {mu}, P, side).front();
}

// ---- bmo -------------------------------------------------------------------------------

struct BmoReport {
  double total = 0, average_part = 0, oscillation_part = 0;
  CubeRef average_witness, oscillation_witness;
};

namespace detail {

inline std::size_t anchor_stride(std::size_t cells) { return std::max<std::size_t>(1, cells / 64); }

// sup over anchored cubes (stride-spaced anchors) of (mean |f|) or (mean |f - f_Q|).
inline std::pair<double, std::size_t> scan_cubes(const SampledField& f, std::size_t cells, bool oscillation) {
  const auto& g = f.grid;
  const std::size_t n = g.n(), stride = anchor_stride(cells);
  const std::size_t per_axis = n / stride;
  const std::size_t count = g.dim == 1 ? per_axis : per_axis * per_axis;
  const double vol = g.dim == 1 ? double(cells) : double(cells) * double(cells);
  std::vector<double> val(count, 0.0);
  parallel_for(count, [&](std::size_t c) {
    const std::size_t a0 = (g.dim == 1 ? c : c / per_axis) * stride, a1 = g.dim == 1 ? 0 : (c % per_axis) * stride;
    auto at = [&](std::size_t i, std::size_t j) { return f.values[g.flat((a0 + i) % n, g.dim == 1 ? 0 : (a1 + j) % n)]; };
    const std::size_t w1 = g.dim == 1 ? 1 : cells;
    cplx mean{0, 0};
    double mabs = 0;
    for (std::size_t i = 0; i < cells; ++i)
      for (std::size_t j = 0; j < w1; ++j) {
        cplx v = at(i, j);
        mean += v;
        mabs += std::abs(v);
      }
    mean /= vol;
    if (!oscillation) {
      val[c] = mabs / vol;
      return;
    }
    double osc = 0;
    for (std::size_t i = 0; i < cells; ++i)
      for (std::size_t j = 0; j < w1; ++j) osc += std::abs(at(i, j) - mean);
    val[c] = osc / vol;
  });
  auto it = std::max_element(val.begin(), val.end());
  std::size_t c = static_cast<std::size_t>(it - val.begin());
  std::size_t flat = g.dim == 1 ? c * stride : g.flat((c / per_axis) * stride, (c % per_axis) * stride);
  return {*it, flat};
}

}  // namespace detail

/// sup_{l(Q) >= 1} mean_Q |f| + sup_{l(Q) < 1} mean_Q |f - f_Q| over cubes of dyadic side,
/// anchored on a grid of spacing max(1 cell, side / 64).
inline BmoReport bmo_norm(const SampledField& f) {
  const auto& g = f.grid;
  const double lb = std::log2(g.period);
  if (g.period < 2.0 || std::abs(lb - std::round(lb)) > 1e-12) throw ConfigError("bmo: period must be a power of two, at least 2");
  const int b = static_cast<int>(std::round(lb));
  BmoReport r;
  r.average_part = r.oscillation_part = -1;
  for (int mu = -b; mu <= g.log2_size - b; ++mu) {
    const std::size_t cells = cube_cells(g, mu);
    const bool small = mu >= 1;
    if (small && cells < 2) continue;  // one cell has no oscillation
    auto [v, flat] = detail::scan_cubes(f, cells, small);
    double& slot = small ? r.oscillation_part : r.average_part;
    if (v > slot) {
      slot = v;
      (small ? r.oscillation_witness : r.average_witness) = CubeRef{mu, g.point(flat)};
    }
  }
  r.average_part = std::max(r.average_part, 0.0);
  r.oscillation_part = std::max(r.oscillation_part, 0.0);
  r.total = r.average_part + r.oscillation_part;
  return r;
}

}  // namespace pph
