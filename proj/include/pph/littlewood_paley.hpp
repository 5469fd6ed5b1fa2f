#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include "json.hpp"

#include "pph/grid.hpp"
#include "pph/parallel.hpp"

namespace pph {

/// Value and first two derivatives of a one-variable function.
struct Jet {
  double v = 0, d1 = 0, d2 = 0;
  Jet operator-(const Jet& o) const { return {v - o.v, d1 - o.d1, d2 - o.d2}; }
  Jet operator+(const Jet& o) const { return {v + o.v, d1 + o.d1, d2 + o.d2}; }
  Jet scaled(double c) const { return {c * v, c * d1, c * d2}; }
};

/// Radial cutoff eta: 1 on |t| <= 1, 0 on |t| >= 2, with a C-infinity ramp
/// built by integrating exp(-a / (1 - s^2)) and normalizing.
class SmoothCutoff {
 public:
  explicit SmoothCutoff(double smoothness = 1.0, int knots = 1024) : a_(smoothness), knots_(knots) {
    if (!(smoothness > 0) || !std::isfinite(smoothness)) throw ConfigError("cutoff: smoothness must be positive");
    if (knots < 16) throw ConfigError("cutoff: need at least 16 knots");
    cumulative_.assign(static_cast<std::size_t>(knots) + 1, 0.0);
    auto f = [this](double s) { return bump(s); };
    for (int i = 0; i < knots; ++i) {
      double lo = knot(i), hi = knot(i + 1);
      cumulative_[i + 1] = cumulative_[i] + boost::math::quadrature::gauss<double, 8>::integrate(f, lo, hi);
    }
    total_ = cumulative_.back();
  }

  double smoothness() const { return a_; }
  int knots() const { return knots_; }

  double bump(double s) const {
    if (s <= -1.0 || s >= 1.0) return 0.0;
    return std::exp(-a_ / (1.0 - s * s));
  }
  double bump_derivative(double s) const {
    if (s <= -1.0 || s >= 1.0) return 0.0;
    double w = 1.0 - s * s;
    return bump(s) * (-2.0 * a_ * s / (w * w));
  }

  /// Normalized ramp rising from 0 at u = 0 to 1 at u = 1.
  double transition(double u) const {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    double s = 2.0 * u - 1.0;
    auto i = static_cast<int>((s + 1.0) * 0.5 * knots_);
    i = std::clamp(i, 0, knots_ - 1);
    auto f = [this](double y) { return bump(y); };
    double partial = boost::math::quadrature::gauss<double, 8>::integrate(f, knot(i), s);
    return (cumulative_[i] + partial) / total_;
  }
  double transition_d1(double u) const { return 2.0 * bump(2.0 * u - 1.0) / total_; }
  double transition_d2(double u) const { return 4.0 * bump_derivative(2.0 * u - 1.0) / total_; }

  double eta(double t) const {
    double a = std::abs(t);
    if (a <= 1.0) return 1.0;
    if (a >= 2.0) return 0.0;
    return 1.0 - transition(a - 1.0);
  }

  Jet eta_jet(double t) const {
    double a = std::abs(t);
    if (a <= 1.0) return {1.0, 0.0, 0.0};
    if (a >= 2.0) return {0.0, 0.0, 0.0};
    double u = a - 1.0;
    double sgn = t < 0 ? -1.0 : 1.0;
    return {1.0 - transition(u), -sgn * transition_d1(u), -transition_d2(u)};
  }

 private:
  double knot(int i) const { return -1.0 + 2.0 * static_cast<double>(i) / knots_; }

  double a_;
  int knots_;
  double total_ = 1.0;
  std::vector<double> cumulative_;
};

/// Largest band index whose support stays strictly below Nyquist.
inline int max_band(const TorusGrid& g) {
  int k = 0;
  while (std::ldexp(1.0, k + 2) < g.nyquist()) ++k;
  return k;
}

/// Inhomogeneous Littlewood-Paley system on a torus lattice.
/// phi_k(r) = eta(r / 2^k) - eta(r / 2^{k-1}) for 1 <= k <= k_max,
/// Phi = 1 - sum_k phi_k (band 0).
class DyadicPartition {
 public:
  DyadicPartition(const TorusGrid& g, std::shared_ptr<const SmoothCutoff> cutoff) : grid_(g), cutoff_(std::move(cutoff)) {
    k_max_ = max_band(g);
    if (k_max_ < 3) throw ConfigError("partition: grid too small, need k_max >= 3 (increase J or decrease B)");
    if (g.dim == 1) build_cache();
  }

  const TorusGrid& grid() const { return grid_; }
  const SmoothCutoff& cutoff() const { return *cutoff_; }
  std::shared_ptr<const SmoothCutoff> cutoff_ptr() const { return cutoff_; }
  int k_max() const { return k_max_; }

  /// Radial band profile; k = 0 is the low-pass complement.
  double radial(int k, double r) const {
    if (k == 0) {
      double s = 0.0;
      for (int j : relevant_bands(r)) s += phi(j, r);
      return 1.0 - s;
    }
    check_band(k);
    return phi(k, r);
  }

  /// Radial jet in r (d = 1 callers pass signed xi; the profiles are even).
  Jet radial_jet(int k, double xi) const {
    if (k == 0) {
      Jet s;
      for (int j : relevant_bands(std::abs(xi))) s = s + phi_jet(j, xi);
      return Jet{1.0, 0.0, 0.0} - s;
    }
    check_band(k);
    return phi_jet(k, xi);
  }

  double value(int k, std::size_t flat) const { return radial(k, grid_.frequency_norm(flat)); }

  /// Calls fn(flat_index, multiplier) for every lattice point where band k is nonzero.
  template <class Fn>
  void for_each_in_band(int k, Fn&& fn) const {
    if (k < 0 || k > k_max_) throw RangeError("band index out of range");
    if (k == 0) {
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        double v = value(0, i);
        if (v != 0.0) fn(i, v);
      }
      return;
    }
    if (grid_.dim == 1) {
      const auto& c = cache_[static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < c.values.size(); ++j) {
        double v = c.values[j];
        if (v == 0.0) continue;
        long long m = c.m_lo + static_cast<long long>(j);
        fn(grid_.wrap_index(m), v);
        if (m != 0) fn(grid_.wrap_index(-m), v);
      }
      return;
    }
    auto reach = static_cast<long long>(std::ceil(std::ldexp(grid_.period, k + 1)));
    for (long long m0 = -reach; m0 <= reach; ++m0)
      for (long long m1 = -reach; m1 <= reach; ++m1) {
        std::size_t flat = grid_.flat(grid_.wrap_index(m0), grid_.wrap_index(m1));
        double v = value(k, flat);
        if (v != 0.0) fn(flat, v);
      }
  }

  /// sup over the lattice of |Phi + sum_k phi_k - 1|.
  double residual() const {
    std::vector<double> partial(grid_.size(), 0.0);
    for (int k = 0; k <= k_max_; ++k) for_each_in_band(k, [&](std::size_t i, double v) { partial[i] += v; });
    double worst = 0.0;
    for (double s : partial) worst = std::max(worst, std::abs(s - 1.0));
    return worst;
  }

 private:
  struct BandCache {
    long long m_lo = 0;
    std::vector<double> values;
  };

  void check_band(int k) const {
    if (k < 1 || k > k_max_) throw RangeError("band index out of range");
  }
  double phi(int k, double r) const {
    return cutoff_->eta(std::ldexp(r, -k)) - cutoff_->eta(std::ldexp(r, -(k - 1)));
  }
  Jet phi_jet(int k, double xi) const {
    double s1 = std::ldexp(1.0, -k), s0 = std::ldexp(1.0, -(k - 1));
    Jet a = cutoff_->eta_jet(xi * s1), b = cutoff_->eta_jet(xi * s0);
    return Jet{a.v - b.v, a.d1 * s1 - b.d1 * s0, a.d2 * s1 * s1 - b.d2 * s0 * s0};
  }
  struct BandList {
    int ks[4];
    int n = 0;
    const int* begin() const { return ks; }
    const int* end() const { return ks + n; }
  };
  // Bands that can be nonzero at radius r; all others vanish exactly.
  BandList relevant_bands(double r) const {
    BandList out;
    if (!(r > 0)) return out;
    int e = std::ilogb(r);
    for (int k = e - 1; k <= e + 2; ++k)
      if (k >= 1 && k <= k_max_) out.ks[out.n++] = k;
    return out;
  }
  void build_cache() {
    cache_.resize(static_cast<std::size_t>(k_max_) + 1);
    for (int k = 1; k <= k_max_; ++k) {
      auto lo = static_cast<long long>(std::floor(std::ldexp(grid_.period, k - 1)));
      auto hi = static_cast<long long>(std::ceil(std::ldexp(grid_.period, k + 1)));
      auto& c = cache_[static_cast<std::size_t>(k)];
      c.m_lo = lo;
      c.values.resize(static_cast<std::size_t>(hi - lo + 1));
      parallel_chunks(c.values.size(), 4096, [&](std::size_t a, std::size_t b) {
        for (std::size_t j = a; j < b; ++j) c.values[j] = phi(k, static_cast<double>(lo + static_cast<long long>(j)) / grid_.period);
      });
    }
  }

  TorusGrid grid_;
  std::shared_ptr<const SmoothCutoff> cutoff_;
  int k_max_ = 0;
  std::vector<BandCache> cache_;
};

inline DyadicPartition build_partition(const TorusGrid& g, double smoothness = 1.0) {
  return DyadicPartition(g, std::make_shared<const SmoothCutoff>(smoothness));
}

/// Spectrum of Pi_k f.
inline FrequencyField band_spectrum(const FrequencyField& F, int k, const DyadicPartition& P) {
  if (!(F.grid == P.grid())) throw StructuralError("band_spectrum: grid mismatch");
  FrequencyField out(F.grid);
  P.for_each_in_band(k, [&](std::size_t i, double v) { out.coeffs[i] = F.coeffs[i] * v; });
  return out;
}

/// Spectrum of Pi*_k f = (Pi_{k-1} + Pi_k + Pi_{k+1}) f, with Pi_0 at the bottom.
inline FrequencyField band_star_spectrum(const FrequencyField& F, int k, const DyadicPartition& P) {
  if (k < 1 || k > P.k_max() - 1) throw RangeError("project_star: k must lie in [1, k_max-1]");
  FrequencyField out(F.grid);
  for (int j = k - 1; j <= k + 1; ++j)
    P.for_each_in_band(j, [&](std::size_t i, double v) { out.coeffs[i] += F.coeffs[i] * v; });
  return out;
}

inline bool spectrum_is_zero(const FrequencyField& F) {
  for (auto& c : F.coeffs)
    if (c != cplx{0, 0}) return false;
  return true;
}

inline SampledField project(const SampledField& f, int k, const DyadicPartition& P) {
  return dft_inverse(band_spectrum(dft_forward(f), k, P));
}

inline SampledField project_star(const SampledField& f, int k, const DyadicPartition& P) {
  return dft_inverse(band_star_spectrum(dft_forward(f), k, P));
}

/// Fraction of spectral energy outside |xi| <= 2^{k_max - 1}; experiments keep this below tolerance.
inline double content_tail(const FrequencyField& F, const DyadicPartition& P) {
  const double edge = std::ldexp(1.0, P.k_max() - 1);
  double inside = 0, outside = 0;
  for (std::size_t i = 0; i < F.coeffs.size(); ++i) {
    double e = std::norm(F.coeffs[i]);
    (F.grid.frequency_norm(i) <= edge ? inside : outside) += e;
  }
  double total = inside + outside;
  return total == 0 ? 0.0 : outside / total;
}

inline void validate_content(const FrequencyField& F, const DyadicPartition& P, double tol = 1e-10) {
  double tail = content_tail(F, P);
  if (tail > tol)
    throw ConfigError("spectral content above 2^(k_max-1): relative tail " + std::to_string(tail));
}

/// Writes manifest.json plus one container per band (frequency domain, real multipliers).
inline void export_partition(const DyadicPartition& P, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto& g = P.grid();
  nlohmann::json bands = nlohmann::json::array();
  for (int k = 0; k <= P.k_max(); ++k) {
    FrequencyField table(g);
    P.for_each_in_band(k, [&](std::size_t i, double v) { table.coeffs[i] = v; });
    char name[32];
    std::snprintf(name, sizeof name, "band_%02d.bin", k);
    write_spectrum((fs::path(dir) / name).string(), table);
    bands.push_back({{"k", k}, {"file", name}});
  }
  nlohmann::json m = {{"dim", g.dim},
                      {"J", g.log2_size},
                      {"B", g.period},
                      {"k_max", P.k_max()},
                      {"profile", {{"kind", "integrated_exp_bump"}, {"smoothness", P.cutoff().smoothness()}, {"knots", P.cutoff().knots()}}},
                      {"bands", bands}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << m.dump(2) << "\n";
}

}  // namespace pph
