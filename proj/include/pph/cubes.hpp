#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "pph/grid.hpp"

namespace pph {

/// A cube located by side exponent (side = 2^{-mu}) and lower-left corner.
struct CubeRef {
  int mu = 0;
  std::array<double, 2> anchor{0, 0};
  double side() const { return std::ldexp(1.0, -mu); }
};

/// Number of grid cells along one side of a dyadic cube of side 2^{-mu}.
/// Throws RangeError unless the cube is a whole number (>= 1) of cells that tiles the period.
inline std::size_t cube_cells(const TorusGrid& g, int mu) {
  double cells = std::ldexp(1.0, -mu) / g.spacing();
  double r = std::round(cells);
  if (r < 1 || std::abs(cells - r) > 1e-9 * cells) throw RangeError("cube side 2^-" + std::to_string(mu) + " is not a whole number of cells");
  auto c = static_cast<std::size_t>(r);
  if (g.n() % c != 0) throw RangeError("cube side does not tile the period");
  return c;
}

/// Means of v over the aligned cubes of `cells` cells per side. Output is indexed
/// by cube position (row-major over cube indices).
inline std::vector<double> aligned_cube_means(const TorusGrid& g, const std::vector<double>& v, std::size_t cells) {
  const std::size_t n = g.n(), per = n / cells;
  if (g.dim == 1) {
    std::vector<double> out(per, 0.0);
    for (std::size_t c = 0; c < per; ++c) {
      double s = 0;
      for (std::size_t i = c * cells; i < (c + 1) * cells; ++i) s += v[i];
      out[c] = s / static_cast<double>(cells);
    }
    return out;
  }
  std::vector<double> out(per * per, 0.0);
  for (std::size_t i0 = 0; i0 < n; ++i0)
    for (std::size_t i1 = 0; i1 < n; ++i1) out[(i0 / cells) * per + i1 / cells] += v[i0 * n + i1];
  const double vol = static_cast<double>(cells) * static_cast<double>(cells);
  for (auto& x : out) x /= vol;
  return out;
}

/// Lower-left corner of aligned cube number `index` with `cells` cells per side.
inline std::array<double, 2> cube_anchor(const TorusGrid& g, std::size_t cells, std::size_t index) {
  const std::size_t per = g.n() / cells;
  if (g.dim == 1) return {static_cast<double>(index * cells) * g.spacing(), 0.0};
  return {static_cast<double>((index / per) * cells) * g.spacing(), static_cast<double>((index % per) * cells) * g.spacing()};
}

/// True if grid point `flat` lies in the aligned cube `index`.
inline bool cube_contains(const TorusGrid& g, std::size_t cells, std::size_t index, std::size_t flat) {
  const std::size_t per = g.n() / cells;
  auto a = g.axes(flat);
  if (g.dim == 1) return a[0] / cells == index;
  return (a[0] / cells) * per + a[1] / cells == index;
}

}  // namespace pph
