#pragma once

#include <cmath>
#include <memory>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pph/littlewood_paley.hpp"

namespace pph {

/// Window profile: zero outside 9/8 < r < 15/8, one on [5/4, 7/4], nonnegative in between.
class WindowProfile {
 public:
  static constexpr double kOuterLo = 9.0 / 8.0, kInnerLo = 5.0 / 4.0, kInnerHi = 7.0 / 4.0, kOuterHi = 15.0 / 8.0;

  explicit WindowProfile(std::shared_ptr<const SmoothCutoff> c) : c_(std::move(c)) {}

  double operator()(double r) const {
    r = std::abs(r);
    if (r <= kOuterLo || r >= kOuterHi) return 0.0;
    if (r >= kInnerLo && r <= kInnerHi) return 1.0;
    if (r < kInnerLo) return c_->transition((r - kOuterLo) * 8.0);
    return 1.0 - c_->transition((r - kInnerHi) * 8.0);
  }

 private:
  std::shared_ptr<const SmoothCutoff> c_;
};

/// Nonnegative bump supported in 1 < r < 2, used for the positive kernel in the lower bounds.
/// The spatial kernel is rescaled so that it is >= 1 on the ball of radius 2^{-M+1}.
class PositiveKernelProfile {
 public:
  PositiveKernelProfile(int dim, int M) : dim_(dim), M_(M) {
    if (dim != 1 && dim != 2) throw ConfigError("kernel profile: dimension must be 1 or 2");
    const double radius = std::ldexp(1.0, -M + 1);
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 256; ++i) lo = std::min(lo, unscaled_spatial(radius * i / 256.0));
    if (!(lo > 0)) throw ConfigError("kernel profile: M = " + std::to_string(M) + " too small for positivity on the inner ball");
    scale_ = 1.0 / lo;
  }

  double spectral(double r) const {
    r = std::abs(r);
    if (r <= 1.0 || r >= 2.0) return 0.0;
    double s = 2.0 * (r - 1.5);
    return scale_ * std::exp(-1.0 / (1.0 - s * s));
  }
  double spatial(double x) const { return scale_ * unscaled_spatial(std::abs(x)); }
  double scale() const { return scale_; }
  int M() const { return M_; }

 private:
  double unscaled_spatial(double x) const {
    auto bump = [](double r) {
      double s = 2.0 * (r - 1.5);
      return (s <= -1 || s >= 1) ? 0.0 : std::exp(-1.0 / (1.0 - s * s));
    };
    using boost::math::quadrature::gauss_kronrod;
    if (dim_ == 1) {
      auto f = [&](double r) { return 2.0 * bump(r) * std::cos(2.0 * kPi * r * x); };
      return gauss_kronrod<double, 31>::integrate(f, 1.0, 2.0, 10, 1e-14);
    }
    auto f = [&](double r) { return 2.0 * kPi * r * bump(r) * std::cyl_bessel_j(0.0, 2.0 * kPi * r * x); };
    return gauss_kronrod<double, 31>::integrate(f, 1.0, 2.0, 10, 1e-14);
  }

  int dim_;
  int M_;
  double scale_ = 1.0;
};

/// Low-frequency bump with transform eta(2|xi|), supported in |xi| <= 1.
inline double unit_bump_spectrum(const SmoothCutoff& c, double r) { return c.eta(2.0 * r); }

}  // namespace pph
