#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <fftw3.h>

namespace pph {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Error families. Callers map these onto exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Periodic lattice [0,B)^d with N = 2^J samples per axis.
/// Storage is row-major with axis 0 (the e1 direction) slowest.
/// Frequency coefficients use FFT order: index i <-> integer m = i or i-N.
struct TorusGrid {
  int dim = 1;
  int log2_size = 3;
  double period = 1.0;

  static TorusGrid make(int d, int J, double B = 1.0) {
    if (d != 1 && d != 2) throw ConfigError("grid: dim must be 1 or 2");
    if (J < 3) throw ConfigError("grid: log2_size must be >= 3");
    if (d == 1 && J > 26) throw CapacityError("grid: J too large for d=1");
    if (d == 2 && J > 13) throw CapacityError("grid: J too large for d=2");
    if (!(B > 0) || !std::isfinite(B)) throw ConfigError("grid: period must be positive");
    return TorusGrid{d, J, B};
  }

  std::size_t n() const { return std::size_t{1} << log2_size; }
  std::size_t size() const { return dim == 1 ? n() : n() * n(); }
  double spacing() const { return period / static_cast<double>(n()); }
  double cell_volume() const { return std::pow(spacing(), dim); }
  /// Largest representable frequency magnitude along one axis (exclusive of Nyquist).
  double nyquist() const { return static_cast<double>(n()) / (2.0 * period); }

  long long signed_index(std::size_t i) const {
    auto N = static_cast<long long>(n());
    auto v = static_cast<long long>(i);
    return v < N / 2 ? v : v - N;
  }
  std::size_t wrap_index(long long m) const {
    auto N = static_cast<long long>(n());
    long long r = m % N;
    if (r < 0) r += N;
    return static_cast<std::size_t>(r);
  }
  bool is_nyquist(std::size_t i) const { return i == n() / 2; }

  /// Per-axis integer coordinates of a flat index.
  std::array<std::size_t, 2> axes(std::size_t flat) const {
    if (dim == 1) return {flat, 0};
    return {flat / n(), flat % n()};
  }
  std::size_t flat(std::size_t i0, std::size_t i1 = 0) const {
    return dim == 1 ? i0 : i0 * n() + i1;
  }

  std::array<double, 2> point(std::size_t flat_index) const {
    auto a = axes(flat_index);
    return {spacing() * static_cast<double>(a[0]), dim == 2 ? spacing() * static_cast<double>(a[1]) : 0.0};
  }
  std::array<double, 2> frequency(std::size_t flat_index) const {
    auto a = axes(flat_index);
    double f0 = static_cast<double>(signed_index(a[0])) / period;
    double f1 = dim == 2 ? static_cast<double>(signed_index(a[1])) / period : 0.0;
    return {f0, f1};
  }
  double frequency_norm(std::size_t flat_index) const {
    auto f = frequency(flat_index);
    return dim == 1 ? std::abs(f[0]) : std::hypot(f[0], f[1]);
  }
  /// True if any axis sits on the Nyquist row.
  bool touches_nyquist(std::size_t flat_index) const {
    auto a = axes(flat_index);
    return is_nyquist(a[0]) || (dim == 2 && is_nyquist(a[1]));
  }

  /// Torus distance between grid points, in spatial units.
  double torus_distance(std::size_t a, std::size_t b) const {
    auto pa = axes(a), pb = axes(b);
    double s = 0;
    for (int ax = 0; ax < dim; ++ax) {
      auto diff = static_cast<long long>(pa[ax]) - static_cast<long long>(pb[ax]);
      double m = static_cast<double>(std::llabs(signed_index(wrap_index(diff))));
      s += m * m;
    }
    return std::sqrt(s) * spacing();
  }

  bool operator==(const TorusGrid& o) const {
    return dim == o.dim && log2_size == o.log2_size && period == o.period;
  }
};

struct SampledField {
  TorusGrid grid;
  std::vector<cplx> values;

  SampledField() = default;
  explicit SampledField(const TorusGrid& g) : grid(g), values(g.size(), cplx{0, 0}) {}
  SampledField(const TorusGrid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw StructuralError("field: length does not match grid");
  }
  double sup_norm() const {
    double m = 0;
    for (auto& v : values) m = std::max(m, std::abs(v));
    return m;
  }
  bool all_finite() const {
    for (auto& v : values)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

struct FrequencyField {
  TorusGrid grid;
  std::vector<cplx> coeffs;

  FrequencyField() = default;
  explicit FrequencyField(const TorusGrid& g) : grid(g), coeffs(g.size(), cplx{0, 0}) {}
  FrequencyField(const TorusGrid& g, std::vector<cplx> c) : grid(g), coeffs(std::move(c)) {
    if (coeffs.size() != grid.size()) throw StructuralError("spectrum: length does not match grid");
  }
};

namespace detail {

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }
  fftw_plan get(int dim, std::size_t n, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_tuple(dim, n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::size_t total = dim == 1 ? n : n * n;
    auto* buf = fftw_alloc_complex(total);
    fftw_plan p = dim == 1 ? fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED)
                           : fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf, buf, sign,
                                              FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!p) throw std::runtime_error("fftw: plan creation failed");
    plans_.emplace(key, p);
    return p;
  }
  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans_;
};

inline void fft_in_place(const TorusGrid& g, std::vector<cplx>& data, int sign) {
  auto plan = PlanCache::instance().get(g.dim, g.n(), sign);
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, p, p);
}

}  // namespace detail

/// f^(xi) = (B/N)^d sum_x f(x) exp(-2 pi i <x,xi>).
inline FrequencyField dft_forward(const SampledField& f) {
  if (f.values.size() != f.grid.size()) throw StructuralError("dft_forward: size mismatch");
  FrequencyField out(f.grid, f.values);
  detail::fft_in_place(f.grid, out.coeffs, FFTW_FORWARD);
  const double w = f.grid.cell_volume();
  for (auto& c : out.coeffs) c *= w;
  return out;
}

/// f(x) = B^{-d} sum_xi f^(xi) exp(2 pi i <x,xi>).
inline SampledField dft_inverse(const FrequencyField& F) {
  if (F.coeffs.size() != F.grid.size()) throw StructuralError("dft_inverse: size mismatch");
  SampledField out(F.grid, F.coeffs);
  detail::fft_in_place(F.grid, out.values, FFTW_BACKWARD);
  const double w = 1.0 / std::pow(F.grid.period, F.grid.dim);
  for (auto& v : out.values) v *= w;
  return out;
}

/// Pure lattice mode exp(2 pi i <m/B, x>) for integer frequency indices m.
inline SampledField lattice_mode(const TorusGrid& g, long long m0, long long m1 = 0) {
  SampledField f(g);
  const auto N = static_cast<long long>(g.n());
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto a = g.axes(i);
    // reduce the phase exactly in integer arithmetic before scaling
    long long ph = (m0 * static_cast<long long>(a[0])) % N;
    if (g.dim == 2) ph = (ph + (m1 * static_cast<long long>(a[1])) % N) % N;
    double t = 2.0 * kPi * static_cast<double>(ph) / static_cast<double>(N);
    f.values[i] = {std::cos(t), std::sin(t)};
  }
  return f;
}

// ---- binary container -------------------------------------------------------

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

enum class Domain : std::uint8_t { space = 0, frequency = 1 };

inline void write_container(const std::string& path, const TorusGrid& g, Domain tag, const std::vector<cplx>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("PPH1", 4);
  std::int32_t d = g.dim, J = g.log2_size;
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(&J), 4);
  os.write(reinterpret_cast<const char*>(&g.period), 8);
  auto t = static_cast<std::uint8_t>(tag);
  os.write(reinterpret_cast<const char*>(&t), 1);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(cplx)));
}

inline void write_field(const std::string& path, const SampledField& f) {
  write_container(path, f.grid, Domain::space, f.values);
}
inline void write_spectrum(const std::string& path, const FrequencyField& F) {
  write_container(path, F.grid, Domain::frequency, F.coeffs);
}

struct Container {
  TorusGrid grid;
  Domain tag = Domain::space;
  std::vector<cplx> data;
};

inline Container read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StructuralError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PPH1", 4) != 0) throw StructuralError("bad magic in " + path);
  std::int32_t d = 0, J = 0;
  double B = 0;
  std::uint8_t t = 0;
  is.read(reinterpret_cast<char*>(&d), 4);
  is.read(reinterpret_cast<char*>(&J), 4);
  is.read(reinterpret_cast<char*>(&B), 8);
  is.read(reinterpret_cast<char*>(&t), 1);
  if (!is || t > 1) throw StructuralError("truncated or malformed header in " + path);
  TorusGrid g;
  try {
    g = TorusGrid::make(d, J, B);
  } catch (const std::exception& e) {
    throw StructuralError(std::string("bad grid header: ") + e.what());
  }
  Container c{g, static_cast<Domain>(t), std::vector<cplx>(g.size())};
  is.read(reinterpret_cast<char*>(c.data.data()), static_cast<std::streamsize>(c.data.size() * sizeof(cplx)));
  if (!is) throw StructuralError("payload shorter than N^d in " + path);
  is.peek();
  if (!is.eof()) throw StructuralError("trailing bytes after payload in " + path);
  return c;
}

inline SampledField read_field(const std::string& path) {
  auto c = read_container(path);
  if (c.tag == Domain::frequency) return dft_inverse(FrequencyField(c.grid, std::move(c.data)));
  return SampledField(c.grid, std::move(c.data));
}

}  // namespace pph
