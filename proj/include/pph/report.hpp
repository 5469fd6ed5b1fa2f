#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "pph/counterexamples.hpp"
#include "pph/pdo.hpp"

namespace pph {

inline constexpr const char* kToolVersion = "0.1.0";

/// Git blob id of a byte string: sha1("blob <len>\0" + bytes).
inline std::string blob_hash(const std::string& bytes) {
  std::string msg = "blob " + std::to_string(bytes.size());
  msg.push_back('\0');
  msg += bytes;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(msg.data(), msg.size(), md, &len, EVP_sha1(), nullptr) != 1) throw std::runtime_error("sha1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

struct RunManifest {
  std::string command, config_path, out_dir, config_hash;
  std::uint64_t seed = 0;
  double wall_clock = 0;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"config", m.config_path}, {"seed", m.seed},          {"out", m.out_dir},
          {"version", kToolVersion}, {"wall_clock_s", m.wall_clock}, {"config_hash", m.config_hash}};
}

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string growth_csv(const GrowthTable& t, const std::string& hash) {
  std::ostringstream os;
  os << "# config_hash " << hash << "\n";
  os << "L,mean_ratio,std,lower_bound_analytic,slope_running\n";
  for (const auto& r : t.rows)
    os << r.L << ',' << fmt17(r.mean_ratio) << ',' << fmt17(r.std) << ',' << fmt17(r.lower_bound_analytic) << ',' << fmt17(r.slope_running) << '\n';
  return os.str();
}

inline std::string kernel_csv(const std::vector<KernelRow>& rows, const std::string& hash) {
  std::ostringstream os;
  os << "# config_hash " << hash << "\n";
  os << "k,j,M,weighted_sup,normalizer,ratio\n";
  for (const auto& r : rows) os << r.k << ',' << r.j << ',' << fmt17(r.M) << ',' << fmt17(r.weighted_sup) << ',' << fmt17(r.normalizer) << ',' << fmt17(r.ratio) << '\n';
  return os.str();
}

/// Log-log plot of mean ratio against L with a guide line of the predicted slope through the first point.
inline std::string growth_svg(const GrowthTable& t, const std::string& hash) {
  const double W = 640, H = 420, left = 70, right = 20, top = 40, bottom = 50;
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : t.rows)
    if (r.mean_ratio > 0 && std::isfinite(r.mean_ratio)) pts.emplace_back(std::log10(r.L), std::log10(r.mean_ratio));
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!pts.empty()) {
    x0 = x1 = pts[0].first;
    y0 = y1 = pts[0].second;
    for (auto [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 - x0 < 1e-9) x1 = x0 + 1;
  if (y1 - y0 < 1e-9) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", v);
    return std::string(b);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<!-- config_hash " << hash << " -->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << t.kind << " (c = " << t.c << "): " << t.verdict << ", slope " << num(t.slope)
     << ", predicted " << num(t.predicted) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">" << num(std::pow(10.0, xv)) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  os << "<text x=\"" << (W + left) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">L (log scale)</text>\n";
  os << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2 << ")\" text-anchor=\"middle\">log10 mean ratio</text>\n";
  if (!pts.empty() && std::isfinite(t.predicted)) {
    const double ya = pts[0].second, yb = ya + t.predicted * (x1 - pts[0].first);
    os << "<line x1=\"" << num(px(pts[0].first)) << "\" y1=\"" << num(py(ya)) << "\" x2=\"" << num(px(x1)) << "\" y2=\"" << num(py(yb))
       << "\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
  }
  if (!pts.empty()) {
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) os << num(px(x)) << ',' << num(py(y)) << ' ';
    os << "\"/>\n";
    for (auto [x, y] : pts) os << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3.5\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace pph
