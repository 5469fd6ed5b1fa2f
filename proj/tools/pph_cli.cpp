// pph: command-line front end for verification suites, blow-up experiments and norm reports.

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pph/counterexamples.hpp"
#include "pph/norms.hpp"
#include "pph/pdo.hpp"
#include "pph/report.hpp"

using namespace pph;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config, out = "pph_out", field, space = "F", p = "2", q = "2";
  double s = 0;
  std::uint64_t seed = 0;
  bool seed_set = false, as_json = false;
  int threads = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

double number(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && (v == "inf" || v == "infinity")) return kInf;
  throw ConfigError(what + " must be a number or \"inf\"");
}

double parse_exponent(const std::string& s) {
  if (s == "inf" || s == "infinity") return kInf;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad exponent '" + s + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

struct LoadedConfig {
  json body;
  std::string hash;
};

LoadedConfig load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required for this command");
  const std::string text = slurp(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") || j["schema"] != 1) throw ConfigError("config must declare \"schema\": 1");
  return {j, blob_hash(text)};
}

TorusGrid parse_grid(const json& j, int J_default) {
  allow_keys(j, {"d", "J", "B"}, "grid");
  return TorusGrid::make(get_or(j, "d", 1), get_or(j, "J", J_default), get_or(j, "B", 1.0));
}

NamedSymbolParams parse_symbol(const json& j) {
  allow_keys(j, {"kind", "m", "first", "last", "c", "band", "kappa"}, "symbol");
  NamedSymbolParams p;
  p.kind = get_or<std::string>(j, "kind", p.kind);
  p.m = get_or(j, "m", p.m);
  p.first = get_or(j, "first", p.first);
  p.last = get_or(j, "last", p.last);
  p.c = get_or(j, "c", p.c);
  p.band = get_or(j, "band", p.band);
  p.kappa = get_or(j, "kappa", p.kappa);
  return p;
}

Family parse_family(const std::string& s) {
  if (s == "F" || s == "triebel") return Family::triebel;
  if (s == "B" || s == "besov") return Family::besov;
  throw ConfigError("family must be F or B");
}

ExperimentConfig parse_experiment(const json& j) {
  allow_keys(j, {"schema", "kind", "d", "c", "M", "first", "L_list", "s", "m", "space", "trials", "seed", "grid", "mu", "sigma", "v", "cross_check_max", "expect"},
             "config");
  ExperimentConfig c;
  if (!j.contains("kind")) throw ConfigError("experiment config needs 'kind'");
  c.kind = construction_from(j["kind"].get<std::string>());
  c.d = get_or(j, "d", c.d);
  c.c = get_or(j, "c", c.c);
  c.M = get_or(j, "M", c.M);
  c.first = get_or(j, "first", c.first);
  c.L_list = get_or(j, "L_list", std::vector<int>{});
  if (c.L_list.empty()) throw ConfigError("L_list must be a nonempty list");
  c.s = get_or(j, "s", 0.0);
  c.m = get_or(j, "m", 0.0);
  c.trials = get_or(j, "trials", c.trials);
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.mu = get_or(j, "mu", c.mu);
  c.sigma = get_or(j, "sigma", 0.0);
  c.cross_check_max = get_or(j, "cross_check_max", c.cross_check_max);
  c.expect = get_or<std::string>(j, "expect", "");
  if (j.contains("space")) {
    const auto& sp = j["space"];
    allow_keys(sp, {"family", "p", "q"}, "space");
    c.space.family = parse_family(get_or<std::string>(sp, "family", "F"));
    c.space.p = sp.contains("p") ? number(sp["p"], "space.p") : 2.0;
    c.space.q = sp.contains("q") ? number(sp["q"], "space.q") : 2.0;
  }
  c.space.s = c.s;
  if (j.contains("grid")) {
    allow_keys(j["grid"], {"J", "B"}, "grid");
    c.J_cap = get_or(j["grid"], "J", c.J_cap);
    c.B = get_or(j["grid"], "B", c.B);
  }
  if (j.contains("v")) {
    const auto& v = j["v"];
    allow_keys(v, {"preset", "power", "log"}, "v");
    if (v.contains("preset"))
      c.v = v_preset(v["preset"].get<std::string>());
    else
      c.v = VSequence{get_or(v, "power", 1.0), get_or(v, "log", 0.0)};
  }
  return c;
}

void write_manifest(const Globals& G, const std::string& command, const std::string& hash, std::uint64_t seed, double seconds) {
  RunManifest m{command, G.config, G.out, hash, seed, seconds};
  write_text(fs::path(G.out) / "manifest.json", to_json(m).dump(2) + "\n");
}

SampledField seeded_field(const TorusGrid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SampledField f(g);
  for (auto& v : f.values) v = {nd(rng), nd(rng)};
  return f;
}

double max_diff(const SampledField& a, const SampledField& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

// ---- verify -------------------------------------------------------------------------------

struct CheckLine {
  std::string suite, check;
  double value, tol;
  bool ok;
};

std::vector<CheckLine> run_suite(const std::string& suite, const json& cfg, std::uint64_t seed) {
  std::vector<CheckLine> out;
  auto add = [&](const std::string& check, double value, double tol, bool ok) { out.push_back({suite, check, value, tol, ok}); };
  const auto grid = parse_grid(cfg.value("grid", json::object()), 10);
  auto P = std::make_shared<const DyadicPartition>(build_partition(grid));
  LacunaryScheme sc;
  if (cfg.contains("scheme")) {
    const auto& s = cfg["scheme"];
    allow_keys(s, {"c", "M", "L", "first"}, "scheme");
    sc.c = get_or(s, "c", sc.c);
    sc.M = get_or(s, "M", sc.M);
    sc.L = get_or(s, "L", 3);
    sc.first = get_or(s, "first", sc.first);
  } else {
    sc.L = 3;
  }
  const double s = get_or(cfg, "s", 0.5);

  if (suite == "partition") {
    add("partition_residual", P->residual(), 1e-14, P->residual() <= 1e-14);
    auto f = seeded_field(grid, seed);
    double worst = 0;
    for (int k = 1; k <= P->k_max() - 1; ++k) {
      auto pk = project(f, k, *P);
      worst = std::max(worst, max_diff(project_star(pk, k, *P), pk) / std::max(1.0, pk.sup_norm()));
    }
    add("star_projection_fixes_band", worst, 1e-12, worst <= 1e-12);
  } else if (suite == "multiplier") {
    auto f = seeded_field(grid, seed);
    double worst = 0;
    for (int k = 0; k <= P->k_max(); ++k) {
      auto a = build_named_symbol({.kind = "multiplier", .band = k}, P);
      worst = std::max(worst, max_diff(apply_symbol(a, f), project(f, k, *P)) / std::max(1.0, f.sup_norm()));
    }
    add("multiplier_equals_projection", worst, 1e-12, worst <= 1e-12);
  } else if (suite == "nearfar") {
    auto f = seeded_field(grid, seed);
    auto a = build_named_symbol({.kind = "dilated", .m = 0.5, .first = 1, .last = std::max(1, P->k_max() - 2)}, P);
    auto D = split_near_far(a, P);
    auto near = apply_symbol(D.near(), f), far = apply_symbol(D.far(), f), total = apply_symbol(D.total(), f);
    double err = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) err = std::max(err, std::abs(near.values[i] + far.values[i] - total.values[i]));
    err /= std::max(1.0, total.sup_norm());
    add("near_plus_far", err, 1e-11, err <= 1e-11);
    auto tw = twisted_diagonal_check(D.far(), 8.0);
    const double frac = tw.total_mass > 0 ? tw.violation_mass / tw.total_mass : 0.0;
    add("far_twisted_diagonal", frac, 1e-12, frac <= 1e-12);
  } else if (suite == "identity") {
    auto g = grid_for(sc, Construction::deterministic, grid.dim, grid.period);
    auto Pi = std::make_shared<const DyadicPartition>(build_partition(g));
    for (int l = sc.first; l < sc.L; ++l)
      for (int n = l + 1; n <= sc.L; ++n) {
        auto r = double_condition_check(sc, Pi, s, l, n, hp_bump(g, sc.scale(n), sc.M, 1.0));
        add("band_identity_l" + std::to_string(l) + "_n" + std::to_string(n), r.max_rel_error, 1e-10, r.ok);
      }
  } else if (suite == "ching") {
    auto g = grid_for(sc, Construction::ching, grid.dim, grid.period);
    auto Pc = std::make_shared<const DyadicPartition>(build_partition(g));
    auto r = ching_closed_form_check(sc, Pc, s, 0.0, VSequence{0.0, 0.0});
    add("ching_closed_form", r.max_rel_error, 1e-10, r.ok);
  } else if (suite == "kernel") {
    std::vector<double> r;
    for (int k = 3; k <= P->k_max() - 2; ++k) {
      auto D = split_near_far(build_named_symbol({.kind = "multiplier", .band = k}, P), P);
      r.push_back(kernel_decay_report(D, BandKind::full, {k}, {2.0})[0].ratio);
    }
    if (r.empty()) throw ConfigError("kernel suite needs k_max >= 5");
    const double spread = *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
    add("multiplier_kernel_spread", spread, 4.0, std::isfinite(spread) && spread <= 4.0);
  } else if (suite == "maximal") {
    std::vector<std::pair<int, SampledField>> fam;
    for (int k = 2; k <= P->k_max(); ++k) fam.emplace_back(k, project(seeded_field(grid, seed + static_cast<std::uint64_t>(k)), k, *P));
    std::vector<double> r;
    for (int mu = 1; mu <= 3; ++mu) r.push_back(check_maximal_lemma(fam, 0.5, 1.0, mu).ratio);
    const double spread = *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
    add("maximal_lemma_mu_spread", spread, 4.0, std::isfinite(spread) && spread <= 4.0);
  } else {
    throw ConfigError("unknown suite '" + suite + "'");
  }
  return out;
}

int cmd_verify(const Globals& G) {
  auto t0 = std::chrono::steady_clock::now();
  auto cfg = load_config(G.config);
  allow_keys(cfg.body, {"schema", "suites", "grid", "scheme", "s", "seed"}, "config");
  const std::uint64_t seed = G.seed_set ? G.seed : get_or<std::uint64_t>(cfg.body, "seed", 1);
  auto suites = get_or(cfg.body, "suites", std::vector<std::string>{"partition", "multiplier", "nearfar", "identity", "ching", "kernel", "maximal"});
  std::string lines;
  std::vector<std::string> failed;
  for (const auto& suite : suites)
    for (const auto& c : run_suite(suite, cfg.body, seed)) {
      json j{{"suite", c.suite}, {"check", c.check}, {"value", c.value}, {"tol", c.tol}, {"ok", c.ok}, {"config_hash", cfg.hash}};
      lines += j.dump() + "\n";
      std::cout << j.dump() << "\n";
      if (!c.ok) failed.push_back(c.check);
    }
  write_text(fs::path(G.out) / "verify.jsonl", lines);
  write_manifest(G, "verify", cfg.hash, seed, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    throw CheckFailure("failed checks: " + names);
  }
  return 0;
}

// ---- blowup -------------------------------------------------------------------------------

int cmd_blowup(const Globals& G) {
  auto t0 = std::chrono::steady_clock::now();
  auto cfg = load_config(G.config);
  auto exp = parse_experiment(cfg.body);
  if (G.seed_set) exp.seed = G.seed;
  auto table = run_blowup_experiment(exp);
  json j = to_json(table);
  j["config_hash"] = cfg.hash;
  j["seed"] = exp.seed;
  const fs::path out(G.out);
  write_text(out / "blowup.csv", growth_csv(table, cfg.hash));
  write_text(out / "blowup.json", j.dump(2) + "\n");
  write_text(out / "blowup.svg", growth_svg(table, cfg.hash));
  write_manifest(G, "blowup", cfg.hash, exp.seed, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  if (G.as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << table.kind << " c=" << table.c << "  verdict " << table.verdict << " (expect " << table.expect << ")\n";
    for (const auto& r : table.rows) std::cout << "  L=" << r.L << "  ratio " << fmt17(r.mean_ratio) << "  analytic " << fmt17(r.lower_bound_analytic) << "\n";
    std::cout << "  slope " << fmt17(table.slope) << "  predicted " << fmt17(table.predicted) << "\n";
  }
  for (const auto& n : table.notices) std::cerr << "notice: " << n << "\n";
  if (!table.notices.empty()) throw CheckFailure("infeasible L in the grid budget; max feasible L = " + std::to_string(table.max_feasible_L));
  if (!table.pass) throw CheckFailure("experiment verdict '" + table.verdict + "' does not match expectation '" + table.expect + "'");
  return 0;
}

// ---- norm ---------------------------------------------------------------------------------

int cmd_norm(const Globals& G) {
  if (G.field.empty()) throw ConfigError("--field is required");
  auto f = read_field(G.field);
  json j;
  if (G.space == "bmo") {
    auto r = bmo_norm(f);
    j = {{"space", "bmo"}, {"total", r.total}, {"average_part", r.average_part}, {"oscillation_part", r.oscillation_part}};
  } else {
    SpaceSpec sp{parse_family(G.space), parse_exponent(G.p), parse_exponent(G.q), G.s};
    auto P = build_partition(f.grid);
    j = to_json(norm_of(f, sp, P), G.space, G.s, sp.q);
    j["p"] = std::isinf(sp.p) ? json("inf") : json(sp.p);
  }
  j["field"] = G.field;
  write_text(fs::path(G.out) / "norm.json", j.dump(2) + "\n");
  std::cout << j.dump(G.as_json ? 2 : -1) << "\n";
  return 0;
}

// ---- apply --------------------------------------------------------------------------------

int cmd_apply(const Globals& G) {
  if (G.field.empty()) throw ConfigError("--field is required");
  auto cfg = load_config(G.config);
  allow_keys(cfg.body, {"schema", "symbol"}, "config");
  auto f = read_field(G.field);
  auto P = std::make_shared<const DyadicPartition>(build_partition(f.grid));
  auto a = build_named_symbol(parse_symbol(cfg.body.value("symbol", json::object())), P);
  auto out = apply_symbol(a, f);
  fs::create_directories(G.out);
  write_field((fs::path(G.out) / "applied.pph").string(), out);
  json j{{"symbol", symbol_manifest(a)}, {"input_sup", f.sup_norm()}, {"output_sup", out.sup_norm()}, {"config_hash", cfg.hash}};
  write_text(fs::path(G.out) / "apply.json", j.dump(2) + "\n");
  std::cout << (G.as_json ? j.dump(2) : "wrote " + (fs::path(G.out) / "applied.pph").string()) << "\n";
  return 0;
}

// ---- kernel-report ------------------------------------------------------------------------

BandKind parse_band(const std::string& s) {
  for (auto b : {BandKind::low, BandKind::high, BandKind::diag, BandKind::piece, BandKind::full})
    if (s == to_string(b)) return b;
  throw ConfigError("band must be one of b, c, d, a, full");
}

int cmd_kernel(const Globals& G) {
  auto cfg = load_config(G.config);
  allow_keys(cfg.body, {"schema", "grid", "symbol", "band", "ks", "Ms", "j_offset", "taylor_order"}, "config");
  auto g = parse_grid(cfg.body.value("grid", json::object()), 12);
  auto P = std::make_shared<const DyadicPartition>(build_partition(g));
  auto a = build_named_symbol(parse_symbol(cfg.body.value("symbol", json::object())), P);
  auto D = split_near_far(a, P);
  auto ks = get_or(cfg.body, "ks", std::vector<int>{3, 4, 5, 6});
  auto Ms = get_or(cfg.body, "Ms", std::vector<double>{0.0, 2.0});
  auto rows = kernel_decay_report(D, parse_band(get_or<std::string>(cfg.body, "band", "b")), ks, Ms, get_or(cfg.body, "j_offset", 0),
                                  get_or(cfg.body, "taylor_order", 3));
  write_text(fs::path(G.out) / "kernel.csv", kernel_csv(rows, cfg.hash));
  json arr = json::array();
  for (const auto& r : rows) arr.push_back({{"k", r.k}, {"j", r.j}, {"M", r.M}, {"weighted_sup", r.weighted_sup}, {"normalizer", r.normalizer}, {"ratio", r.ratio}});
  json j{{"symbol", symbol_manifest(a)}, {"rows", arr}, {"config_hash", cfg.hash}};
  write_text(fs::path(G.out) / "kernel.json", j.dump(2) + "\n");
  if (G.as_json)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << kernel_csv(rows, cfg.hash);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pph: paraproduct and type (1,1) operator experiments on the torus"};
  app.require_subcommand(1);
  Globals G;
  app.add_option("--config", G.config, "JSON config (schema 1)");
  auto* seed_opt = app.add_option("--seed", G.seed, "override the config seed");
  app.add_option("--out", G.out, "output directory");
  app.add_option("--threads", G.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_flag("--json", G.as_json, "print JSON to stdout");
  app.fallthrough();

  auto* verify = app.add_subcommand("verify", "run property suites");
  auto* blowup = app.add_subcommand("blowup", "run a growth experiment");
  auto* norm = app.add_subcommand("norm", "norm of a stored field");
  norm->add_option("--field", G.field, "field container")->required();
  norm->add_option("--space", G.space, "F, B or bmo");
  norm->add_option("--p", G.p, "integrability exponent (or inf)");
  norm->add_option("--q", G.q, "summability exponent (or inf)");
  norm->add_option("--s", G.s, "smoothness");
  auto* apply = app.add_subcommand("apply", "apply a named symbol to a stored field");
  apply->add_option("--field", G.field, "field container")->required();
  auto* kernel = app.add_subcommand("kernel-report", "kernel size and decay table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  G.seed_set = seed_opt->count() > 0;
  set_thread_count(G.threads);

  try {
    if (verify->parsed()) return cmd_verify(G);
    if (blowup->parsed()) return cmd_blowup(G);
    if (norm->parsed()) return cmd_norm(G);
    if (apply->parsed()) return cmd_apply(G);
    if (kernel->parsed()) return cmd_kernel(G);
  } catch (const CheckFailure& e) {
    std::cerr << "FAIL: " << e.what() << "\n";
    return 1;
  } catch (const SchemeError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return 1;
  } catch (const CapacityError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const StructuralError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
