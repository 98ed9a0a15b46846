#pragma once
// Experiment configuration (JSON, schema version 1), construction of the
// configured objects, and report writers (CSV, JSON, SVG) with atomic writes.

#include "fluxtriple/action.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fluxtriple {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

namespace detail {

inline void allow_keys(const json &j, const std::string &where, std::initializer_list<const char *> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char *k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get_or(const json &j, const char *key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Sections as JSON: [{"sector": a | [a1, a2], "mode": [n...], "c": [re, im]}, ...]

inline AlgebraSection section_from_json(const json &j, TwistPtr twist, const TorusGeometry &g) {
  if (!j.is_array()) throw ConfigError("section: expected an array of terms");
  AlgebraSection s(twist, g);
  for (const auto &t : j) {
    detail::allow_keys(t, "section term", {"sector", "mode", "c"});
    int a = 0;
    if (t.contains("sector")) {
      const auto &sj = t["sector"];
      if (sj.is_array() && sj.size() == 2) a = twist->sector_of(sj[0].get<int>(), sj[1].get<int>());
      else if (sj.is_number_integer()) a = sj.get<int>();
      else throw ConfigError("section term: sector must be an integer or [a1, a2]");
    }
    IVec4 n{0, 0, 0, 0};
    auto mode = detail::get_or<std::vector<int>>(t, "mode", {});
    if (int(mode.size()) > g.dim) throw ConfigError("section term: mode longer than the dimension");
    for (std::size_t i = 0; i < mode.size(); ++i) n[i] = mode[i];
    auto c = detail::get_or<std::vector<double>>(t, "c", {0.0, 0.0});
    if (c.size() != 2) throw ConfigError("section term: c must be [re, im]");
    try {
      s.add_mode(a, n, cplx(c[0], c[1]));
    } catch (const InvalidInput &e) {
      throw ConfigError(e.what());
    }
  }
  return s;
}

inline json section_to_json(const AlgebraSection &s) {
  json arr = json::array();
  const TwistData &tw = *s.twist;
  for (const auto &[key, c] : s.terms) {
    int a = keys::sector(key);
    IVec4 m = keys::momentum(key), off = tw.offset(a);
    std::vector<int> n;
    for (int mu = 0; mu < s.geom.dim; ++mu) n.push_back((m[mu] - off[mu]) / s.den());
    arr.push_back({{"sector", {tw.first(a), tw.second(a)}}, {"mode", n}, {"c", {c.real(), c.imag()}}});
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  json raw;
  TorusGeometry geom;
  int K = 2;
  SpinStructure spin = periodic_spin();
  int N = 2;
  int n12 = 0;
  std::optional<std::pair<int, int>> line_twist; // q, levels
  json connection = json::object();
  json fluctuation = json::object();
  json cutoff = json::object();
  json action = json::object();
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  std::string mode() const { return detail::get_or<std::string>(action, "mode", "dense"); }
  std::uint64_t seed_or_throw(const std::string &why) const {
    if (!seed) throw ConfigError("a seed is required for " + why);
    return *seed;
  }
};

inline int parse_flux(const json &b, int d) {
  if (!b.contains("flux")) return 0;
  const auto &f = b["flux"];
  if (f.is_number_integer()) return f.get<int>();
  if (!f.is_array()) throw ConfigError("bundle.flux: integer or antisymmetric matrix expected");
  std::vector<std::vector<int>> m;
  try {
    m = f.get<std::vector<std::vector<int>>>();
  } catch (const json::exception &) {
    throw ConfigError("bundle.flux: matrix entries must be integers");
  }
  if (int(m.size()) != d) throw ConfigError("bundle.flux: matrix size must equal the dimension");
  for (int i = 0; i < d; ++i) {
    if (int(m[i].size()) != d) throw ConfigError("bundle.flux: matrix must be square");
    for (int j = 0; j < d; ++j) {
      if (m[i][j] != -m[j][i]) throw ConfigError("bundle.flux: matrix must be antisymmetric");
      if (m[i][j] != 0 && !((i == 0 && j == 1) || (i == 1 && j == 0)))
        throw ConfigError("bundle.flux: only the (1,2) plane may carry flux");
    }
  }
  return m[0][1];
}

inline ExperimentConfig parse_config(const json &j) {
  detail::allow_keys(j, "config", {"version", "geometry", "lattice", "bundle", "connection",
                                   "fluctuation", "cutoff", "action", "seed", "output"});
  ExperimentConfig c;
  c.raw = j;
  int version = detail::get_or<int>(j, "version", kConfigVersion);
  if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));

  json geo = j.value("geometry", json::object());
  detail::allow_keys(geo, "geometry", {"dim", "lengths"});
  c.geom.dim = detail::get_or<int>(geo, "dim", 2);
  if (c.geom.dim != 2 && c.geom.dim != 4) throw ConfigError("geometry.dim must be 2 or 4");
  auto lengths = detail::get_or<std::vector<double>>(geo, "lengths", {});
  if (!lengths.empty()) {
    if (lengths.size() == 1) lengths.assign(c.geom.dim, lengths[0]);
    if (int(lengths.size()) != c.geom.dim) throw ConfigError("geometry.lengths must have dim entries");
    for (int mu = 0; mu < c.geom.dim; ++mu) c.geom.lengths[mu] = lengths[mu];
  }
  try {
    c.geom.validate();
  } catch (const InvalidInput &e) {
    throw ConfigError(e.what());
  }

  json lat = j.value("lattice", json::object());
  detail::allow_keys(lat, "lattice", {"K", "spin", "offsets"});
  c.K = detail::get_or<int>(lat, "K", 2);
  if (c.K < 1) throw ConfigError("lattice.K must be at least 1");
  json spin = lat.contains("spin") ? lat["spin"] : lat.value("offsets", json("periodic"));
  if (spin.is_string()) {
    if (spin == "periodic") c.spin = periodic_spin();
    else if (spin == "antiperiodic") c.spin = antiperiodic_spin(c.geom.dim);
    else throw ConfigError("lattice.spin must be periodic, antiperiodic or a 0/1 list");
  } else if (spin.is_array() && int(spin.size()) == c.geom.dim) {
    for (int mu = 0; mu < c.geom.dim; ++mu) {
      int v = spin[mu].get<int>();
      if (v != 0 && v != 1) throw ConfigError("lattice.spin entries must be 0 or 1");
      c.spin[mu] = v;
    }
  } else {
    throw ConfigError("lattice.spin must be periodic, antiperiodic or a 0/1 list");
  }

  json b = j.value("bundle", json::object());
  detail::allow_keys(b, "bundle", {"N", "flux", "line_twist"});
  c.N = detail::get_or<int>(b, "N", 2);
  if (c.N < 1 || c.N > 8) throw ConfigError("bundle.N must be in 1..8");
  c.n12 = parse_flux(b, c.geom.dim);
  if (b.contains("line_twist")) {
    const auto &lt = b["line_twist"];
    detail::allow_keys(lt, "bundle.line_twist", {"q", "levels"});
    if (c.geom.dim != 2) throw ConfigError("bundle.line_twist needs geometry.dim = 2");
    c.line_twist = std::make_pair(detail::get_or<int>(lt, "q", 0), detail::get_or<int>(lt, "levels", 30));
    if (c.line_twist->second < 1) throw ConfigError("bundle.line_twist.levels must be positive");
  }

  c.connection = j.value("connection", json::object());
  detail::allow_keys(c.connection, "connection", {"preset", "amplitude", "terms", "omega"});
  auto cp = detail::get_or<std::string>(c.connection, "preset", c.connection.contains("omega") ? "table" : "zero");
  if (cp != "zero" && cp != "random" && cp != "broken" && cp != "table")
    throw ConfigError("connection.preset must be zero, random or broken");

  c.fluctuation = j.value("fluctuation", json::object());
  detail::allow_keys(c.fluctuation, "fluctuation", {"preset", "amplitude", "pairs", "pert"});
  auto fp = detail::get_or<std::string>(c.fluctuation, "preset", "zero");
  if (fp != "zero" && fp != "abelian_sin" && fp != "constant_su2" && fp != "random" && fp != "central")
    throw ConfigError("fluctuation.preset must be zero, abelian_sin, constant_su2, random or central");

  c.cutoff = j.value("cutoff", json::object());
  detail::allow_keys(c.cutoff, "cutoff", {"name", "plateau", "scale"});
  auto cn = detail::get_or<std::string>(c.cutoff, "name", "gaussian");
  if (cn != "gaussian" && cn != "bump" && cn != "zero") throw ConfigError("cutoff.name must be gaussian, bump or zero");

  c.action = j.value("action", json::object());
  detail::allow_keys(c.action, "action", {"lambda", "t", "probes", "depth", "mode", "dilution",
                                          "tolerance", "threads"});
  auto mode = c.mode();
  if (mode != "dense" && mode != "stochastic") throw ConfigError("action.mode must be dense or stochastic");

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ConfigError("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (!c.seed && (c.action.contains("probes") || mode == "stochastic"))
    throw ConfigError("seed is mandatory for stochastic runs");

  json out = j.value("output", json::object());
  detail::allow_keys(out, "output", {"dir"});
  c.out_dir = detail::get_or<std::string>(out, "dir", "out");
  return c;
}

inline ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

//! FNV-1a (64 bit) over the canonical dump, excluding the output location.
inline std::string config_hash(const ExperimentConfig &c) {
  json j = c.raw;
  j.erase("output");
  if (c.seed) j["seed"] = *c.seed;
  std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Building the configured objects

struct Experiment {
  ExperimentConfig cfg;
  TwistPtr twist;
  CliffordModule cm;
  BundleConnection connection;
  SpectralTripleData triple;
  std::vector<AlgebraSection> pert; // su(N)-valued fluctuation
  InnerFluctuation fluct;           // when built from pairs
  bool from_pairs = false;
  bool broken = false;
};

inline BundleConnection configured_connection(const ExperimentConfig &c, TwistPtr tw, bool &broken) {
  const json &j = c.connection;
  auto preset = detail::get_or<std::string>(j, "preset", j.contains("omega") ? "table" : "zero");
  int terms = detail::get_or<int>(j, "terms", 4);
  broken = preset == "broken";
  if (preset == "zero") return zero_connection(tw, c.geom);
  if (preset == "table") {
    const auto &om = j["omega"];
    if (!om.is_array() || int(om.size()) != c.geom.dim)
      throw ConfigError("connection.omega needs one section per direction");
    std::vector<AlgebraSection> w;
    for (const auto &s : om) w.push_back(section_from_json(s, tw, c.geom));
    try {
      return build_connection(tw, c.geom, std::move(w));
    } catch (const InvalidInput &e) {
      throw ConfigError(e.what());
    }
  }
  std::mt19937_64 rng(c.seed_or_throw("a random connection"));
  if (preset == "random")
    return random_connection(tw, c.geom, rng, terms, 1, detail::get_or<double>(j, "amplitude", 0.3));
  BundleConnection conn = random_connection(tw, c.geom, rng, terms, 1, 0.3);
  const double amp = detail::get_or<double>(j, "amplitude", 0.1);
  // negative control: a Hermitian (not anti-Hermitian) admixture of size amp
  for (auto &w : conn.omega) {
    AlgebraSection h = random_hermitian_section(tw, c.geom, rng, terms, 1, 1.0, false);
    double m = std::max(h.max_coeff(), 1e-300);
    w += (amp / m) * h;
  }
  return conn;
}

inline std::vector<FluctuationPair> pairs_from_json(const json &j, TwistPtr tw, const TorusGeometry &g) {
  if (!j.is_array()) throw ConfigError("fluctuation.pairs must be an array");
  std::vector<FluctuationPair> out;
  for (const auto &p : j) {
    detail::allow_keys(p, "fluctuation pair", {"a", "b"});
    if (!p.contains("a") || !p.contains("b")) throw ConfigError("fluctuation pair needs a and b");
    out.push_back({section_from_json(p["a"], tw, g), section_from_json(p["b"], tw, g)});
  }
  return out;
}

inline Experiment build_experiment(const ExperimentConfig &c) {
  Experiment e;
  e.cfg = c;
  try {
    e.twist = make_twist(c.N, c.n12, c.geom.dim);
  } catch (const InvalidInput &ex) {
    throw ConfigError(ex.what());
  }
  e.cm = build_clifford(c.geom.dim);
  e.connection = configured_connection(c, e.twist, e.broken);
  AssemblyOptions opt;
  opt.allow_non_hermitian = e.broken;
  e.triple = assemble_triple(e.twist, e.connection,
                             triple_lattice(*e.twist, c.geom, c.K, c.spin, e.cm), e.cm, opt);

  const json &f = c.fluctuation;
  auto preset = detail::get_or<std::string>(f, "preset", "zero");
  double amp = detail::get_or<double>(f, "amplitude", 0.25);
  try {
    if (f.contains("pert")) {
      const auto &pj = f["pert"];
      if (!pj.is_array() || int(pj.size()) != c.geom.dim)
        throw ConfigError("fluctuation.pert needs one section per direction");
      for (const auto &s : pj) e.pert.push_back(section_from_json(s, e.twist, c.geom));
      for (const auto &p : e.pert)
        if (su_defect(p) > 1e-10) throw ConfigError("fluctuation.pert must be traceless anti-Hermitian");
    } else if (f.contains("pairs")) {
      e.fluct = build_fluctuation(e.triple, pairs_from_json(f["pairs"], e.twist, c.geom));
      e.pert = e.fluct.pert;
      e.from_pairs = true;
    } else if (preset == "abelian_sin") {
      e.pert = abelian_sin_field(e.twist, c.geom, amp);
    } else if (preset == "constant_su2") {
      e.pert = constant_su2_field(e.twist, c.geom, amp);
    } else if (preset == "random") {
      std::mt19937_64 rng(c.seed_or_throw("a random fluctuation") ^ 0x5bd1e995ULL);
      for (int mu = 0; mu < c.geom.dim; ++mu)
        e.pert.push_back(random_su_section(e.twist, c.geom, rng, 4, 1, amp));
    } else if (preset == "central") {
      std::mt19937_64 rng(c.seed_or_throw("a central fluctuation") ^ 0x27d4eb2fULL);
      e.pert = pert_from_hermitian(central_hermitian_field(e.twist, c.geom, rng, amp));
    } else {
      e.pert.assign(c.geom.dim, AlgebraSection(e.twist, c.geom));
    }
  } catch (const InvalidInput &ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

inline CutoffFunction configured_cutoff(const ExperimentConfig &c) {
  auto name = detail::get_or<std::string>(c.cutoff, "name", "gaussian");
  CutoffFunction f = name == "bump" ? bump_cutoff(detail::get_or<double>(c.cutoff, "plateau", 0.5))
                                    : make_cutoff(name);
  return f.scaled(detail::get_or<double>(c.cutoff, "scale", 1.0));
}

inline StochasticOptions configured_stochastic(const ExperimentConfig &c, const Lattice *lat = nullptr) {
  StochasticOptions o;
  o.probes = detail::get_or<int>(c.action, "probes", 64);
  o.depth = detail::get_or<int>(c.action, "depth", 60);
  o.threads = detail::get_or<int>(c.action, "threads", 0);
  o.seed = c.seed_or_throw("stochastic runs");
  if (lat && detail::get_or<bool>(c.action, "dilution", false)) {
    for (std::uint64_t key : lat->states)
      o.labels.push_back(keys::spin(key) + lat->spinor_dim * keys::sector(key));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Writers

inline void write_atomic(const std::filesystem::path &path, const std::string &content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write " + tmp.string());
    o << content;
    if (!o) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvRow {
  double x;
  double value;
  double stderr_;
  std::string method;
  bool window_ok;
};

inline std::string csv_table(const std::vector<CsvRow> &rows, const std::string &hash) {
  std::ostringstream s;
  s << "t_or_lambda,value,stderr,method,window_ok,config_hash\n";
  for (const auto &r : rows)
    s << fmt_double(r.x) << ',' << fmt_double(r.value) << ',' << fmt_double(r.stderr_) << ','
      << r.method << ',' << (r.window_ok ? "true" : "false") << ',' << hash << '\n';
  return s.str();
}

//! Polyline plot, optionally with a horizontal reference line.
inline std::string svg_plot(const std::vector<double> &x, const std::vector<double> &y,
                            const std::string &xlabel, const std::string &ylabel,
                            std::optional<double> reference = std::nullopt) {
  const double W = 640, H = 400, m = 56;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!x.empty()) {
    auto [a, b] = std::minmax_element(x.begin(), x.end());
    auto [c, d] = std::minmax_element(y.begin(), y.end());
    x0 = *a, x1 = *b, y0 = *c, y1 = *d;
  }
  if (reference) y0 = std::min(y0, *reference), y1 = std::max(y1, *reference);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return m + (W - 2 * m) * (v - x0) / (x1 - x0); };
  auto py = [&](double v) { return H - m - (H - 2 * m) * (v - y0) / (y1 - y0); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m << "\" stroke=\"black\"/>\n";
  if (reference)
    s << "<line x1=\"" << m << "\" y1=\"" << py(*reference) << "\" x2=\"" << W - m << "\" y2=\""
      << py(*reference) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) s << px(x[i]) << ',' << py(y[i]) << ' ';
  s << "\"/>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    s << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(y[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  s << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
    << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  s << "<text x=\"" << m << "\" y=\"" << m - 12 << "\">[" << fmt_double(y0).substr(0, 10) << ", "
    << fmt_double(y1).substr(0, 10) << "]</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline json window_json(const FitWindow &w) {
  return {{"t_lo", w.t_lo},
          {"t_hi", w.t_hi},
          {"k_out", w.k_out},
          {"k_max", w.k_max},
          {"tau", w.tau},
          {"t_min_heuristic", w.t_min_heuristic},
          {"lambda_max_heuristic", w.lambda_max_heuristic},
          {"nonempty", w.nonempty()}};
}

inline json nan_safe(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json report_json(const SpectralActionReport &r) {
  json j;
  j["variable"] = r.variable;
  j["method"] = r.method;
  j["window"] = window_json(r.window);
  j["window_ok"] = r.window_ok;
  j["fitted"] = nan_safe(r.fitted);
  j["fit_slope"] = nan_safe(r.fit_slope);
  j["fit_rms"] = r.fit_rms;
  j["predicted"] = r.predicted;
  j["ratio"] = nan_safe(r.ratio);
  j["relative_deviation"] = nan_safe(r.relative_deviation);
  j["decomposition"] = {{"lambda4", r.decomposition[0]}, {"lambda2", r.decomposition[1]},
                        {"lambda0", r.decomposition[2]}};
  return j;
}

} // namespace fluxtriple
