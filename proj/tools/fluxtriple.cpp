// fluxtriple: configuration-driven runner for triple verification, flux
// classes, spectral actions, heat traces, indices and gauge checks.
// Exit codes: 0 pass, 1 scientific failure, 2 usage or configuration error.

#include "fluxtriple/io.hpp"

#include <CLI11.hpp>
#include <iostream>

using namespace fluxtriple;
namespace fs = std::filesystem;

namespace {

struct Cli {
  std::string config;
  std::string out;
  bool dense = false;
  bool stochastic = false;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load(const Cli &cli) {
  std::ifstream in(cli.config);
  if (!in) throw ConfigError("cannot open config file '" + cli.config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (cli.seed) j["seed"] = *cli.seed;
  if (cli.dense && cli.stochastic) throw ConfigError("--dense and --stochastic are exclusive");
  if (cli.dense || cli.stochastic) {
    if (!j.contains("action")) j["action"] = json::object();
    j["action"]["mode"] = cli.dense ? "dense" : "stochastic";
  }
  if (!cli.out.empty()) j["output"] = {{"dir", cli.out}};
  return parse_config(j);
}

fs::path out_path(const ExperimentConfig &c, const std::string &name) { return fs::path(c.out_dir) / name; }

void write_json(const ExperimentConfig &c, const std::string &name, const json &j) {
  write_atomic(out_path(c, name), j.dump(2) + "\n");
}

std::vector<double> grid(const json &action, const char *key) {
  if (!action.contains(key)) return {};
  const auto &g = action[key];
  if (g.is_number()) return {g.get<double>()};
  if (g.is_object()) {
    detail::allow_keys(g, std::string("action.") + key, {"start", "stop", "count"});
    return linspace(g.at("start").get<double>(), g.at("stop").get<double>(), g.value("count", 12));
  }
  try {
    return g.get<std::vector<double>>();
  } catch (const json::exception &) {
    throw ConfigError(std::string("action.") + key + " must be a number, list or {start, stop, count}");
  }
}

double tolerance(const ExperimentConfig &c, double def) {
  return detail::get_or<double>(c.action, "tolerance", def);
}

SpMat fluctuated_matrix(const Experiment &e) {
  if (e.from_pairs) return fluctuated_dirac(e.triple, e.fluct).sparse();
  return fluctuated_dirac(e.triple, e.pert).sparse();
}

// ---------------------------------------------------------------------------

int cmd_verify_triple(const Cli &cli) {
  ExperimentConfig c = load(cli);
  Experiment e = build_experiment(c);
  const std::uint64_t seed = c.seed.value_or(1);
  VerificationReport rep = verify_triple(e.triple, 4, seed);
  json j;
  j["config_hash"] = config_hash(c);
  j["hilbert_dim"] = e.triple.hilbert_dim();
  j["checks"] = rep.to_json();
  j["pass"] = rep.all_pass();
  j["failing"] = rep.failing();
  write_json(c, "verify_triple.json", j);
  for (const auto &ch : rep.checks)
    std::cout << (ch.pass() ? "ok   " : "FAIL ") << ch.name << " residual=" << ch.residual_enlarged
              << " (truncated " << ch.residual_raw << ", threshold " << ch.threshold << ")\n";
  if (!rep.all_pass()) {
    std::cout << "failing checks:";
    for (const auto &n : rep.failing()) std::cout << ' ' << n;
    std::cout << '\n';
    return 1;
  }
  return 0;
}

int cmd_flux_class(const Cli &cli) {
  ExperimentConfig c = load(cli);
  auto tw = make_twist(c.N, c.n12, c.geom.dim);
  CechBundle cb = transitions_from_twist(*tw, standard_cover(c.geom));
  FluxClassReport r = thooft_class_report(cb);
  json j{{"config_hash", config_hash(c)},
         {"N", c.N},
         {"n12", c.n12},
         {"class", r.cls},
         {"cocycle_residual", r.cocycle_residual},
         {"locally_constant", r.locally_constant},
         {"triangle_values", r.triangle_values}};
  write_json(c, "flux_class.json", j);
  std::cout << "class " << r.cls << " (mod " << c.N << ")\ncocycle_residual " << r.cocycle_residual << '\n';
  return (r.cocycle_residual <= 1e-10 && r.locally_constant) ? 0 : 1;
}

int cmd_spectral_action(const Cli &cli) {
  ExperimentConfig c = load(cli);
  Experiment e = build_experiment(c);
  const int d = c.geom.dim;
  const std::string hash = config_hash(c);
  const bool stochastic = c.mode() == "stochastic";
  const SpMat &DB = e.triple.dirac.sparse();
  SpMat DA = fluctuated_matrix(e);
  FitWindow w = fit_window(e.triple.lat());
  CutoffFunction f = configured_cutoff(c);

  SeeleyDeWitt sdA = seeley_dewitt_predict(curvature(e.connection, e.pert), e.cm);
  SeeleyDeWitt sdB = seeley_dewitt_predict(curvature(e.connection, {}), e.cm);
  const double da4 = sdA.a4 - sdB.a4;

  std::vector<double> ts = grid(c.action, "t"), lambdas = grid(c.action, "lambda");
  if (ts.empty() && lambdas.empty()) {
    if (!w.nonempty()) ts = {w.t_lo};
    else ts = linspace(w.t_lo, w.t_hi, 12);
  }

  SpectralActionReport rep;
  std::string method = stochastic ? "stochastic" : "dense";
  if (!ts.empty()) {
    std::vector<double> delta, err;
    if (stochastic) {
      HeatTraceSeries h = heat_trace_stochastic({&DA, &DB}, {1.0, -1.0}, ts,
                                                configured_stochastic(c, &e.triple.lat()));
      delta = h.value;
      err = h.stderr_;
    } else {
      RVec sa = squared_spectrum(DA, e.triple.chirality), sb = squared_spectrum(DB, e.triple.chirality);
      for (double t : ts) {
        delta.push_back(heat_sum(sa, t) - heat_sum(sb, t));
        err.push_back(0.0);
      }
    }
    rep = asymptotic_compare_heat(ts, delta, err, d, da4, w, method);
  } else {
    std::vector<double> delta, err;
    if (stochastic) {
      auto pa = std::make_shared<const SpMat>(DA), pb = std::make_shared<const SpMat>(DB);
      SlqData sd = slq_rules({squared_apply(pa), squared_apply(pb)}, int(DA.rows()),
                             configured_stochastic(c, &e.triple.lat()));
      for (double L : lambdas) {
        auto est = slq_evaluate(sd, {1.0, -1.0}, [&](double x) { return f(std::sqrt(std::max(x, 0.0)) / L); });
        delta.push_back(est.value);
        err.push_back(est.stderr_);
      }
    } else {
      RVec sa = squared_spectrum(DA, e.triple.chirality), sb = squared_spectrum(DB, e.triple.chirality);
      for (double L : lambdas) {
        delta.push_back(spectral_sum(sa, f, L) - spectral_sum(sb, f, L));
        err.push_back(0.0);
      }
    }
    rep = fit_lambda(lambdas, delta, err, d, f, da4, w, method);
  }
  CutoffMoments mo = cutoff_moments(f);
  rep.decomposition = action_decomposition(mo, sdA);

  std::vector<CsvRow> rows;
  std::vector<double> px, py;
  for (std::size_t i = 0; i < rep.grid.size(); ++i) {
    rows.push_back({rep.grid[i], rep.delta[i], rep.stderr_[i], method, bool(rep.in_window[i])});
    px.push_back(rep.grid[i]);
    double y = rep.delta[i];
    if (rep.variable == "t" && d == 2) y /= rep.grid[i];
    if (rep.variable == "lambda" && d == 2) y *= rep.grid[i] * rep.grid[i];
    py.push_back(y);
  }
  write_atomic(out_path(c, "spectral_action.csv"), csv_table(rows, hash));
  write_atomic(out_path(c, "spectral_action.svg"),
               svg_plot(px, py, rep.variable, d == 2 ? "normalized difference" : "difference",
                        rep.predicted));

  const double tol = tolerance(c, d == 2 ? 0.05 : 0.15);
  double maxdelta = 0.0;
  for (double x : rep.delta) maxdelta = std::max(maxdelta, std::abs(x));
  const bool zero_field = da4 == 0.0;
  bool pass = rep.window_ok && (zero_field ? maxdelta <= 1e-8 * std::max(1, e.triple.hilbert_dim())
                                           : rep.relative_deviation <= tol);
  json j = report_json(rep);
  j["config_hash"] = hash;
  j["hilbert_dim"] = e.triple.hilbert_dim();
  j["predictor"] = {{"a0", sdA.a0}, {"a2", sdA.a2}, {"a4", sdA.a4}, {"a4_explicit", sdA.a4_explicit},
                    {"delta_a4", da4}, {"ym_trace", sdA.ym_trace}, {"ym_norm", -sdA.ym_trace}};
  j["moments"] = {{"f0", mo.f0}, {"f2", mo.f2}, {"f4", mo.f4}};
  j["tolerance"] = tol;
  j["max_abs_delta"] = maxdelta;
  j["pass"] = pass;
  write_json(c, "spectral_action.json", j);

  std::cout << "window_ok: " << (rep.window_ok ? "true" : "false") << '\n';
  std::cout << "window [" << w.t_lo << ", " << w.t_hi << "]\n";
  if (zero_field) std::cout << "zero field: max |delta| = " << maxdelta << '\n';
  else std::cout << "fitted " << rep.fitted << " predicted " << rep.predicted << " ratio " << rep.ratio << '\n';
  return pass ? 0 : 1;
}

struct IndexInput {
  SpMat D;
  std::vector<int> chirality;
  std::string kind;
};

IndexInput index_operator(const ExperimentConfig &c) {
  if (c.line_twist) {
    auto lt = line_twist_dirac(c.line_twist->first, c.line_twist->second, c.geom);
    return {lt.D, lt.chirality, "line_twist"};
  }
  Experiment e = build_experiment(c);
  return {fluctuated_matrix(e), e.triple.chirality, "triple"};
}

int cmd_index(const Cli &cli) {
  ExperimentConfig c = load(cli);
  const std::string hash = config_hash(c);
  IndexInput in = index_operator(c);
  ChiralSpectrum cs = chiral_spectrum(in.D, in.chirality);
  std::vector<double> ts = grid(c.action, "t");
  if (ts.empty()) ts = {0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  std::vector<double> lambdas = grid(c.action, "lambda");
  if (lambdas.empty()) lambdas = {3.0};
  IndexReport r = mckean_singer_index(cs, ts);
  CutoffFunction f = configured_cutoff(c);

  std::vector<CsvRow> rows;
  for (std::size_t i = 0; i < r.t.size(); ++i) rows.push_back({r.t[i], r.supertrace[i], 0.0, "supertrace", true});
  double worst = 0.0;
  json stop = json::array();
  for (double L : lambdas) {
    double s = topological_action(cs, f, L);
    double dev = std::abs(s - f.f_at_zero() * r.index);
    worst = std::max(worst, dev);
    rows.push_back({L, s, 0.0, "s_top", true});
    stop.push_back({{"lambda", L}, {"s_top", s}, {"deviation", dev}});
  }
  write_atomic(out_path(c, "index.csv"), csv_table(rows, hash));
  const double tol = tolerance(c, 0.05);
  bool pass = r.ok() && worst <= tol;
  json j{{"config_hash", hash},
         {"operator", in.kind},
         {"index", r.index},
         {"t", r.t},
         {"supertrace", r.supertrace},
         {"max_deviation", r.max_deviation},
         {"integrality", r.integrality},
         {"kernel_plus", r.kernel_plus},
         {"kernel_minus", r.kernel_minus},
         {"s_top", stop},
         {"pass", pass}};
  write_json(c, "index.json", j);
  std::cout << "index " << r.index << "\nsupertrace spread " << r.max_deviation << "\nkernel "
            << r.kernel_plus << " - " << r.kernel_minus << "\n";
  for (std::size_t i = 0; i < r.t.size(); ++i) std::cout << "  t=" << r.t[i] << " str=" << r.supertrace[i] << '\n';
  return pass ? 0 : 1;
}

int cmd_heat_trace(const Cli &cli) {
  ExperimentConfig c = load(cli);
  Experiment e = build_experiment(c);
  const std::string hash = config_hash(c);
  SpMat DA = fluctuated_matrix(e);
  FitWindow w = fit_window(e.triple.lat());
  std::vector<double> ts = grid(c.action, "t");
  if (ts.empty()) ts = linspace(w.t_lo / 4, 2 * w.t_hi, 12);
  HeatTraceSeries h;
  if (c.mode() == "stochastic")
    h = heat_trace_stochastic({&DA}, {1.0}, ts, configured_stochastic(c, &e.triple.lat()));
  else
    h = heat_trace_dense(chiral_spectrum(DA, e.triple.chirality), ts);
  std::vector<CsvRow> rows;
  for (std::size_t i = 0; i < h.t.size(); ++i)
    rows.push_back({h.t[i], h.value[i], h.stderr_[i], h.method, w.contains(h.t[i])});
  write_atomic(out_path(c, "heat_trace.csv"), csv_table(rows, hash));
  write_atomic(out_path(c, "heat_trace.svg"), svg_plot(h.t, h.value, "t", "heat trace"));
  json j{{"config_hash", hash}, {"method", h.method}, {"t", h.t}, {"value", h.value},
         {"stderr", h.stderr_}, {"probes", h.probes}, {"breakdowns", h.breakdowns},
         {"window", window_json(w)}};
  if (!h.supertrace.empty()) j["supertrace"] = h.supertrace;
  write_json(c, "heat_trace.json", j);
  for (std::size_t i = 0; i < h.t.size(); ++i) std::cout << h.t[i] << ' ' << h.value[i] << '\n';
  return 0;
}

int cmd_gauge_check(const Cli &cli) {
  ExperimentConfig c = load(cli);
  Experiment e = build_experiment(c);
  const std::uint64_t seed = c.seed_or_throw("random gauge transformations");
  std::vector<double> lambdas = grid(c.action, "lambda");
  const double L = lambdas.empty() ? 1.5 : lambdas.front();
  CutoffFunction f = configured_cutoff(c);
  std::mt19937_64 rng(seed);
  json arr = json::array();
  double worst = 0.0;
  const int samples = detail::get_or<int>(c.action, "probes", 5);
  for (int i = 0; i < samples; ++i) {
    AlgebraSection u = random_unitary_section(e.twist, c.geom, rng, 1);
    GaugeResult g = gauge_transform(e.triple, e.pert, u, 3, seed + i);
    double sa = spectral_action_gauge_residual(e.triple, e.pert, u, f, L);
    SparseField psi = random_probe(e.triple.lat(), rng, 16);
    double fer = fermionic_gauge_residual(e.triple, e.pert, u, psi) / std::max(1e-300, field_norm(psi) * field_norm(psi));
    worst = std::max({worst, g.covariance_residual, sa, fer});
    arr.push_back({{"covariance", g.covariance_residual}, {"spectral_action", sa}, {"fermionic", fer},
                   {"unitarity", g.unitarity}});
    std::cout << "u" << i << ": covariance " << g.covariance_residual << " spectral_action " << sa
              << " fermionic " << fer << '\n';
  }
  bool pass = worst <= tolerance(c, 1e-8);
  write_json(c, "gauge_check.json", {{"config_hash", config_hash(c)}, {"samples", arr}, {"lambda", L},
                                     {"max_residual", worst}, {"pass", pass}});
  return pass ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"fluxtriple: spectral triples on twisted algebra bundles over tori"};
  app.require_subcommand(1);
  Cli cli;
  std::uint64_t seed = 0;
  std::map<std::string, std::function<int(const Cli &)>> commands{
      {"verify-triple", cmd_verify_triple}, {"flux-class", cmd_flux_class},
      {"spectral-action", cmd_spectral_action}, {"index", cmd_index},
      {"heat-trace", cmd_heat_trace}, {"gauge-check", cmd_gauge_check}};
  const std::map<std::string, std::string> help{
      {"verify-triple", "check the real even spectral triple axioms"},
      {"flux-class", "compute the 't Hooft class of the configured twist"},
      {"spectral-action", "heat-trace or spectral-action difference vs the Seeley-DeWitt prediction"},
      {"index", "supertrace index and topological action"},
      {"heat-trace", "heat traces of the fluctuated Dirac operator"},
      {"gauge-check", "gauge covariance of D_A and invariance of the actions"}};
  std::vector<CLI::Option *> seed_opts;
  for (const auto &[name, fn] : commands) {
    auto *sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", cli.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", cli.out, "output directory (overrides output.dir)");
    sub->add_flag("--dense", cli.dense, "dense eigensolver backend");
    sub->add_flag("--stochastic", cli.stochastic, "stochastic Lanczos quadrature backend");
    seed_opts.push_back(sub->add_option("--seed", seed, "RNG seed (overrides the config)"));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (auto *o : seed_opts)
    if (o->count()) cli.seed = seed;
  for (const auto &[name, fn] : commands) {
    if (!app.got_subcommand(name)) continue;
    try {
      return fn(cli);
    } catch (const ConfigError &e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    } catch (const InvalidInput &e) {
      std::cerr << "invalid input: " << e.what() << '\n';
      return 2;
    } catch (const std::exception &e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
