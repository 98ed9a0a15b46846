#pragma once
// Spectral action Tr f(D/Lambda), heat traces, the Seeley-DeWitt predictor,
// supertraces and the topological action.

#include "fluxtriple/fluctuation.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <functional>
#include <limits>
#include <thread>

namespace fluxtriple {

// ---------------------------------------------------------------------------
// Cutoff functions

struct CutoffFunction {
  std::string name = "gaussian";
  std::function<double(double)> profile; // on w >= 0
  double scale = 1.0;
  double support = std::numeric_limits<double>::infinity();
  std::vector<double> breakpoints; // non-analytic points inside the support

  double operator()(double w) const { return scale * profile(std::abs(w)); }
  double f_at_zero() const { return (*this)(0.0); }
  bool compact() const { return std::isfinite(support); }

  CutoffFunction scaled(double c) const {
    CutoffFunction g = *this;
    g.scale *= c;
    return g;
  }
};

inline CutoffFunction gaussian_cutoff() {
  CutoffFunction f;
  f.name = "gaussian";
  f.profile = [](double w) { return std::exp(-w * w); };
  return f;
}

//! Smooth plateau: 1 on [0, w0], decreasing to 0 at w = 1 through e^{-1/x} bumps.
inline CutoffFunction bump_cutoff(double w0 = 0.5) {
  if (!(w0 > 0.0 && w0 < 1.0)) throw InvalidInput("bump cutoff: plateau must lie in (0, 1)");
  CutoffFunction f;
  f.name = "bump";
  auto psi = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
  f.profile = [=](double w) {
    if (w <= w0) return 1.0;
    if (w >= 1.0) return 0.0;
    double x = (w - w0) / (1.0 - w0);
    return psi(1.0 - x) / (psi(1.0 - x) + psi(x));
  };
  f.support = 1.0;
  f.breakpoints = {w0};
  return f;
}

inline CutoffFunction zero_cutoff() {
  CutoffFunction f;
  f.name = "zero";
  f.profile = [](double) { return 0.0; };
  f.support = 0.0;
  return f;
}

inline CutoffFunction make_cutoff(const std::string &name) {
  if (name == "gaussian") return gaussian_cutoff();
  if (name == "bump") return bump_cutoff();
  if (name == "zero") return zero_cutoff();
  throw InvalidInput("unknown cutoff function '" + name + "'");
}

struct CutoffMoments {
  double f0 = 0.0;
  double f2 = 0.0; // int_0^inf f(w) w dw
  double f4 = 0.0; // int_0^inf f(w) w^3 dw
  double refinement = 0.0; // max difference between two quadrature schemes
  double tail_bound = 0.0; // int_W^inf |f| w^3 beyond the certified radius W
  double radius = 0.0;
};

namespace detail {

//! int_a^b g by adaptive Gauss-Kronrod, split at breakpoints.
template <class G>
double integrate_pieces(G g, std::vector<double> cuts, bool kronrod) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    if (kronrod)
      s += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, cuts[i], cuts[i + 1], 20, 1e-15);
    else {
      boost::math::quadrature::tanh_sinh<double> ts;
      s += ts.integrate(g, cuts[i], cuts[i + 1], 1e-15);
    }
  }
  return s;
}

} // namespace detail

//! (f(0), f_2, f_4) with a refinement cross-check and a tail certificate.
inline CutoffMoments cutoff_moments(const CutoffFunction &f, double tol = 1e-10) {
  CutoffMoments mo;
  mo.f0 = f.f_at_zero();
  if (f.compact() && f.support <= 0.0) return mo;

  double W = f.support;
  if (!f.compact()) {
    // certified radius: w^5 |f(w)| below 1e-14 from W on, checked on a geometric tail grid
    W = 1.0;
    while (W < 1e4 && std::pow(W, 5) * std::abs(f(W)) > 1e-14) W *= 1.25;
    for (double w = W; w < 1e6; w *= 1.5)
      if (std::pow(w, 5) * std::abs(f(w)) > 1e-12)
        throw InvalidInput("cutoff '" + f.name + "': tail does not decay fast enough for f_4");
    boost::math::quadrature::exp_sinh<double> es;
    mo.tail_bound = es.integrate([&](double w) { return std::abs(f(w)) * w * w * w; }, W,
                                 std::numeric_limits<double>::infinity());
  }
  mo.radius = W;
  std::vector<double> cuts{0.0};
  for (double b : f.breakpoints)
    if (b > 0 && b < W) cuts.push_back(b);
  cuts.push_back(W);
  std::sort(cuts.begin(), cuts.end());

  auto g2 = [&](double w) { return f(w) * w; };
  auto g4 = [&](double w) { return f(w) * w * w * w; };
  double a2 = detail::integrate_pieces(g2, cuts, true), b2 = detail::integrate_pieces(g2, cuts, false);
  double a4 = detail::integrate_pieces(g4, cuts, true), b4 = detail::integrate_pieces(g4, cuts, false);
  if (!f.compact()) {
    boost::math::quadrature::exp_sinh<double> es;
    const double inf = std::numeric_limits<double>::infinity();
    double t2 = es.integrate(g2, W, inf), t4 = es.integrate(g4, W, inf);
    a2 += t2, b2 += t2, a4 += t4, b4 += t4;
  }
  mo.f2 = a2;
  mo.f4 = a4;
  mo.refinement = std::max(std::abs(a2 - b2), std::abs(a4 - b4));
  if (mo.refinement > tol * std::max(1.0, std::abs(a4)))
    throw InvalidInput("cutoff '" + f.name + "': moment quadrature is not stable");
  return mo;
}

//! -d/du f(sqrt u) at u = 0 (weight of the first subleading heat coefficient).
inline double cutoff_first_heat_weight(const CutoffFunction &f) {
  const double h = 1e-4;
  return -(f(std::sqrt(h)) - f(0.0)) / h;
}

// ---------------------------------------------------------------------------
// Spectra

//! Eigenvalues of D^2 restricted to each chirality, computed independently.
struct ChiralSpectrum {
  RVec plus;
  RVec minus;

  RVec all() const {
    RVec a(plus.size() + minus.size());
    a << plus, minus;
    std::sort(a.data(), a.data() + a.size());
    return a;
  }
  int dim() const { return int(plus.size() + minus.size()); }
};

inline std::vector<int> chirality_indices(const std::vector<int> &chir, int sign) {
  std::vector<int> idx;
  for (int i = 0; i < int(chir.size()); ++i)
    if (chir[i] == sign) idx.push_back(i);
  return idx;
}

//! Off-diagonal block T = P_- D P_+ of an odd operator; throws if D is not odd.
inline CMat odd_block(const SpMat &D, const std::vector<int> &chir) {
  if (int(chir.size()) != D.rows()) throw InvalidInput("odd_block: grading size mismatch");
  std::vector<int> pos(chir.size(), -1);
  int np = 0, nm = 0;
  for (std::size_t i = 0; i < chir.size(); ++i) pos[i] = chir[i] > 0 ? np++ : nm++;
  CMat T = CMat::Zero(nm, np);
  double even = 0.0;
  for (int r = 0; r < D.outerSize(); ++r)
    for (SpMat::InnerIterator it(D, r); it; ++it) {
      int i = int(it.row()), j = int(it.col());
      if (chir[i] == chir[j]) even = std::max(even, std::abs(it.value()));
      else if (chir[i] < 0) T(pos[i], pos[j]) = it.value();
    }
  if (even > 1e-12 * std::max(1.0, sparse_max_abs(D)))
    throw InvalidInput("operator does not anticommute with the grading");
  return T;
}

//! Singular values of a dense matrix (LAPACK divide and conquer, no vectors).
inline RVec singular_values(CMat a) {
  const lapack_int m = lapack_int(a.rows()), n = lapack_int(a.cols());
  RVec s(std::min(m, n));
  if (s.size() == 0) return s;
  CMat u(1, 1), vt(1, 1);
  lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n,
                                   reinterpret_cast<lapack_complex_double *>(a.data()), m,
                                   s.data(), reinterpret_cast<lapack_complex_double *>(u.data()), 1,
                                   reinterpret_cast<lapack_complex_double *>(vt.data()), 1);
  if (info != 0) throw std::runtime_error("zgesdd failed");
  return s;
}

//! D^2 per chirality from separate eigensolves of T^dagger T and T T^dagger.
inline ChiralSpectrum chiral_spectrum(const SpMat &D, const std::vector<int> &chir) {
  CMat T = odd_block(D, chir);
  ChiralSpectrum cs;
  cs.plus = hermitian_eigenvalues(T.adjoint() * T);
  cs.minus = hermitian_eigenvalues(T * T.adjoint());
  return cs;
}

//! All D^2 eigenvalues from one SVD of the odd block (fast path), or from a
//! dense eigensolve of D when no grading is supplied.
inline RVec squared_spectrum(const SpMat &D, const std::vector<int> &chir, int cap = 12000) {
  if (D.rows() > cap)
    throw InvalidInput("dimension " + std::to_string(D.rows()) + " exceeds the dense cap " +
                       std::to_string(cap) + "; use the stochastic path");
  RVec out;
  if (chir.empty()) {
    out = hermitian_eigenvalues(CMat(D)).cwiseAbs2();
  } else {
    // nonzero D^2 eigenvalues are the squared singular values, once per chirality
    RVec s = singular_values(odd_block(D, chir));
    const Eigen::Index r = s.size();
    out = RVec::Zero(D.rows());
    for (Eigen::Index i = 0; i < r; ++i) out[i] = out[r + i] = s[i] * s[i];
  }
  std::sort(out.data(), out.data() + out.size());
  return out;
}

inline double spectral_sum(const RVec &sq, const CutoffFunction &f, double lambda) {
  if (!(lambda > 0)) throw InvalidInput("cutoff scale must be positive");
  double s = 0.0;
  for (Eigen::Index i = 0; i < sq.size(); ++i) s += f(std::sqrt(std::max(sq[i], 0.0)) / lambda);
  return s;
}

//! Tr f(D/Lambda) by dense diagonalization.
inline double spectral_action_dense(const SpMat &D, const std::vector<int> &chir,
                                    const CutoffFunction &f, double lambda, int cap = 12000) {
  return spectral_sum(squared_spectrum(D, chir, cap), f, lambda);
}

// ---------------------------------------------------------------------------
// Stochastic Lanczos quadrature

struct StochasticOptions {
  int probes = 64;
  int depth = 60;
  std::uint64_t seed = 0;
  bool canonical = false;       // probes = all unit vectors
  std::vector<int> labels;      // dilution: probe p lives on label p % nlabels
  int threads = 0;              // 0: hardware concurrency
};

//! Per-probe Gauss rules for each operator (shared probes across operators).
struct ProbeRule {
  int label = 0;
  double norm2 = 0.0;
  std::vector<std::pair<RVec, RVec>> rules; // per operator: nodes, weights
};

struct SlqData {
  std::vector<ProbeRule> probes;
  int nlabels = 1;
  int breakdowns = 0;
  bool canonical = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline SlqData slq_rules(const std::vector<ApplyFn> &ops, int dim, const StochasticOptions &opt) {
  SlqData out;
  out.canonical = opt.canonical;
  std::vector<std::vector<int>> groups;
  if (!opt.labels.empty()) {
    if (int(opt.labels.size()) != dim) throw InvalidInput("dilution labels do not match dimension");
    int nl = *std::max_element(opt.labels.begin(), opt.labels.end()) + 1;
    groups.resize(nl);
    for (int i = 0; i < dim; ++i) groups[opt.labels[i]].push_back(i);
    out.nlabels = nl;
  }
  const int P = opt.canonical ? dim : opt.probes;
  if (P < 1) throw InvalidInput("stochastic estimator needs at least one probe");
  if (!opt.canonical && out.nlabels > 1 && P % out.nlabels != 0)
    throw InvalidInput("probe count must be a multiple of the number of dilution labels");
  out.probes.resize(P);
  std::vector<int> breaks(P, 0);

  auto work = [&](int p) {
    CVec v = CVec::Zero(dim);
    ProbeRule &pr = out.probes[p];
    if (opt.canonical) {
      v[p] = 1.0;
    } else {
      std::mt19937_64 rng(splitmix64(opt.seed ^ splitmix64(std::uint64_t(p) + 1)));
      std::bernoulli_distribution coin(0.5);
      if (out.nlabels > 1) {
        pr.label = p % out.nlabels;
        for (int i : groups[pr.label]) v[i] = coin(rng) ? 1.0 : -1.0;
      } else {
        for (int i = 0; i < dim; ++i) v[i] = coin(rng) ? 1.0 : -1.0;
      }
    }
    pr.norm2 = v.squaredNorm();
    if (pr.norm2 == 0.0) return;
    for (const auto &op : ops) {
      Tridiagonal td = lanczos(op, v, std::min(opt.depth, dim));
      breaks[p] += td.breakdown;
      pr.rules.push_back(td.gauss_rule());
    }
  };

  int nt = opt.threads > 0 ? opt.threads : int(std::max(1u, std::thread::hardware_concurrency()));
  nt = std::min(nt, P);
  if (nt <= 1) {
    for (int p = 0; p < P; ++p) work(p);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&] {
        for (int p; (p = next++) < P;) work(p);
      });
    for (auto &th : pool) th.join();
  }
  for (int b : breaks) out.breakdowns += b;
  return out;
}

struct StochasticEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  int probes = 0;
  int breakdowns = 0;
};

//! Estimate of sum_k weights[k] * Tr g(A_k) from shared-probe rules.
inline StochasticEstimate slq_evaluate(const SlqData &d, const std::vector<double> &weights,
                                       const std::function<double(double)> &g) {
  const int nl = d.nlabels;
  std::vector<std::vector<double>> per(nl);
  for (const auto &pr : d.probes) {
    double s = 0.0;
    if (!pr.rules.empty())
      for (std::size_t k = 0; k < weights.size(); ++k) {
        const auto &[nodes, w] = pr.rules[k];
        double q = 0.0;
        for (Eigen::Index j = 0; j < nodes.size(); ++j) q += w[j] * g(nodes[j]);
        s += weights[k] * pr.norm2 * q;
      }
    per[d.canonical ? 0 : pr.label].push_back(s);
  }
  StochasticEstimate e;
  e.probes = int(d.probes.size());
  e.breakdowns = d.breakdowns;
  if (d.canonical) {
    for (double x : per[0]) e.value += x;
    return e;
  }
  double var = 0.0;
  for (const auto &v : per) {
    if (v.empty()) continue;
    const double n = double(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    e.value += m;
    if (v.size() > 1) var += s2 / (n - 1) / n;
  }
  e.stderr_ = std::sqrt(var);
  return e;
}

inline ApplyFn squared_apply(std::shared_ptr<const SpMat> D) {
  return [D](const CVec &v) -> CVec { return (*D) * ((*D) * v); };
}

//! Tr f(D/Lambda) by stochastic Lanczos quadrature on D^2.
inline StochasticEstimate spectral_action_stochastic(const SpMat &D, const CutoffFunction &f,
                                                     double lambda, const StochasticOptions &opt) {
  if (!(lambda > 0)) throw InvalidInput("cutoff scale must be positive");
  auto ptr = std::make_shared<const SpMat>(D);
  SlqData d = slq_rules({squared_apply(ptr)}, int(D.rows()), opt);
  return slq_evaluate(d, {1.0}, [&](double x) { return f(std::sqrt(std::max(x, 0.0)) / lambda); });
}

// ---------------------------------------------------------------------------
// Heat traces

struct HeatTraceSeries {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<double> stderr_;
  std::vector<double> supertrace;
  std::string method = "dense";
  int probes = 0;
  int breakdowns = 0;
};

inline void require_positive_times(const std::vector<double> &ts) {
  if (ts.empty()) throw InvalidInput("empty t-grid");
  for (double t : ts)
    if (!(t > 0)) throw InvalidInput("heat trace needs t > 0");
}

inline double heat_sum(const RVec &sq, double t) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < sq.size(); ++i) s += std::exp(-t * sq[i]);
  return s;
}

inline HeatTraceSeries heat_trace_dense(const ChiralSpectrum &cs, const std::vector<double> &ts) {
  require_positive_times(ts);
  HeatTraceSeries h;
  for (double t : ts) {
    double p = heat_sum(cs.plus, t), m = heat_sum(cs.minus, t);
    h.t.push_back(t);
    h.value.push_back(p + m);
    h.stderr_.push_back(0.0);
    h.supertrace.push_back(p - m);
  }
  return h;
}

inline HeatTraceSeries heat_trace_dense(const RVec &sq, const std::vector<double> &ts) {
  require_positive_times(ts);
  HeatTraceSeries h;
  for (double t : ts) {
    h.t.push_back(t);
    h.value.push_back(heat_sum(sq, t));
    h.stderr_.push_back(0.0);
  }
  return h;
}

//! Stochastic heat traces of sum_k weights[k] Tr e^{-t D_k^2}, shared probes.
inline HeatTraceSeries heat_trace_stochastic(const std::vector<const SpMat *> &ops,
                                             const std::vector<double> &weights,
                                             const std::vector<double> &ts,
                                             const StochasticOptions &opt) {
  require_positive_times(ts);
  std::vector<ApplyFn> fns;
  for (auto *m : ops) fns.push_back(squared_apply(std::make_shared<const SpMat>(*m)));
  SlqData d = slq_rules(fns, int(ops.front()->rows()), opt);
  HeatTraceSeries h;
  h.method = opt.canonical ? "canonical" : "stochastic";
  h.probes = int(d.probes.size());
  h.breakdowns = d.breakdowns;
  for (double t : ts) {
    auto e = slq_evaluate(d, weights, [t](double x) { return std::exp(-t * x); });
    h.t.push_back(t);
    h.value.push_back(e.value);
    h.stderr_.push_back(e.stderr_);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Seeley-DeWitt predictor (flat torus)

struct SeeleyDeWitt {
  double a0 = 0.0;
  double a2 = 0.0;
  double a4 = 0.0;          // closed form from spinor-trace identities
  double a4_explicit = 0.0; // explicit E and Omega matrices on a quadrature grid
  double ym_trace = 0.0;    // int sum_{mu nu} tr F F (anti-Hermitian: <= 0)
};

inline CMat adjoint_matrix(const CMat &x) {
  const int n = int(x.rows());
  CMat id = CMat::Identity(n, n);
  return Eigen::kroneckerProduct(x, id).eval() - Eigen::kroneckerProduct(id, x.transpose()).eval();
}

inline SeeleyDeWitt seeley_dewitt_predict(const FieldStrength &fs, const CliffordModule &cm,
                                          bool flat = true) {
  if (!flat) throw InvalidInput("curved geometries are not supported");
  const int m = fs.geom.dim, N = fs.twist->N, S = cm.spinor_dim;
  if (cm.dim != m) throw InvalidInput("Clifford module does not match the torus dimension");
  const double pref = std::pow(4 * kPi, -0.5 * m);
  const double vol = fs.geom.volume();
  SeeleyDeWitt r;
  r.a0 = pref * vol * S * N * N;
  r.ym_trace = yang_mills_functional(fs).trace_sum;

  // closed form: a4 = -(S/3) (4 pi)^{-m/2} int sum_{mu<nu} tr_ad F^2, tr_ad = 2N tr on su(N)
  double half = 0.0;
  for (int mu = 0; mu < m; ++mu)
    for (int nu = mu + 1; nu < m; ++nu) half += integrated_trace(fs.F[mu][nu], fs.F[mu][nu]).real();
  r.a4 = -(double(S) / 3.0) * pref * 2.0 * N * half;

  // explicit: (1/360) (4 pi)^{-m/2} int Tr(180 E^2 + 30 Omega_{mu nu} Omega^{mu nu}) and int Tr E
  int supp = 0;
  for (int mu = 0; mu < m; ++mu)
    for (int nu = 0; nu < m; ++nu) supp = std::max(supp, fs.F[mu][nu].support());
  const int n = 2 * (2 * supp + 1) + 1;
  const CMat idS = CMat::Identity(S, S);
  std::vector<std::vector<CMat>> gg(m, std::vector<CMat>(m));
  for (int mu = 0; mu < m; ++mu)
    for (int nu = 0; nu < m; ++nu) gg[mu][nu] = cm.gammas[mu] * cm.gammas[nu];
  double sumE2 = 0.0, sumO2 = 0.0, sumE = 0.0;
  long npts = 1;
  for (int i = 0; i < m; ++i) npts *= n;
  for (long idx = 0; idx < npts; ++idx) {
    std::array<double, 4> x{0, 0, 0, 0};
    long r0 = idx;
    for (int mu = 0; mu < m; ++mu) {
      x[mu] = fs.geom.lengths[mu] * double(r0 % n) / n;
      r0 /= n;
    }
    CMat E = CMat::Zero(S * N * N, S * N * N);
    double o2 = 0.0;
    for (int mu = 0; mu < m; ++mu)
      for (int nu = mu + 1; nu < m; ++nu) {
        if (fs.F[mu][nu].terms.empty()) continue;
        CMat adf = adjoint_matrix(fs.F[mu][nu](x));
        E -= Eigen::kroneckerProduct(gg[mu][nu], adf).eval();
        CMat om = Eigen::kroneckerProduct(idS, adf).eval();
        o2 += 2.0 * (om * om).trace().real(); // (mu,nu) and (nu,mu)
      }
    sumE2 += (E * E).trace().real();
    sumE += E.trace().real();
    sumO2 += o2;
  }
  const double w = vol / double(npts);
  r.a4_explicit = pref / 360.0 * w * (180.0 * sumE2 + 30.0 * sumO2);
  r.a2 = pref * w * sumE;
  return r;
}

// ---------------------------------------------------------------------------
// Fit windows and asymptotic comparison

struct FitWindow {
  double t_lo = 0.0;  // truncation: e^{-t k_out^2} <= tau
  double t_hi = 0.0;  // wrap-around images: e^{-L^2/4t} <= tau
  double k_out = 0.0; // smallest excluded momentum
  double k_max = 0.0; // largest included momentum
  double t_min_heuristic = 0.0; // 4 / k_max^2
  double lambda_max_heuristic = 0.0; // k_max / 3
  double tau = 1e-4;
  bool nonempty() const { return t_lo < t_hi; }
  bool contains(double t) const { return t >= t_lo * (1 - 1e-12) && t <= t_hi * (1 + 1e-12); }
};

inline FitWindow fit_window(const Lattice &lat, double tau = 1e-4) {
  FitWindow w;
  w.tau = tau;
  w.k_out = std::numeric_limits<double>::infinity();
  double lmin = std::numeric_limits<double>::infinity();
  for (int mu = 0; mu < lat.geom.dim; ++mu) {
    double kin = 0.0;
    for (std::uint64_t key : lat.states)
      kin = std::max(kin, std::abs(lat.k(mu, keys::momentum(key)[mu])));
    w.k_max = std::max(w.k_max, kin);
    w.k_out = std::min(w.k_out, kin + 2 * kPi / lat.geom.lengths[mu]);
    lmin = std::min(lmin, lat.geom.lengths[mu]);
  }
  w.t_lo = std::log(1.0 / tau) / (w.k_out * w.k_out);
  w.t_hi = lmin * lmin / (4.0 * std::log(1.0 / tau));
  w.t_min_heuristic = 4.0 / (w.k_max * w.k_max);
  w.lambda_max_heuristic = w.k_max / 3.0;
  return w;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
  return v;
}

//! Least-squares line y = a + b x; returns (a, b, rms residual).
inline std::array<double, 3> linear_fit(const std::vector<double> &x, const std::vector<double> &y) {
  const int n = int(x.size());
  if (n < 2) throw InvalidInput("fit needs at least two points");
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) A(i, 0) = 1.0, A(i, 1) = x[i], b[i] = y[i];
  Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  double rms = std::sqrt((A * c - b).squaredNorm() / n);
  return {c[0], c[1], rms};
}

struct SpectralActionReport {
  std::string variable = "t"; // "t" or "lambda"
  std::vector<double> grid;
  std::vector<double> delta;
  std::vector<double> stderr_;
  std::vector<bool> in_window;
  std::string method = "dense";
  FitWindow window;
  bool window_ok = false;
  double fitted = std::numeric_limits<double>::quiet_NaN();
  double fit_slope = std::numeric_limits<double>::quiet_NaN();
  double fit_rms = 0.0;
  double predicted = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double relative_deviation = std::numeric_limits<double>::quiet_NaN();
  // predictor decomposition of S(Lambda): coefficients of Lambda^4, Lambda^2, Lambda^0
  std::array<double, 3> decomposition{0, 0, 0};
};

//! Delta(t) = Tr e^{-t D_A^2} - Tr e^{-t D_B^2}; in d = 4 its t -> 0 limit is
//! Delta a4, in d = 2 Delta/t -> Delta a4. Fit model: linear in t.
inline SpectralActionReport asymptotic_compare_heat(const std::vector<double> &ts,
                                                    const std::vector<double> &delta,
                                                    const std::vector<double> &err, int dim,
                                                    double predicted, const FitWindow &w,
                                                    const std::string &method = "dense") {
  if (dim != 2 && dim != 4) throw InvalidInput("asymptotic compare: dimension must be 2 or 4");
  SpectralActionReport r;
  r.variable = "t";
  r.grid = ts;
  r.delta = delta;
  r.stderr_ = err;
  r.window = w;
  r.method = method;
  r.predicted = predicted;
  r.window_ok = w.nonempty();
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    bool in = w.contains(ts[i]);
    r.in_window.push_back(in);
    r.window_ok = r.window_ok && in;
    x.push_back(ts[i]);
    y.push_back(dim == 2 ? delta[i] / ts[i] : delta[i]);
  }
  if (!r.window_ok || ts.size() < 2) return r;
  auto c = linear_fit(x, y);
  r.fitted = c[0];
  r.fit_slope = c[1];
  r.fit_rms = c[2];
  if (predicted != 0.0) {
    r.ratio = r.fitted / predicted;
    r.relative_deviation = std::abs(r.ratio - 1.0);
  }
  return r;
}

//! Lambda-grid fit: Delta S(Lambda) vs f(0) Delta a4 (d = 4) or Lambda^2 Delta S
//! vs -phi'(0) Delta a4 (d = 2), phi(u) = f(sqrt u). Window maps t = 1/Lambda^2.
inline SpectralActionReport fit_lambda(const std::vector<double> &lambdas,
                                       const std::vector<double> &delta,
                                       const std::vector<double> &err, int dim,
                                       const CutoffFunction &f, double delta_a4,
                                       const FitWindow &w, const std::string &method = "dense") {
  if (dim != 2 && dim != 4) throw InvalidInput("asymptotic compare: dimension must be 2 or 4");
  SpectralActionReport r;
  r.variable = "lambda";
  r.method = method;
  r.window = w;
  r.grid = lambdas;
  r.delta = delta;
  r.stderr_ = err;
  r.window_ok = w.nonempty() && lambdas.size() >= 2;
  r.predicted = (dim == 4 ? f.f_at_zero() : cutoff_first_heat_weight(f)) * delta_a4;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double L = lambdas[i];
    bool in = w.contains(1.0 / (L * L));
    r.in_window.push_back(in);
    r.window_ok = r.window_ok && in;
    x.push_back(1.0 / (L * L));
    y.push_back(dim == 2 ? delta[i] * L * L : delta[i]);
  }
  if (!r.window_ok) return r;
  auto c = linear_fit(x, y);
  r.fitted = c[0];
  r.fit_slope = c[1];
  r.fit_rms = c[2];
  if (r.predicted != 0.0) {
    r.ratio = r.fitted / r.predicted;
    r.relative_deviation = std::abs(r.ratio - 1.0);
  }
  return r;
}

inline SpectralActionReport asymptotic_compare_lambda(const RVec &sqA, const RVec &sqB,
                                                      const CutoffFunction &f,
                                                      const std::vector<double> &lambdas, int dim,
                                                      double delta_a4, const FitWindow &w) {
  std::vector<double> d, e;
  for (double L : lambdas) {
    d.push_back(spectral_sum(sqA, f, L) - spectral_sum(sqB, f, L));
    e.push_back(0.0);
  }
  return fit_lambda(lambdas, d, e, dim, f, delta_a4, w);
}

//! Predictor decomposition of S(Lambda) = 2 f4 a0 Lambda^4 + 2 f2 a2 Lambda^2 + f(0) a4.
inline std::array<double, 3> action_decomposition(const CutoffMoments &mo, const SeeleyDeWitt &sd) {
  return {2 * mo.f4 * sd.a0, 2 * mo.f2 * sd.a2, mo.f0 * sd.a4};
}

// ---------------------------------------------------------------------------
// Index, topological and fermionic actions

struct IndexReport {
  int index = 0;
  std::vector<double> t;
  std::vector<double> supertrace;
  double max_deviation = 0.0; // spread of the supertrace over t
  double integrality = 0.0;   // |supertrace - index|
  int kernel_plus = 0;
  int kernel_minus = 0;
  bool constant = false;
  bool ok() const { return constant && integrality <= 1e-6 && kernel_plus - kernel_minus == index; }
};

inline IndexReport mckean_singer_index(const ChiralSpectrum &cs, const std::vector<double> &ts,
                                       double kernel_tol = 1e-9, double const_tol = 1e-6) {
  require_positive_times(ts);
  if (ts.size() < 5) throw InvalidInput("McKean-Singer check needs at least 5 values of t");
  auto [lo, hi] = std::minmax_element(ts.begin(), ts.end());
  if (*hi < 10.0 * *lo) throw InvalidInput("t-grid must span at least a decade");
  IndexReport r;
  auto h = heat_trace_dense(cs, ts);
  r.t = h.t;
  r.supertrace = h.supertrace;
  auto [smin, smax] = std::minmax_element(h.supertrace.begin(), h.supertrace.end());
  r.max_deviation = *smax - *smin;
  r.constant = r.max_deviation <= const_tol;
  double mean = 0.0;
  for (double s : h.supertrace) mean += s;
  mean /= double(h.supertrace.size());
  r.index = int(std::lround(mean));
  for (double s : h.supertrace) r.integrality = std::max(r.integrality, std::abs(s - r.index));
  for (Eigen::Index i = 0; i < cs.plus.size(); ++i) r.kernel_plus += std::abs(cs.plus[i]) <= kernel_tol;
  for (Eigen::Index i = 0; i < cs.minus.size(); ++i) r.kernel_minus += std::abs(cs.minus[i]) <= kernel_tol;
  return r;
}

//! S_top = Tr gamma f(D/Lambda).
inline double topological_action(const ChiralSpectrum &cs, const CutoffFunction &f, double lambda) {
  return spectral_sum(cs.plus, f, lambda) - spectral_sum(cs.minus, f, lambda);
}

//! <psi, D psi>.
inline cplx fermionic_action(const CVec &psi, const SpMat &D) { return psi.dot(D * psi); }

//! |<U psi, D_{A^u} U psi> - <psi, D_A psi>| on the unbounded (enlarged) lattice.
inline double fermionic_gauge_residual(const SpectralTripleData &st,
                                       const std::vector<AlgebraSection> &pert,
                                       const AlgebraSection &u, const SparseField &psi) {
  auto pu = gauge_transform_pert(st.connection, pert, u);
  auto da = st.compile(fluctuated_dirac_op(st, pert));
  auto du = st.compile(fluctuated_dirac_op(st, pu));
  SparseField upsi = apply_gauge(st, u, psi);
  cplx a = field_inner(psi, da.apply(psi)), b = field_inner(upsi, du.apply(upsi));
  return std::abs(a - b);
}

//! |S(D_{A^u}) - S(D_A)| / |S(D_A)| for the dense spectral action.
inline double spectral_action_gauge_residual(const SpectralTripleData &st,
                                             const std::vector<AlgebraSection> &pert,
                                             const AlgebraSection &u, const CutoffFunction &f,
                                             double lambda) {
  auto pu = gauge_transform_pert(st.connection, pert, u);
  double a = spectral_action_dense(fluctuated_dirac(st, pert).sparse(), st.chirality, f, lambda);
  double b = spectral_action_dense(fluctuated_dirac(st, pu).sparse(), st.chirality, f, lambda);
  return std::abs(a - b) / std::max(std::abs(a), 1e-300);
}

// ---------------------------------------------------------------------------
// Line-bundle twist harness on T^2: Dirac operator of a U(1) bundle with
// integer flux q (constant field B = 2 pi |q| / (L1 L2)) in the Landau-level
// basis, truncated so that chiral pairing is preserved.

struct LineTwistOperator {
  int q = 0;
  int levels = 0;
  double B = 0.0;
  SpMat D;
  std::vector<int> chirality;
};

inline LineTwistOperator line_twist_dirac(int q, int levels, const TorusGeometry &g) {
  if (g.dim != 2) throw InvalidInput("line twist is defined on the 2-torus only");
  if (levels < 1) throw InvalidInput("line twist needs at least one Landau level");
  LineTwistOperator lt;
  lt.q = q;
  lt.levels = levels;
  if (q == 0) {
    CliffordModule cm = build_clifford(2);
    Lattice lat = build_mode_lattice(g, levels, periodic_spin());
    lt.D = build_free_dirac(lat, cm).sparse();
    for (std::uint64_t key : lat.states) lt.chirality.push_back(cm.chirality_signs()[keys::spin(key)]);
    return lt;
  }
  const int deg = std::abs(q);
  lt.B = 2 * kPi * deg / (g.lengths[0] * g.lengths[1]);
  const double c = std::sqrt(2.0 * lt.B);
  // chirality receiving a^dagger keeps levels 0..M-1, the other 0..M
  const int M = levels;
  const int np = (q > 0 ? M + 1 : M) * deg, nm = (q > 0 ? M : M + 1) * deg;
  std::vector<Triplet> trip;
  // indices: plus block first, then minus; state (level n, copy r) -> n*deg + r
  for (int r = 0; r < deg; ++r) {
    if (q > 0) {
      // D psi_+ = c a psi_+ into minus, D psi_- = c a^dagger psi_- into plus
      for (int n = 1; n <= M; ++n) {
        int ip = n * deg + r, im = np + (n - 1) * deg + r;
        trip.emplace_back(im, ip, c * std::sqrt(double(n)));
        trip.emplace_back(ip, im, c * std::sqrt(double(n)));
      }
    } else {
      for (int n = 1; n <= M; ++n) {
        int im = np + n * deg + r, ip = (n - 1) * deg + r;
        trip.emplace_back(ip, im, c * std::sqrt(double(n)));
        trip.emplace_back(im, ip, c * std::sqrt(double(n)));
      }
    }
  }
  lt.D = SpMat(np + nm, np + nm);
  lt.D.setFromTriplets(trip.begin(), trip.end());
  lt.chirality.assign(np, 1);
  lt.chirality.insert(lt.chirality.end(), nm, -1);
  return lt;
}

} // namespace fluxtriple
