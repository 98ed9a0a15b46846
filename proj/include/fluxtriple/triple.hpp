#pragma once
// The real even spectral triple (Gamma(B), L^2(B (x) S), D_B, J, gamma_B) on
// the truncated sector-Fourier lattice, with its axioms evaluated as
// numerical residuals.

#include "fluxtriple/operators.hpp"

#include <json.hpp>
#include <unsupported/Eigen/KroneckerProduct>

namespace fluxtriple {

struct AssemblyOptions {
  //! Skip the hard failure on a non-Hermitian Dirac operator (negative controls).
  bool allow_non_hermitian = false;
};

struct SpectralTripleData {
  TwistPtr twist;
  BundleConnection connection;
  std::shared_ptr<const Lattice> lattice;
  CliffordModule cm;
  FieldOperator dirac_op;
  OperatorHandle dirac;
  AntilinearOperator J;
  OperatorHandle grading;
  std::vector<int> chirality; // per lattice state

  int hilbert_dim() const { return lattice->dim(); }
  const Lattice &lat() const { return *lattice; }

  CompiledOperator compile(const FieldOperator &op) const {
    return CompiledOperator(op, *lattice, cm, twist);
  }
  SpMat matrix(const FieldOperator &op) const { return compile(op).matrix(*lattice); }
  SparseField apply(const FieldOperator &op, const SparseField &f) const {
    return compile(op).apply(f);
  }
  FieldOperator left(const AlgebraSection &a) const { return left_multiplication(a, cm); }
  FieldOperator right(const AlgebraSection &b) const { return right_multiplication(b, cm); }
  //! Truncated right action b^0 assembled literally as J L(b^*) J^{-1}.
  SpMat right_via_J(const AlgebraSection &b) const {
    SpMat l = matrix(left(fiber_involution(b)));
    SpMat jinv = double(cm.ko.epsilon) * SpMat(J.m.conjugate());
    return J.m * SpMat(l.conjugate()) * jinv;
  }
};

inline std::shared_ptr<const Lattice> triple_lattice(const TwistData &twist,
                                                     const TorusGeometry &geom, int K,
                                                     const SpinStructure &spin,
                                                     const CliffordModule &cm) {
  return std::make_shared<const Lattice>(
      build_lattice(geom, K, twist.N, twist.offsets(), spin, cm.spinor_dim));
}

//! J(c W_a e^{ikx} e_s) = conj(c) W_a^dagger e^{-ikx} C e_s.
inline AntilinearOperator real_structure(const Lattice &lat, const TwistData &tw,
                                         const CliffordModule &cm) {
  if (!lattice_reflection_symmetric(lat))
    throw InvalidInput("lattice is not symmetric under (a, k) -> (-a, -k)");
  std::vector<Triplet> trip;
  for (int j = 0; j < lat.dim(); ++j) {
    auto key = lat.states[j];
    int a = keys::sector(key), s = keys::spin(key);
    IVec4 m = keys::momentum(key);
    for (auto &x : m) x = -x;
    cplx ph = tw.adjoint_phase(a);
    for (int sp = 0; sp < cm.spinor_dim; ++sp) {
      cplx c = cm.conj_matrix(sp, s);
      if (c != 0.0) trip.emplace_back(lat.find(keys::pack(tw.negate(a), m, sp)), j, ph * c);
    }
  }
  AntilinearOperator J;
  J.m.resize(lat.dim(), lat.dim());
  J.m.setFromTriplets(trip.begin(), trip.end());
  return J;
}

inline SpectralTripleData assemble_triple(TwistPtr twist, const BundleConnection &conn,
                                          std::shared_ptr<const Lattice> lattice,
                                          const CliffordModule &cm,
                                          AssemblyOptions opt = {}) {
  if (lattice->geom.dim != cm.dim || twist->dim != cm.dim || conn.geom.dim != cm.dim)
    throw InvalidInput("assemble_triple: dimensions of the components differ");
  if (lattice->N != twist->N || lattice->spinor_dim != cm.spinor_dim)
    throw InvalidInput("assemble_triple: lattice does not match the bundle or spinors");
  if (!conn.twist->compatible(*twist))
    throw InvalidInput("assemble_triple: connection belongs to another twist");
  SpectralTripleData st;
  st.twist = twist;
  st.connection = conn;
  st.lattice = lattice;
  st.cm = cm;
  st.dirac_op = dirac_operator(conn.omega, cm);
  SpMat d = st.matrix(st.dirac_op);
  double defect = hermiticity_defect(d) / std::max(1.0, sparse_max_abs(d));
  if (defect > 1e-8 && !opt.allow_non_hermitian)
    throw std::logic_error("assemble_triple: assembled Dirac operator is not Hermitian");
  st.dirac = OperatorHandle::from_sparse(std::move(d), defect <= 1e-8);
  st.J = real_structure(*lattice, *twist, cm);
  auto signs = cm.chirality_signs();
  std::vector<Triplet> g;
  for (int i = 0; i < lattice->dim(); ++i) {
    int c = signs[keys::spin(lattice->states[i])];
    st.chirality.push_back(c);
    g.emplace_back(i, i, double(c));
  }
  SpMat gm(lattice->dim(), lattice->dim());
  gm.setFromTriplets(g.begin(), g.end());
  st.grading = OperatorHandle::from_sparse(std::move(gm), true);
  return st;
}

//! Convenience: twist, zero or given connection, lattice, Clifford module in one go.
inline SpectralTripleData make_triple(int d, int N, int n12, int K, const SpinStructure &spin,
                                      std::optional<BundleConnection> conn = std::nullopt,
                                      double length = 2 * kPi) {
  auto tw = make_twist(N, n12, d);
  auto geom = square_torus(d, length);
  auto cm = build_clifford(d);
  BundleConnection c = conn ? *conn : zero_connection(tw, geom);
  return assemble_triple(tw, c, triple_lattice(*tw, geom, K, spin, cm), cm);
}

// ---------------------------------------------------------------------------
// Verification

struct Check {
  std::string name;
  double residual_raw = 0.0;
  double residual_enlarged = 0.0;
  double threshold = 0.0;
  bool uses_enlarged = true;
  bool pass() const { return (uses_enlarged ? residual_enlarged : residual_raw) <= threshold; }
};

struct VerificationReport {
  std::vector<Check> checks;
  std::uint64_t seed = 0;
  int K = 0;
  int K_enlarged = 0;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check &c) { return c.pass(); });
  }
  std::vector<std::string> failing() const {
    std::vector<std::string> f;
    for (const auto &c : checks)
      if (!c.pass()) f.push_back(c.name);
    return f;
  }
  const Check &get(const std::string &name) const {
    for (const auto &c : checks)
      if (c.name == name) return c;
    throw InvalidInput("no check named " + name);
  }
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto &c : checks)
      arr.push_back({{"check", c.name},
                     {"residual_raw", c.residual_raw},
                     {"residual_enlarged", c.residual_enlarged},
                     {"threshold", c.threshold},
                     {"pass", c.pass()},
                     {"seed", seed},
                     {"cutoffs", {K, K_enlarged}}});
    return arr;
  }
};

namespace detail {
inline double rel(double num, double den) { return num / std::max(den, 1e-300); }

inline double sparse_residual(const SpMat &a, double scale = 1.0) {
  return sparse_max_abs(a) / std::max(scale, 1e-300);
}
} // namespace detail

//! max over pairs of |[a, b^0] v| / max(|a b^0 v|, |b^0 a v|) on sparse probes.
inline Check verify_order_zero(const SpectralTripleData &st, int samples, std::uint64_t seed,
                               int probe_states = 12) {
  std::mt19937_64 rng(seed);
  Check c{"order_zero", 0, 0, 1e-10};
  for (int i = 0; i < samples; ++i) {
    AlgebraSection a = random_section(st.twist, st.lat().geom, rng, 6, 1);
    AlgebraSection b = random_section(st.twist, st.lat().geom, rng, 6, 1);
    auto la = st.compile(st.left(a)), rb = st.compile(st.right(b));
    SparseField v = random_probe(st.lat(), rng, probe_states);
    SparseField x = la.apply(rb.apply(v)), y = rb.apply(la.apply(v));
    double e = detail::rel(field_norm(field_combine(x, 1, y, -1)),
                           std::max(field_norm(x), field_norm(y)));
    c.residual_enlarged = std::max(c.residual_enlarged, e);
    SpMat A = la.matrix(st.lat()), B = rb.matrix(st.lat());
    CVec w = field_to_vector(st.lat(), v);
    CVec xr = A * (B * w), yr = B * (A * w);
    c.residual_raw = std::max(c.residual_raw, detail::rel((xr - yr).norm(), std::max(xr.norm(), yr.norm())));
  }
  return c;
}

//! [[D, a], b^0] on sparse probes, evaluated without truncation.
inline Check verify_order_one(const SpectralTripleData &st, int samples, std::uint64_t seed,
                              int probe_states = 12) {
  std::mt19937_64 rng(seed);
  Check c{"order_one", 0, 0, 1e-10};
  auto d = st.compile(st.dirac_op);
  const SpMat &D = st.dirac.sparse();
  for (int i = 0; i < samples; ++i) {
    AlgebraSection a = random_section(st.twist, st.lat().geom, rng, 6, 1);
    AlgebraSection b = random_section(st.twist, st.lat().geom, rng, 6, 1);
    auto la = st.compile(st.left(a)), rb = st.compile(st.right(b));
    SparseField v = random_probe(st.lat(), rng, probe_states);
    // [D,a] b0 v - b0 [D,a] v
    auto comm = [&](const SparseField &f) {
      return field_combine(d.apply(la.apply(f)), 1, la.apply(d.apply(f)), -1);
    };
    SparseField x = comm(rb.apply(v)), y = rb.apply(comm(v));
    double scale = std::max({field_norm(d.apply(la.apply(rb.apply(v)))), field_norm(x), field_norm(y)});
    c.residual_enlarged = std::max(c.residual_enlarged, detail::rel(field_norm(field_combine(x, 1, y, -1)), scale));
    SpMat A = la.matrix(st.lat()), B = rb.matrix(st.lat());
    SpMat C = D * A - A * D;
    CVec w = field_to_vector(st.lat(), v);
    CVec xr = C * (B * w), yr = B * (C * w);
    c.residual_raw = std::max(c.residual_raw, detail::rel((xr - yr).norm(), std::max(xr.norm(), yr.norm())));
  }
  return c;
}

//! Exact sign identities of the truncated operators plus order conditions.
inline VerificationReport verify_triple(const SpectralTripleData &st, int samples,
                                        std::uint64_t seed) {
  VerificationReport rep;
  rep.seed = seed;
  rep.K = st.lat().K;
  rep.K_enlarged = -1; // unbounded sparse evaluation
  const SpMat &D = st.dirac.sparse();
  const SpMat &G = st.grading.sparse();
  const double dscale = std::max(1.0, sparse_max_abs(D));
  const int n = st.hilbert_dim();
  SpMat id(n, n);
  id.setIdentity();
  auto exact = [&](std::string name, double r, double thr) {
    Check c{std::move(name), r, r, thr};
    rep.checks.push_back(c);
  };
  exact("self_adjoint", detail::sparse_residual(SpMat(D - SpMat(D.adjoint())), dscale), 1e-10);
  exact("J_squared", detail::sparse_residual(SpMat(st.J.square() - double(st.cm.ko.epsilon) * id)), 1e-12);
  exact("JD", detail::sparse_residual(SpMat(st.J.m * SpMat(D.conjugate()) -
                                            double(st.cm.ko.epsilon_prime) * (D * st.J.m)), dscale), 1e-12);
  exact("Jgamma", detail::sparse_residual(SpMat(st.J.m * SpMat(G.conjugate()) -
                                                double(st.cm.ko.epsilon_second) * (G * st.J.m))), 1e-12);
  {
    SpMat jj = SpMat(st.J.m.adjoint()) * st.J.m;
    exact("J_antiunitary", detail::sparse_residual(SpMat(jj - id)), 1e-12);
  }
  {
    SpMat gg = G * G;
    exact("gamma_squared", detail::sparse_residual(SpMat(gg - id)), 1e-12);
  }
  exact("gamma_D", detail::sparse_residual(SpMat(G * D + D * G), dscale), 1e-12);
  {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    double r = 0.0;
    for (int i = 0; i < samples; ++i) {
      AlgebraSection a = random_section(st.twist, st.lat().geom, rng, 6, 1);
      SpMat A = st.matrix(st.left(a));
      r = std::max(r, detail::sparse_residual(SpMat(G * A - A * G), std::max(1.0, sparse_max_abs(A))));
    }
    exact("gamma_a", r, 1e-12);
  }
  rep.checks.push_back(verify_order_zero(st, samples, seed + 1));
  rep.checks.push_back(verify_order_one(st, samples, seed + 2));
  return rep;
}

// ---------------------------------------------------------------------------
// Bounded commutators

//! Matrix of an exactly evaluated map from the states of `inner` into the
//! set of all states it reaches.
template <class Map>
inline SpMat exact_restriction(const Lattice &inner, Map &&map) {
  std::unordered_map<std::uint64_t, int> rows;
  std::vector<Triplet> trip;
  for (int j = 0; j < inner.dim(); ++j) {
    SparseField e{{inner.states[j], 1.0}};
    for (const auto &[k, v] : map(e)) {
      if (std::abs(v) < 1e-15) continue;
      auto [it, fresh] = rows.emplace(k, int(rows.size()));
      trip.emplace_back(it->second, j, v);
    }
  }
  SpMat m(std::max<int>(1, int(rows.size())), inner.dim());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

//! || [D_B, a] P_K || for each cutoff in the sweep.
inline std::vector<double> verify_bounded_commutators(const SpectralTripleData &st,
                                                      const AlgebraSection &a,
                                                      const std::vector<int> &sweep) {
  std::vector<double> out;
  for (int K : sweep) {
    auto inner = triple_lattice(*st.twist, st.lat().geom, K, st.lat().spin, st.cm);
    CompiledOperator d(st.dirac_op, *inner, st.cm, st.twist);
    CompiledOperator la(st.left(a), *inner, st.cm, st.twist);
    SpMat c = exact_restriction(*inner, [&](const SparseField &e) {
      return field_combine(d.apply(la.apply(e)), 1, la.apply(d.apply(e)), -1);
    });
    out.push_back(operator_norm(c, 200));
  }
  return out;
}

//! sup over a grid of || sum_mu gamma^mu (x) (nabla_mu a)(x) ||.
inline double commutator_sup_oracle(const SpectralTripleData &st, const AlgebraSection &a,
                                    int n = 48) {
  std::vector<AlgebraSection> grad;
  for (int mu = 0; mu < st.cm.dim; ++mu) grad.push_back(st.connection.covariant(mu, a));
  double best = 0.0;
  for (const auto &x : torus_grid(st.lat().geom, n)) {
    CMat m = CMat::Zero(st.cm.spinor_dim * st.twist->N, st.cm.spinor_dim * st.twist->N);
    for (int mu = 0; mu < st.cm.dim; ++mu)
      m += Eigen::kroneckerProduct(st.cm.gammas[mu], grad[mu](x)).eval();
    Eigen::JacobiSVD<CMat> svd(m);
    best = std::max(best, svd.singularValues()[0]);
  }
  return best;
}

struct KasparovNorms {
  std::vector<double> forward;  // D T_a - T_a Dslash
  std::vector<double> backward; // Dslash T_a^* - T_a^* D
};

//! On a spinor lattice of cutoff K, T_a psi = a (x) psi.
inline KasparovNorms kasparov_bound_check(const SpectralTripleData &st, const AlgebraSection &a,
                                          const std::vector<int> &sweep) {
  KasparovNorms out;
  const int N = st.twist->N;
  auto T = [&](const SparseField &psi) {
    SparseField r;
    for (const auto &[k, v] : psi) {
      IVec4 m = keys::momentum(k);
      for (const auto &[ka, ca] : a.terms) {
        IVec4 ma = keys::momentum(ka), mm;
        for (int mu = 0; mu < 4; ++mu) mm[mu] = N * m[mu] + ma[mu];
        r[keys::pack(keys::sector(ka), mm, keys::spin(k))] += ca * v;
      }
    }
    return r;
  };
  auto Tadj = [&](const SparseField &f) {
    SparseField r;
    for (const auto &[k, v] : f)
      for (const auto &[ka, ca] : a.terms) {
        if (keys::sector(ka) != keys::sector(k)) continue;
        IVec4 m = keys::momentum(k), ma = keys::momentum(ka), mm;
        for (int mu = 0; mu < 4; ++mu) mm[mu] = (m[mu] - ma[mu]) / N;
        r[keys::pack(0, mm, keys::spin(k))] += std::conj(ca) * v;
      }
    return r;
  };
  auto trivial = make_twist(1, 0, st.cm.dim);
  for (int K : sweep) {
    auto spinors = std::make_shared<const Lattice>(build_mode_lattice(st.lat().geom, K, st.lat().spin));
    auto inner = triple_lattice(*st.twist, st.lat().geom, K, st.lat().spin, st.cm);
    CompiledOperator d(st.dirac_op, *inner, st.cm, st.twist);
    CompiledOperator dslash(FieldOperator{true, {}}, *spinors, st.cm, trivial);
    SpMat f = exact_restriction(*spinors, [&](const SparseField &e) {
      return field_combine(d.apply(T(e)), 1, T(dslash.apply(e)), -1);
    });
    SpMat b = exact_restriction(*inner, [&](const SparseField &e) {
      return field_combine(dslash.apply(Tadj(e)), 1, Tadj(d.apply(e)), -1);
    });
    out.forward.push_back(operator_norm(f, 200));
    out.backward.push_back(operator_norm(b, 200));
  }
  return out;
}

//! sup_x sqrt(lambda_max(sum tau(X_mu^dagger X_nu) gamma^mu gamma^nu)), X = nabla a.
inline double kasparov_sup_oracle(const SpectralTripleData &st, const AlgebraSection &a, int n = 48) {
  std::vector<AlgebraSection> grad;
  for (int mu = 0; mu < st.cm.dim; ++mu) grad.push_back(st.connection.covariant(mu, a));
  const int N = st.twist->N;
  double best = 0.0;
  for (const auto &x : torus_grid(st.lat().geom, n)) {
    std::vector<CMat> X;
    for (int mu = 0; mu < st.cm.dim; ++mu) X.push_back(grad[mu](x));
    CMat g = CMat::Zero(st.cm.spinor_dim, st.cm.spinor_dim);
    for (int mu = 0; mu < st.cm.dim; ++mu)
      for (int nu = 0; nu < st.cm.dim; ++nu)
        g += ((X[mu].adjoint() * X[nu]).trace() / double(N)) * st.cm.gammas[mu] * st.cm.gammas[nu];
    best = std::max(best, std::sqrt(std::max(0.0, hermitian_eigenvalues(0.5 * (g + g.adjoint())).maxCoeff())));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Spectral diagnostics

//! Max distance between the sorted spectrum and its negation.
inline double spectral_asymmetry(const RVec &sorted) {
  const int n = int(sorted.size());
  double r = 0.0;
  for (int i = 0; i < n; ++i) r = std::max(r, std::abs(sorted[i] + sorted[n - 1 - i]));
  return r;
}

//! Least-squares exponent of N(lambda) = #{|lambda_i| <= lambda} over [lo, hi].
inline double counting_exponent(const RVec &abs_eigs, double lo, double hi, int points = 12) {
  std::vector<double> e(abs_eigs.data(), abs_eigs.data() + abs_eigs.size());
  std::sort(e.begin(), e.end());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < points; ++i) {
    double lam = lo * std::pow(hi / lo, double(i) / (points - 1));
    double cnt = double(std::upper_bound(e.begin(), e.end(), lam) - e.begin());
    double x = std::log(lam), y = std::log(std::max(cnt, 1.0));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  return (points * sxy - sx * sy) / (points * sxx - sx * sx);
}

} // namespace fluxtriple
