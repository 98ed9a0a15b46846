#pragma once
// Inner fluctuations, gauge transformations and curvature. Gauge data are
// stored anti-Hermitian: omega, the perturbation AA = i A (A Hermitian) and F.

#include "fluxtriple/cech.hpp"
#include "fluxtriple/triple.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace fluxtriple {

struct FluctuationPair {
  AlgebraSection a;
  AlgebraSection b;
};

struct InnerFluctuation {
  std::vector<FluctuationPair> pairs;
  std::vector<AlgebraSection> a_mu_raw; // -i sum_j a_j nabla_mu b_j
  std::vector<AlgebraSection> a_mu;     // Hermitian part
  std::vector<AlgebraSection> pert;     // i * traceless part (su(N)-valued)
  double symmetrization_defect = 0.0;
  double trace_removed = 0.0;
};

//! A_mu = -i sum_j a_j nabla_mu b_j, so that sum_j a_j [D, b_j] = gamma^mu L(A_mu).
inline InnerFluctuation build_fluctuation(const SpectralTripleData &st,
                                          std::vector<FluctuationPair> pairs) {
  InnerFluctuation fl;
  const int d = st.cm.dim;
  fl.a_mu_raw.assign(d, AlgebraSection(st.twist, st.lat().geom));
  for (const auto &p : pairs) {
    require_compatible(p.a, p.b);
    if (!p.a.twist->compatible(*st.twist))
      throw InvalidInput("build_fluctuation: pair belongs to another twist");
    for (int mu = 0; mu < d; ++mu)
      fl.a_mu_raw[mu] += (-kI) * fiber_product(p.a, st.connection.covariant(mu, p.b));
  }
  for (int mu = 0; mu < d; ++mu) {
    AlgebraSection &raw = fl.a_mu_raw[mu];
    raw.prune();
    AlgebraSection herm = 0.5 * (raw + fiber_involution(raw));
    fl.symmetrization_defect = std::max(fl.symmetrization_defect, (raw - fiber_involution(raw)).max_coeff());
    herm.prune();
    fl.trace_removed = std::max(fl.trace_removed, herm.trace_part().max_coeff());
    fl.a_mu.push_back(herm);
    fl.pert.push_back((kI * herm.traceless()).prune());
  }
  fl.pairs = std::move(pairs);
  return fl;
}

//! Converter from a Hermitian one-form A_mu straight to the su(N) field.
inline std::vector<AlgebraSection> pert_from_hermitian(const std::vector<AlgebraSection> &a) {
  std::vector<AlgebraSection> p;
  for (const auto &x : a) p.push_back((kI * x.traceless()).prune());
  return p;
}

//! gamma^mu L(A_mu) from the Hermitian one-form.
inline FieldOperator fluctuation_operator(const InnerFluctuation &fl, const CliffordModule &cm) {
  return clifford_left(fl.a_mu, cm);
}

//! Literal sum_j a_j [D, b_j] evaluated exactly on a sparse field.
inline SparseField apply_pairs(const SpectralTripleData &st, const InnerFluctuation &fl,
                               const SparseField &v) {
  auto d = st.compile(st.dirac_op);
  SparseField out;
  for (const auto &p : fl.pairs) {
    auto la = st.compile(st.left(p.a)), lb = st.compile(st.left(p.b));
    SparseField c = field_combine(d.apply(lb.apply(v)), 1, lb.apply(d.apply(v)), -1);
    for (const auto &[k, x] : la.apply(c)) out[k] += x;
  }
  return out;
}

//! Total connection omega + pert.
inline std::vector<AlgebraSection> total_connection(const BundleConnection &c,
                                                    const std::vector<AlgebraSection> &pert) {
  std::vector<AlgebraSection> w = c.omega;
  for (std::size_t mu = 0; mu < w.size() && mu < pert.size(); ++mu) w[mu] += pert[mu];
  for (auto &x : w) x.prune();
  return w;
}

//! D_A = -i gamma^mu (d_mu + ad(omega_mu + AA_mu)) from a direct su(N) field.
inline FieldOperator fluctuated_dirac_op(const SpectralTripleData &st,
                                         const std::vector<AlgebraSection> &pert) {
  for (const auto &p : pert)
    if (su_defect(p) > 1e-10) throw InvalidInput("fluctuated_dirac: field is not su(N)-valued");
  return dirac_operator(total_connection(st.connection, pert), st.cm);
}

inline OperatorHandle fluctuated_dirac(const SpectralTripleData &st,
                                       const std::vector<AlgebraSection> &pert) {
  SpMat m = st.matrix(fluctuated_dirac_op(st, pert));
  return OperatorHandle::from_sparse(std::move(m), true);
}

//! D + A + eps' J A J^{-1} with A = gamma^mu L(A_mu) assembled on the lattice.
inline OperatorHandle fluctuated_dirac(const SpectralTripleData &st, const InnerFluctuation &fl) {
  SpMat a = st.matrix(fluctuation_operator(fl, st.cm));
  if (hermiticity_defect(a) > 1e-10 * std::max(1.0, sparse_max_abs(a)))
    throw InvalidInput("fluctuated_dirac: fluctuation is not self-adjoint");
  const double eps = st.cm.ko.epsilon, epsp = st.cm.ko.epsilon_prime;
  SpMat jaj = eps * (st.J.m * SpMat(a.conjugate()) * SpMat(st.J.m.conjugate()));
  SpMat m = st.dirac.sparse() + a + epsp * jaj;
  m.prune(cplx(0.0), 0.0);
  return OperatorHandle::from_sparse(std::move(m), true);
}

// ---------------------------------------------------------------------------
// Gauge transformations

//! U = u J u J^{-1}: psi -> u psi u^*.
inline SparseField apply_gauge(const SpectralTripleData &st, const AlgebraSection &u,
                               const SparseField &v) {
  auto lu = st.compile(st.left(u));
  auto ru = st.compile(st.right(fiber_involution(u)));
  return lu.apply(ru.apply(v));
}

inline double unitarity_defect(const AlgebraSection &u) {
  AlgebraSection one = identity_section(u.twist, u.geom);
  return std::max((fiber_product(u, fiber_involution(u)) - one).prune(1e-15).max_coeff(),
                  (fiber_product(fiber_involution(u), u) - one).prune(1e-15).max_coeff());
}

//! AA^u = u AA u^* + u nabla u^*, reduced to its traceless part.
inline std::vector<AlgebraSection> gauge_transform_pert(const BundleConnection &c,
                                                        const std::vector<AlgebraSection> &pert,
                                                        const AlgebraSection &u) {
  if (unitarity_defect(u) > 1e-10) throw InvalidInput("gauge_transform: u is not unitary");
  AlgebraSection us = fiber_involution(u);
  std::vector<AlgebraSection> out;
  for (int mu = 0; mu < c.geom.dim; ++mu) {
    AlgebraSection p = mu < int(pert.size()) ? pert[mu] : AlgebraSection(c.twist, c.geom);
    AlgebraSection x = fiber_product(fiber_product(u, p), us) + fiber_product(u, c.covariant(mu, us));
    out.push_back(x.prune(1e-15).traceless());
  }
  return out;
}

struct GaugeResult {
  std::vector<AlgebraSection> pert; // transformed field
  double covariance_residual = 0.0; // |U D_A U^* v - D_{A^u} v| / |D_{A^u} v|
  double unitarity = 0.0;
};

inline GaugeResult gauge_transform(const SpectralTripleData &st,
                                   const std::vector<AlgebraSection> &pert,
                                   const AlgebraSection &u, int probes, std::uint64_t seed) {
  GaugeResult r;
  r.unitarity = unitarity_defect(u);
  r.pert = gauge_transform_pert(st.connection, pert, u);
  auto da = st.compile(fluctuated_dirac_op(st, pert));
  auto du = st.compile(fluctuated_dirac_op(st, r.pert));
  AlgebraSection us = fiber_involution(u);
  std::mt19937_64 rng(seed);
  for (int p = 0; p < probes; ++p) {
    SparseField v = random_probe(st.lat(), rng, 10);
    SparseField lhs = apply_gauge(st, u, da.apply(apply_gauge(st, us, v)));
    SparseField rhs = du.apply(v);
    double e = field_norm(field_combine(lhs, 1, rhs, -1)) / std::max(1e-300, field_norm(rhs));
    r.covariance_residual = std::max(r.covariance_residual, e);
  }
  return r;
}

//! Constant unitary (Haar-like via QR of a Gaussian matrix), det-normalized.
inline CMat random_special_unitary(int N, std::mt19937_64 &rng) {
  std::normal_distribution<double> g;
  CMat z(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) z(i, j) = cplx(g(rng), g(rng));
  Eigen::HouseholderQR<CMat> qr(z);
  CMat q = qr.householderQ();
  CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < N; ++j) q.col(j) *= std::polar(1.0, std::arg(r(j, j)));
  return special_unitary_rep(q);
}

//! Finite-support unitary section. Untwisted: V diag(e^{i n_j.x}) W with
//! constant V, W. Twisted: a monomial W_a e^{ik.x}.
inline AlgebraSection random_unitary_section(TwistPtr twist, const TorusGeometry &g,
                                             std::mt19937_64 &rng, int p = 1) {
  const int N = twist->N;
  std::uniform_int_distribution<int> mode(-p, p);
  if (twist->n12 == 0) {
    CMat V = random_special_unitary(N, rng), W = random_special_unitary(N, rng);
    AlgebraSection u(twist, g);
    for (int j = 0; j < N; ++j) {
      IVec4 n{0, 0, 0, 0};
      for (int mu = 0; mu < g.dim; ++mu) n[mu] = mode(rng);
      CMat e = CMat::Zero(N, N);
      e(j, j) = 1.0;
      u += matrix_section(twist, g, V * e * W, n);
    }
    return u.prune(1e-15);
  }
  std::uniform_int_distribution<int> sec(0, twist->sectors() - 1);
  std::uniform_real_distribution<double> ph(0, 2 * kPi);
  AlgebraSection u(twist, g);
  IVec4 n{0, 0, 0, 0};
  for (int mu = 0; mu < g.dim; ++mu) n[mu] = mode(rng);
  u.add_mode(sec(rng), n, std::polar(1.0, ph(rng)));
  return u;
}

//! u = exp(i theta cos(x_mu) H) for a constant Hermitian involution H, via a
//! truncated Jacobi-Anger series. Untwisted bundles only.
inline AlgebraSection cosine_gauge(TwistPtr twist, const TorusGeometry &g, const CMat &H,
                                   double theta, int mu, int terms = 24) {
  // sum_n i^n J_n(theta) e^{inx} (P_+ + (-1)^n P_-)
  const int N = twist->N;
  CMat id = CMat::Identity(N, N);
  CMat pp = 0.5 * (id + H), pm = 0.5 * (id - H);
  AlgebraSection u(twist, g);
  for (int n = -terms; n <= terms; ++n) {
    double j = std::cyl_bessel_j(std::abs(n), theta);
    if (n < 0 && (n % 2)) j = -j;
    cplx coef = std::pow(kI, n) * j;
    CMat m = coef * (pp + ((n % 2) ? -1.0 : 1.0) * pm);
    IVec4 nn{0, 0, 0, 0};
    nn[mu] = n;
    u += matrix_section(twist, g, m, nn);
  }
  return u.prune(1e-17);
}

// ---------------------------------------------------------------------------
// Curvature

struct FieldStrength {
  TwistPtr twist;
  TorusGeometry geom;
  std::vector<AlgebraSection> total;                 // omega + pert
  std::vector<std::vector<AlgebraSection>> F;        // F[mu][nu]

  const AlgebraSection &operator()(int mu, int nu) const { return F[mu][nu]; }
};

//! F_{mu nu} = d_mu AA_nu - d_nu AA_mu + [AA_mu, AA_nu], AA = omega + pert.
inline FieldStrength curvature(const BundleConnection &conn,
                               const std::vector<AlgebraSection> &pert) {
  FieldStrength fs{conn.twist, conn.geom, total_connection(conn, pert), {}};
  const int d = conn.geom.dim;
  fs.F.assign(d, std::vector<AlgebraSection>(d, AlgebraSection(conn.twist, conn.geom)));
  for (int mu = 0; mu < d; ++mu)
    for (int nu = mu + 1; nu < d; ++nu) {
      AlgebraSection f = fs.total[nu].derivative(mu) - fs.total[mu].derivative(nu) +
                         commutator(fs.total[mu], fs.total[nu]);
      f.prune(1e-15);
      fs.F[mu][nu] = f;
      fs.F[nu][mu] = (-1.0) * f;
    }
  return fs;
}

//! Cyclic sum of nabla_lambda F_{mu nu} at coefficient level.
inline double bianchi_residual(const FieldStrength &fs) {
  const int d = fs.geom.dim;
  double r = 0.0;
  auto cov = [&](int l, const AlgebraSection &x) {
    return x.derivative(l) + commutator(fs.total[l], x);
  };
  for (int l = 0; l < d; ++l)
    for (int mu = 0; mu < d; ++mu)
      for (int nu = 0; nu < d; ++nu) {
        if (l == mu || mu == nu || l == nu) continue;
        AlgebraSection s = cov(l, fs.F[mu][nu]) + cov(mu, fs.F[nu][l]) + cov(nu, fs.F[l][mu]);
        r = std::max(r, s.max_coeff());
      }
  return r;
}

//! Plaquette holonomy with midpoint links exp(h AA_mu); returns the max over
//! sample points of | log(U_plaq)/h^2 - F_{mu nu}(center) |.
inline double holonomy_defect(const FieldStrength &fs, int mu, int nu, double h,
                              const std::vector<std::array<double, 4>> &points) {
  auto link = [&](int dir, std::array<double, 4> x) {
    x[dir] += 0.5 * h;
    return CMat((h * fs.total[dir](x)).exp());
  };
  double r = 0.0;
  for (auto x : points) {
    auto xm = x, xn = x, c = x;
    xm[mu] += h;
    xn[nu] += h;
    c[mu] += 0.5 * h;
    c[nu] += 0.5 * h;
    CMat u = link(mu, x) * link(nu, xm) * link(mu, xn).inverse() * link(nu, x).inverse();
    CMat lg = u.log() / (h * h);
    r = std::max(r, max_abs(lg - fs.F[mu][nu](c)));
  }
  return r;
}

//! int tr(X Y) dx from Fourier coefficients: Vol * N * [XY]_{0,0}.
inline cplx integrated_trace(const AlgebraSection &x, const AlgebraSection &y) {
  require_compatible(x, y);
  const TwistData &tw = *x.twist;
  cplx s = 0.0;
  for (const auto &[ka, ca] : x.terms) {
    const int a = keys::sector(ka), b = tw.negate(a);
    IVec4 m = keys::momentum(ka);
    for (auto &v : m) v = -v;
    auto it = y.terms.find(keys::pack(b, m, 0));
    if (it != y.terms.end()) s += ca * it->second * tw.product_phase(a, b);
  }
  return x.geom.volume() * double(tw.N) * s;
}

struct YangMills {
  double trace_sum = 0.0;  // int sum_{mu nu} tr F F  (<= 0 for anti-Hermitian F)
  double norm_sum = 0.0;   // -trace_sum
  double half_norm = 0.0;  // sum_{mu<nu} int -tr F F
};

inline YangMills yang_mills_functional(const FieldStrength &fs) {
  YangMills ym;
  const int d = fs.geom.dim;
  for (int mu = 0; mu < d; ++mu)
    for (int nu = 0; nu < d; ++nu) {
      if (mu == nu) continue;
      double v = integrated_trace(fs.F[mu][nu], fs.F[mu][nu]).real();
      ym.trace_sum += v;
      if (mu < nu) ym.half_norm -= v;
    }
  ym.norm_sum = -ym.trace_sum;
  return ym;
}

// ---------------------------------------------------------------------------
// Named field configurations

//! AA_2 = i c sigma_3 sin(x_1) (sigma_3 = clock for N = 2).
inline std::vector<AlgebraSection> abelian_sin_field(TwistPtr twist, const TorusGeometry &g, double c) {
  if (twist->N != 2 || twist->n12 != 0) throw InvalidInput("abelian_sin field needs N = 2, flux 0");
  std::vector<AlgebraSection> p(g.dim, AlgebraSection(twist, g));
  CMat s3 = twist->basis_matrix(twist->sector_of(1, 0));
  // i c s3 sin x = (c/2) s3 (e^{ix} - e^{-ix})
  p[1] += matrix_section(twist, g, 0.5 * c * s3, {1, 0, 0, 0});
  p[1] += matrix_section(twist, g, -0.5 * c * s3, {-1, 0, 0, 0});
  return p;
}

//! AA_1 = i c sigma_1, AA_2 = i c sigma_2 (constant, non-commuting).
inline std::vector<AlgebraSection> constant_su2_field(TwistPtr twist, const TorusGeometry &g, double c) {
  if (twist->N != 2 || twist->n12 != 0) throw InvalidInput("constant_su2 field needs N = 2, flux 0");
  std::vector<AlgebraSection> p(g.dim, AlgebraSection(twist, g));
  CMat s1(2, 2), s2(2, 2);
  s1 << 0, 1, 1, 0;
  s2 << 0, cplx(0, -1), cplx(0, 1), 0;
  p[0] = matrix_section(twist, g, kI * c * s1);
  p[1] = matrix_section(twist, g, kI * c * s2);
  return p;
}

//! Central Hermitian one-form A_mu = alpha_mu(x) Id, given as pairs-free data.
inline std::vector<AlgebraSection> central_hermitian_field(TwistPtr twist, const TorusGeometry &g,
                                                           std::mt19937_64 &rng, double amplitude) {
  std::vector<AlgebraSection> a;
  std::normal_distribution<double> gauss;
  for (int mu = 0; mu < g.dim; ++mu) {
    AlgebraSection x(twist, g);
    IVec4 n{0, 0, 0, 0};
    n[(mu + 1) % g.dim] = 1;
    cplx c = amplitude * cplx(gauss(rng), gauss(rng));
    x.add_mode(0, n, c);
    IVec4 mn = n;
    for (auto &v : mn) v = -v;
    x.add_mode(0, mn, std::conj(c));
    x.add_mode(0, {0, 0, 0, 0}, amplitude * gauss(rng));
    a.push_back(x);
  }
  return a;
}

} // namespace fluxtriple
