#pragma once
// 't Hooft twisted M_N(C) algebra bundles over tori. Sections are expanded in
// the clock-shift basis W_a = P^{a1} Q^{a2} (a = a1 + N a2), orthonormal for
// the normalized trace tau = tr/N, times plane waves whose fractional
// momenta are fixed by twisted periodicity.

#include "fluxtriple/torus.hpp"

#include <map>

namespace fluxtriple {

struct TwistData {
  int N = 1;
  int dim = 2;
  int n12 = 0; // flux in the (1,2) plane, reduced mod N
  std::vector<std::vector<int>> flux;
  std::vector<CMat> twist_matrices; // Omega_mu
  std::vector<cplx> roots;          // omega^k, k = 0..N-1

  int sectors() const { return N * N; }
  cplx root(long k) const { return roots[((k % N) + N) % N]; }
  int first(int a) const { return a % N; }
  int second(int a) const { return a / N; }
  int compose(int a, int b) const {
    return (first(a) + first(b)) % N + N * ((second(a) + second(b)) % N);
  }
  int negate(int a) const { return negate_sector(a, N); }
  //! W_a W_b = product_phase(a, b) W_{a+b}.
  cplx product_phase(int a, int b) const { return root(-long(second(a)) * first(b)); }
  //! W_a^dagger = adjoint_phase(a) W_{-a}.
  cplx adjoint_phase(int a) const { return root(-long(first(a)) * second(a)); }

  //! Momentum offset of sector a as numerators over den = 2N.
  IVec4 offset(int a) const {
    IVec4 o{0, 0, 0, 0};
    if (n12 == 0) return o;
    const int den = 2 * N;
    o[0] = (2 * ((long(n12) * second(a)) % N)) % den;
    o[1] = (2 * ((N - first(a)) % N)) % den;
    return o;
  }
  std::vector<IVec4> offsets() const {
    std::vector<IVec4> v;
    for (int a = 0; a < sectors(); ++a) v.push_back(offset(a));
    return v;
  }

  CMat clock() const {
    CMat p = CMat::Zero(N, N);
    for (int j = 0; j < N; ++j) p(j, j) = root(j);
    return p;
  }
  CMat shift() const {
    CMat q = CMat::Zero(N, N);
    for (int j = 0; j < N; ++j) q((j + 1) % N, j) = 1.0;
    return q;
  }
  CMat basis_matrix(int a) const {
    CMat p = clock(), q = shift(), w = CMat::Identity(N, N);
    for (int i = 0; i < first(a); ++i) w = w * p;
    for (int i = 0; i < second(a); ++i) w = w * q;
    return w;
  }
  int sector_of(int a1, int a2) const {
    return ((a1 % N) + N) % N + N * (((a2 % N) + N) % N);
  }

  bool compatible(const TwistData &o) const {
    return N == o.N && dim == o.dim && n12 == o.n12;
  }
};

//! Clock-shift realization: Omega_1 = P^n, Omega_2 = Q for n = n12 != 0 mod N,
//! identity otherwise; remaining directions untwisted.
inline TwistData build_twist(int N, const std::vector<std::vector<int>> &flux) {
  if (N < 1 || N > 8) throw InvalidInput("build_twist: N must be in 1..8");
  const int d = int(flux.size());
  if (d != 2 && d != 4) throw InvalidInput("build_twist: flux must be a 2x2 or 4x4 matrix");
  for (const auto &row : flux)
    if (int(row.size()) != d) throw InvalidInput("build_twist: flux must be square");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (flux[i][j] != -flux[j][i]) throw InvalidInput("build_twist: flux must be antisymmetric");
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (!(i == 0 && j == 1) && ((flux[i][j] % N) + N) % N != 0)
        throw InvalidInput("build_twist: only the (1,2) plane may carry flux");
  TwistData t;
  t.N = N;
  t.dim = d;
  t.flux = flux;
  t.n12 = ((flux[0][1] % N) + N) % N;
  for (long k = 0; k < N; ++k) t.roots.push_back(root_of_unity(k, N));
  const CMat id = CMat::Identity(N, N);
  t.twist_matrices.assign(d, id);
  if (t.n12 != 0) {
    CMat p = t.clock();
    CMat pn = id;
    for (int i = 0; i < t.n12; ++i) pn = pn * p;
    t.twist_matrices[0] = pn;
    t.twist_matrices[1] = t.shift();
  }
  return t;
}

inline TwistData build_twist_2d(int N, int n12, int d = 2) {
  std::vector<std::vector<int>> f(d, std::vector<int>(d, 0));
  f[0][1] = n12;
  f[1][0] = -n12;
  return build_twist(N, f);
}

using TwistPtr = std::shared_ptr<const TwistData>;

inline TwistPtr make_twist(int N, int n12, int d = 2) {
  return std::make_shared<const TwistData>(build_twist_2d(N, n12, d));
}

// ---------------------------------------------------------------------------
// Sections

struct AlgebraSection {
  TwistPtr twist;
  TorusGeometry geom;
  std::map<std::uint64_t, cplx> terms; // key = pack(sector, M, 0)

  AlgebraSection() = default;
  AlgebraSection(TwistPtr t, TorusGeometry g) : twist(std::move(t)), geom(g) {}

  int den() const { return 2 * twist->N; }

  void add(int sector, const IVec4 &m, cplx c) {
    if (sector < 0 || sector >= twist->sectors())
      throw InvalidInput("section term: sector out of range");
    IVec4 off = twist->offset(sector);
    for (int mu = 0; mu < 4; ++mu) {
      if (mu >= geom.dim && m[mu] != 0)
        throw InvalidInput("section term: momentum beyond the torus dimension");
      if (mu < geom.dim && ((m[mu] - off[mu]) % den() + den()) % den() != 0)
        throw InvalidInput("section term: momentum incompatible with the sector offset");
    }
    terms[keys::pack(sector, m, 0)] += c;
  }
  //! Integer mode vector n added to the sector offset: M = den*(n + phi_a).
  void add_mode(int sector, const IVec4 &n, cplx c) {
    IVec4 off = twist->offset(sector), m{0, 0, 0, 0};
    for (int mu = 0; mu < geom.dim; ++mu) m[mu] = den() * n[mu] + off[mu];
    add(sector, m, c);
  }

  cplx coefficient(int sector, const IVec4 &m) const {
    auto it = terms.find(keys::pack(sector, m, 0));
    return it == terms.end() ? cplx(0) : it->second;
  }

  double k(int mu, int m) const {
    return 2 * kPi * double(m) / (double(den()) * geom.lengths[mu]);
  }

  CMat operator()(const std::array<double, 4> &x) const {
    const int N = twist->N;
    CMat s = CMat::Zero(N, N);
    std::vector<CMat> basis;
    for (int a = 0; a < twist->sectors(); ++a) basis.push_back(twist->basis_matrix(a));
    for (const auto &[key, c] : terms) {
      IVec4 m = keys::momentum(key);
      double ph = 0.0;
      for (int mu = 0; mu < geom.dim; ++mu) ph += k(mu, m[mu]) * x[mu];
      s += c * std::polar(1.0, ph) * basis[keys::sector(key)];
    }
    return s;
  }

  //! Largest |n_mu| over terms, in integer mode units (rounded up).
  int support() const {
    int p = 0;
    for (const auto &[key, c] : terms) {
      IVec4 m = keys::momentum(key);
      for (int mu = 0; mu < geom.dim; ++mu)
        p = std::max(p, (std::abs(m[mu]) + den() - 1) / den());
    }
    return p;
  }

  double max_coeff() const {
    double r = 0.0;
    for (const auto &[key, c] : terms) r = std::max(r, std::abs(c));
    return r;
  }

  AlgebraSection &operator+=(const AlgebraSection &o) {
    for (const auto &[key, c] : o.terms) terms[key] += c;
    return *this;
  }
  AlgebraSection &operator-=(const AlgebraSection &o) {
    for (const auto &[key, c] : o.terms) terms[key] -= c;
    return *this;
  }
  AlgebraSection &operator*=(cplx z) {
    for (auto &kv : terms) kv.second *= z;
    return *this;
  }
  friend AlgebraSection operator+(AlgebraSection a, const AlgebraSection &b) { return a += b; }
  friend AlgebraSection operator-(AlgebraSection a, const AlgebraSection &b) { return a -= b; }
  friend AlgebraSection operator*(cplx z, AlgebraSection a) { return a *= z; }

  //! Partial derivative d/dx_mu.
  AlgebraSection derivative(int mu) const {
    AlgebraSection out(twist, geom);
    for (const auto &[key, c] : terms) {
      double kk = k(mu, keys::momentum(key)[mu]);
      if (kk != 0.0) out.terms[key] = kI * kk * c;
    }
    return out;
  }

  //! Drop coefficients below tol.
  AlgebraSection &prune(double tol = 0.0) {
    for (auto it = terms.begin(); it != terms.end();)
      it = std::abs(it->second) <= tol ? terms.erase(it) : std::next(it);
    return *this;
  }

  //! Restriction to modes with |m_mu| <= K + 1/2.
  AlgebraSection projected(int K) const {
    AlgebraSection out(twist, geom);
    const int mmax = twist->N * (2 * K + 1);
    for (const auto &[key, c] : terms) {
      IVec4 m = keys::momentum(key);
      bool keep = true;
      for (int mu = 0; mu < geom.dim; ++mu) keep = keep && std::abs(m[mu]) <= mmax;
      if (keep) out.terms[key] = c;
    }
    return out;
  }

  //! Removes the identity-sector component (pointwise trace part).
  AlgebraSection traceless() const {
    AlgebraSection out(twist, geom);
    for (const auto &[key, c] : terms)
      if (keys::sector(key) != 0) out.terms[key] = c;
    return out;
  }
  AlgebraSection trace_part() const {
    AlgebraSection out(twist, geom);
    for (const auto &[key, c] : terms)
      if (keys::sector(key) == 0) out.terms[key] = c;
    return out;
  }
};

inline void require_compatible(const AlgebraSection &s, const AlgebraSection &t) {
  if (!s.twist || !t.twist || !s.twist->compatible(*t.twist))
    throw InvalidInput("sections belong to incompatible twists");
  if (s.geom.dim != t.geom.dim) throw InvalidInput("sections live on different tori");
}

inline AlgebraSection identity_section(TwistPtr twist, const TorusGeometry &g) {
  AlgebraSection s(std::move(twist), g);
  s.add(0, {0, 0, 0, 0}, 1.0);
  return s;
}

//! Coefficient-level product: sector convolution with clock-shift phases.
inline AlgebraSection fiber_product(const AlgebraSection &s, const AlgebraSection &t) {
  require_compatible(s, t);
  const TwistData &tw = *s.twist;
  AlgebraSection out(s.twist, s.geom);
  for (const auto &[ka, ca] : s.terms) {
    int a = keys::sector(ka);
    IVec4 ma = keys::momentum(ka);
    for (const auto &[kb, cb] : t.terms) {
      int b = keys::sector(kb);
      IVec4 mb = keys::momentum(kb), m;
      for (int mu = 0; mu < 4; ++mu) m[mu] = ma[mu] + mb[mu];
      out.terms[keys::pack(tw.compose(a, b), m, 0)] += ca * cb * tw.product_phase(a, b);
    }
  }
  return out;
}

//! (s*)(x) = s(x)^dagger.
inline AlgebraSection fiber_involution(const AlgebraSection &s) {
  const TwistData &tw = *s.twist;
  AlgebraSection out(s.twist, s.geom);
  for (const auto &[key, c] : s.terms) {
    int a = keys::sector(key);
    IVec4 m = keys::momentum(key);
    for (auto &x : m) x = -x;
    out.terms[keys::pack(tw.negate(a), m, 0)] += std::conj(c) * tw.adjoint_phase(a);
  }
  return out;
}

inline AlgebraSection commutator(const AlgebraSection &a, const AlgebraSection &b) {
  return fiber_product(a, b) - fiber_product(b, a);
}

//! C(M)-valued pairing (s,t)_B = tau(s^dagger t); only the identity sector
//! survives the normalized trace.
inline AlgebraSection hs_pairing(const AlgebraSection &s, const AlgebraSection &t) {
  return fiber_product(fiber_involution(s), t).trace_part();
}

//! Scalar value of an identity-sector section at x.
inline cplx scalar_value(const AlgebraSection &s, const std::array<double, 4> &x) {
  return s(x)(0, 0);
}

//! Integral (1/Vol) int tau(s(x)) dx: the constant identity-sector coefficient.
inline cplx mean_trace(const AlgebraSection &s) {
  return s.coefficient(0, {0, 0, 0, 0});
}

//! Sector basis truncated at |n_mu| <= K: N^2 (2K+1)^d sections W_a e^{ik.x}.
struct SectionBasis {
  std::vector<AlgebraSection> elements;
  std::vector<IVec4> offsets; // per sector, numerators over 2N
  int den = 2;
};

inline SectionBasis section_basis(TwistPtr twist, const TorusGeometry &g, int K) {
  if (K < 1) throw InvalidInput("section_basis: K must be at least 1");
  SectionBasis b;
  b.den = 2 * twist->N;
  b.offsets = twist->offsets();
  const int d = g.dim;
  IVec4 hi{0, 0, 0, 0};
  for (int mu = 0; mu < d; ++mu) hi[mu] = K;
  for (int a = 0; a < twist->sectors(); ++a)
    for (int n0 = -hi[0]; n0 <= hi[0]; ++n0)
      for (int n1 = -hi[1]; n1 <= hi[1]; ++n1)
        for (int n2 = -hi[2]; n2 <= hi[2]; ++n2)
          for (int n3 = -hi[3]; n3 <= hi[3]; ++n3) {
            AlgebraSection s(twist, g);
            s.add_mode(a, {n0, n1, n2, n3}, 1.0);
            b.elements.push_back(std::move(s));
          }
  return b;
}

//! Matrix X times e^{i n.x} on an untwisted bundle, written in the sector basis
//! (c_a = tau(W_a^dagger X)). For twisted bundles only sectors whose offset
//! vanishes may carry weight.
inline AlgebraSection matrix_section(TwistPtr twist, const TorusGeometry &g,
                                     const CMat &x, const IVec4 &n = {0, 0, 0, 0}) {
  const int N = twist->N;
  if (x.rows() != N || x.cols() != N) throw InvalidInput("matrix_section: wrong matrix size");
  AlgebraSection s(twist, g);
  for (int a = 0; a < twist->sectors(); ++a) {
    cplx c = (twist->basis_matrix(a).adjoint() * x).trace() / double(N);
    if (std::abs(c) < 1e-15) continue;
    IVec4 off = twist->offset(a);
    for (int mu = 0; mu < g.dim; ++mu)
      if (off[mu] != 0) throw InvalidInput("matrix_section: sector has a fractional offset");
    s.add_mode(a, n, c);
  }
  return s;
}

//! Random section with `count` terms, modes |n_mu| <= p, Gaussian coefficients.
inline AlgebraSection random_section(TwistPtr twist, const TorusGeometry &g,
                                     std::mt19937_64 &rng, int count, int p,
                                     double amplitude = 1.0, bool include_identity = true) {
  AlgebraSection s(twist, g);
  std::uniform_int_distribution<int> sec(include_identity ? 0 : 1, twist->sectors() - 1);
  std::uniform_int_distribution<int> mode(-p, p);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < count; ++i) {
    IVec4 n{0, 0, 0, 0};
    for (int mu = 0; mu < g.dim; ++mu) n[mu] = mode(rng);
    int a = sec(rng);
    // keep |m| <= p + 1/2 so supports are predictable
    IVec4 off = twist->offset(a);
    for (int mu = 0; mu < g.dim; ++mu)
      if (off[mu] > twist->N && n[mu] == p) n[mu] = p - 1;
    s.add_mode(a, n, amplitude * cplx(gauss(rng), gauss(rng)) / std::sqrt(2.0));
  }
  return s;
}

//! Random anti-Hermitian traceless (su(N)-valued) section.
inline AlgebraSection random_su_section(TwistPtr twist, const TorusGeometry &g,
                                        std::mt19937_64 &rng, int count, int p,
                                        double amplitude) {
  if (twist->N == 1) return AlgebraSection(twist, g);
  AlgebraSection x = random_section(twist, g, rng, count, p, amplitude, false);
  AlgebraSection w = 0.5 * (x - fiber_involution(x));
  return w.traceless().prune();
}

inline AlgebraSection random_hermitian_section(TwistPtr twist, const TorusGeometry &g,
                                               std::mt19937_64 &rng, int count, int p,
                                               double amplitude, bool include_identity = true) {
  AlgebraSection x = random_section(twist, g, rng, count, p, amplitude, include_identity);
  return (0.5 * (x + fiber_involution(x))).prune();
}

//! Deviation of s from anti-Hermitian tracelessness at coefficient level.
inline double su_defect(const AlgebraSection &s) {
  return std::max((s + fiber_involution(s)).max_coeff(), s.trace_part().max_coeff());
}

// ---------------------------------------------------------------------------
// Connections

struct BundleConnection {
  TwistPtr twist;
  TorusGeometry geom;
  std::vector<AlgebraSection> omega; // anti-Hermitian traceless, one per direction

  //! nabla_mu s = d_mu s + [omega_mu, s].
  AlgebraSection covariant(int mu, const AlgebraSection &s) const {
    return s.derivative(mu) + commutator(omega[mu], s);
  }
  int support() const {
    int p = 0;
    for (const auto &w : omega) p = std::max(p, w.support());
    return p;
  }
};

struct ConnectionResiduals {
  double leibniz = 0;
  double star = 0;
  double hermitian = 0; // d(s,t) - (nabla s, t) - (s, nabla t)
  double unit = 0;
  double max() const { return std::max({leibniz, star, hermitian, unit}); }
};

inline BundleConnection zero_connection(TwistPtr twist, const TorusGeometry &g) {
  BundleConnection c{twist, g, {}};
  c.omega.assign(g.dim, AlgebraSection(twist, g));
  return c;
}

//! Validates su(N)-valuedness at coefficient level and on sample points.
inline BundleConnection build_connection(TwistPtr twist, const TorusGeometry &g,
                                         std::vector<AlgebraSection> omega,
                                         double tol = 1e-10) {
  if (int(omega.size()) != g.dim)
    throw InvalidInput("build_connection: need one component per direction");
  for (const auto &w : omega) {
    if (!w.twist || !w.twist->compatible(*twist))
      throw InvalidInput("build_connection: component has an incompatible twist");
    if (su_defect(w) > tol)
      throw InvalidInput("build_connection: component is not traceless anti-Hermitian");
    for (const auto &x : torus_grid(g, g.dim == 2 ? 5 : 3)) {
      CMat v = w(x);
      if (max_abs(v + v.adjoint()) > tol || std::abs(v.trace()) > tol)
        throw InvalidInput("build_connection: sampled value is not in su(N)");
    }
  }
  return BundleConnection{std::move(twist), g, std::move(omega)};
}

inline BundleConnection random_connection(TwistPtr twist, const TorusGeometry &g,
                                          std::mt19937_64 &rng, int count = 4,
                                          int p = 1, double amplitude = 0.3) {
  std::vector<AlgebraSection> w;
  for (int mu = 0; mu < g.dim; ++mu)
    w.push_back(random_su_section(twist, g, rng, count, p, amplitude));
  return build_connection(twist, g, std::move(w));
}

//! Coefficient-level residuals of the *-algebra connection identities.
inline ConnectionResiduals connection_residuals(const BundleConnection &c,
                                                const AlgebraSection &s,
                                                const AlgebraSection &t) {
  ConnectionResiduals r;
  AlgebraSection one = identity_section(c.twist, c.geom);
  for (int mu = 0; mu < c.geom.dim; ++mu) {
    AlgebraSection lhs = c.covariant(mu, fiber_product(s, t));
    AlgebraSection rhs = fiber_product(s, c.covariant(mu, t)) + fiber_product(c.covariant(mu, s), t);
    r.leibniz = std::max(r.leibniz, (lhs - rhs).max_coeff());
    AlgebraSection st = fiber_involution(c.covariant(mu, s)) - c.covariant(mu, fiber_involution(s));
    r.star = std::max(r.star, st.max_coeff());
    AlgebraSection h = hs_pairing(s, t).derivative(mu) -
                       hs_pairing(c.covariant(mu, s), t) - hs_pairing(s, c.covariant(mu, t));
    r.hermitian = std::max(r.hermitian, h.max_coeff());
    r.unit = std::max(r.unit, c.covariant(mu, one).max_coeff());
  }
  return r;
}

} // namespace fluxtriple
