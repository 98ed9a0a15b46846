#pragma once
// Flat tori in a truncated plane-wave basis. Momenta are stored as integer
// numerators over a common denominator `den`, k_mu = 2 pi M_mu / (den L_mu),
// so that fractional offsets (spin structure, twist sectors) stay exact.

#include "fluxtriple/clifford.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>

namespace fluxtriple {

using IVec4 = std::array<int, 4>;

struct TorusGeometry {
  int dim = 2;
  std::array<double, 4> lengths{2 * kPi, 2 * kPi, 2 * kPi, 2 * kPi};

  double volume() const {
    double v = 1.0;
    for (int mu = 0; mu < dim; ++mu) v *= lengths[mu];
    return v;
  }
  void validate() const {
    if (dim != 2 && dim != 4)
      throw InvalidInput("torus dimension must be 2 or 4");
    for (int mu = 0; mu < dim; ++mu)
      if (!(lengths[mu] > 0.0)) throw InvalidInput("torus lengths must be positive");
  }
};

inline TorusGeometry square_torus(int d, double length = 2 * kPi) {
  TorusGeometry g;
  g.dim = d;
  g.lengths.fill(length);
  g.validate();
  return g;
}

//! Per-axis spin structure: 0 periodic, 1 antiperiodic (offset 1/2).
using SpinStructure = IVec4;

inline SpinStructure periodic_spin() { return {0, 0, 0, 0}; }
inline SpinStructure antiperiodic_spin(int d) {
  SpinStructure s{0, 0, 0, 0};
  for (int mu = 0; mu < d; ++mu) s[mu] = 1;
  return s;
}

// ---------------------------------------------------------------------------
// Packed state keys: sector (6 bits), spin (2 bits), four 12-bit momenta.

namespace keys {
inline constexpr int kOffset = 2048;
inline constexpr int kMaxSectors = 64;

inline std::uint64_t pack(int sector, const IVec4 &m, int spin) {
  std::uint64_t k = std::uint64_t(sector) << 50 | std::uint64_t(spin) << 48;
  for (int mu = 0; mu < 4; ++mu) {
    int v = m[mu] + kOffset;
    if (v < 0 || v >= 2 * kOffset) throw InvalidInput("momentum outside key range");
    k |= std::uint64_t(v) << (12 * mu);
  }
  return k;
}
inline int sector(std::uint64_t k) { return int(k >> 50); }
inline int spin(std::uint64_t k) { return int((k >> 48) & 3u); }
inline IVec4 momentum(std::uint64_t k) {
  IVec4 m;
  for (int mu = 0; mu < 4; ++mu) m[mu] = int((k >> (12 * mu)) & 0xfffu) - kOffset;
  return m;
}
inline std::uint64_t with_spin(std::uint64_t k, int s) {
  return (k & ~(std::uint64_t(3) << 48)) | std::uint64_t(s) << 48;
}
} // namespace keys

//! Truncated basis of plane waves W_a e^{ik.x} e_s. Each sector carries a
//! fractional offset; along every axis the allowed momenta m = M/den satisfy
//! m = integer + offset and |m| <= K + 1/2 (symmetric under k -> -k).
struct Lattice {
  TorusGeometry geom;
  int K = 1;
  int N = 1;
  int den = 2;
  int spinor_dim = 2;
  SpinStructure spin{};
  std::vector<IVec4> sector_offset; // numerators over den, in [0, den)
  std::vector<std::uint64_t> states;
  std::unordered_map<std::uint64_t, int> index;

  int dim() const { return int(states.size()); }
  int sectors() const { return int(sector_offset.size()); }
  int max_numerator() const { return N * (2 * K + 1); }

  int find(std::uint64_t key) const {
    auto it = index.find(key);
    return it == index.end() ? -1 : it->second;
  }
  double k(int mu, int m) const {
    return 2 * kPi * double(m) / (double(den) * geom.lengths[mu]);
  }
  std::array<double, 4> momentum(const IVec4 &m) const {
    std::array<double, 4> out{0, 0, 0, 0};
    for (int mu = 0; mu < geom.dim; ++mu) out[mu] = k(mu, m[mu]);
    return out;
  }
  bool in_cutoff(const IVec4 &m) const {
    for (int mu = 0; mu < geom.dim; ++mu)
      if (std::abs(m[mu]) > max_numerator()) return false;
    return true;
  }
  //! Distinct momenta of the spin-0 states, in canonical order.
  std::vector<std::array<double, 4>> modes() const {
    std::vector<std::array<double, 4>> out;
    for (auto key : states)
      if (keys::spin(key) == 0) out.push_back(momentum(keys::momentum(key)));
    return out;
  }
};

//! Enumerate states sector by sector, momenta lexicographically, spin last.
inline Lattice build_lattice(const TorusGeometry &geom, int K, int N,
                             const std::vector<IVec4> &sector_offset,
                             const SpinStructure &spin, int spinor_dim) {
  geom.validate();
  if (K < 1) throw InvalidInput("cutoff K must be at least 1");
  if (N < 1 || N * N > keys::kMaxSectors) throw InvalidInput("N must be in 1..8");
  Lattice L;
  L.geom = geom;
  L.K = K;
  L.N = N;
  L.den = 2 * N;
  L.spinor_dim = spinor_dim;
  L.spin = spin;
  L.sector_offset = sector_offset;
  if (2 * N * (2 * K + 1) + 1 >= keys::kOffset)
    throw InvalidInput("cutoff too large for the key encoding");
  const int mmax = L.max_numerator();
  for (int a = 0; a < int(sector_offset.size()); ++a) {
    std::array<std::vector<int>, 4> axis;
    for (int mu = 0; mu < 4; ++mu) {
      if (mu >= geom.dim) {
        axis[mu] = {0};
        continue;
      }
      int r = (sector_offset[a][mu] + N * spin[mu]) % L.den;
      for (int m = -mmax; m <= mmax; ++m)
        if (((m - r) % L.den + L.den) % L.den == 0) axis[mu].push_back(m);
    }
    for (int m0 : axis[0])
      for (int m1 : axis[1])
        for (int m2 : axis[2])
          for (int m3 : axis[3])
            for (int s = 0; s < spinor_dim; ++s) {
              auto key = keys::pack(a, {m0, m1, m2, m3}, s);
              L.index.emplace(key, int(L.states.size()));
              L.states.push_back(key);
            }
  }
  return L;
}

//! Lattice of scalar/spinor fields alone (one trivial sector).
using ModeLattice = Lattice;

inline ModeLattice build_mode_lattice(const TorusGeometry &geom, int K,
                                      const SpinStructure &spin) {
  return build_lattice(geom, K, 1, {IVec4{0, 0, 0, 0}}, spin,
                       1 << (geom.dim / 2));
}

// ---------------------------------------------------------------------------
// Operators

enum class Backend { Dense, MatrixFree };

struct OperatorHandle {
  int dim = 0;
  ApplyFn apply;
  bool hermitian = false;
  Backend backend = Backend::MatrixFree;
  std::shared_ptr<const SpMat> matrix;

  static OperatorHandle from_sparse(SpMat m, bool hermitian) {
    OperatorHandle h;
    h.dim = int(m.rows());
    auto ptr = std::make_shared<const SpMat>(std::move(m));
    h.matrix = ptr;
    h.apply = [ptr](const CVec &v) -> CVec { return (*ptr) * v; };
    h.hermitian = hermitian;
    h.backend = Backend::Dense;
    return h;
  }

  CMat dense() const {
    if (matrix) return CMat(*matrix);
    CMat out(dim, dim);
    for (int j = 0; j < dim; ++j) out.col(j) = apply(CVec::Unit(dim, j));
    return out;
  }

  const SpMat &sparse() const {
    if (!matrix) throw InvalidInput("operator has no materialized matrix");
    return *matrix;
  }

  //! max over probes of |<Av,w> - <v,Aw>| / (|A| |v| |w|).
  double hermiticity_residual(int probes, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    auto rnd = [&] {
      CVec v(dim);
      for (int i = 0; i < dim; ++i) v[i] = cplx(g(rng), g(rng));
      return v;
    };
    double r = 0.0;
    for (int p = 0; p < probes; ++p) {
      CVec v = rnd(), w = rnd();
      CVec av = apply(v), aw = apply(w);
      double scale = std::max(1e-300, std::max(av.norm() * w.norm(), aw.norm() * v.norm()));
      r = std::max(r, std::abs(av.dot(w) - v.dot(aw)) / scale);
    }
    return r;
  }

  double materialization_residual(int probes, std::uint64_t seed) const {
    CMat d = dense();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    double r = 0.0;
    for (int p = 0; p < probes; ++p) {
      CVec v(dim);
      for (int i = 0; i < dim; ++i) v[i] = cplx(g(rng), g(rng));
      CVec a = apply(v), b = d * v;
      r = std::max(r, (a - b).norm() / std::max(1e-300, a.norm()));
    }
    return r;
  }
};

//! Antilinear operator v -> M conj(v).
struct AntilinearOperator {
  SpMat m;
  CVec apply(const CVec &v) const { return m * v.conjugate(); }
  //! Matrix of the (linear) square: J^2 v = M conj(M) v.
  SpMat square() const { return m * SpMat(m.conjugate()); }
  //! Residual of J A = sign A J for a linear A: ||M conj(A) - sign A M||.
  double intertwining_residual(const SpMat &a, int sign) const {
    SpMat d = m * SpMat(a.conjugate()) - double(sign) * (a * m);
    return sparse_max_abs(d);
  }
};

//! Free Dirac operator gamma^mu k_mu, block diagonal in the modes.
inline OperatorHandle build_free_dirac(const ModeLattice &lat,
                                       const CliffordModule &cm) {
  if (lat.geom.dim != cm.dim || lat.spinor_dim != cm.spinor_dim)
    throw InvalidInput("build_free_dirac: lattice and Clifford dimensions differ");
  std::vector<Triplet> trip;
  for (int j = 0; j < lat.dim(); ++j) {
    auto key = lat.states[j];
    int s = keys::spin(key);
    auto k = lat.momentum(keys::momentum(key));
    for (int sp = 0; sp < cm.spinor_dim; ++sp) {
      cplx v = 0.0;
      for (int mu = 0; mu < cm.dim; ++mu) v += cm.gammas[mu](sp, s) * k[mu];
      if (v != 0.0) trip.emplace_back(lat.find(keys::with_spin(key, sp)), j, v);
    }
  }
  SpMat m(lat.dim(), lat.dim());
  m.setFromTriplets(trip.begin(), trip.end());
  return OperatorHandle::from_sparse(std::move(m), true);
}

//! Sector of W_a^dagger (up to phase): a -> -a componentwise mod N.
inline int negate_sector(int a, int N) {
  int a1 = a % N, a2 = a / N;
  return (N - a1) % N + N * ((N - a2) % N);
}

inline bool lattice_reflection_symmetric(const Lattice &lat) {
  for (auto key : lat.states) {
    IVec4 m = keys::momentum(key);
    for (auto &x : m) x = -x;
    auto partner = keys::pack(negate_sector(keys::sector(key), lat.N), m, keys::spin(key));
    if (lat.find(partner) < 0) return false;
  }
  return true;
}

//! (J_M psi)(k) = C conj(psi(-k)).
inline AntilinearOperator build_charge_conjugation(const ModeLattice &lat,
                                                   const CliffordModule &cm) {
  if (lat.sectors() != 1)
    throw InvalidInput("build_charge_conjugation expects a scalar mode lattice");
  if (!lattice_reflection_symmetric(lat))
    throw InvalidInput("mode lattice is not symmetric under k -> -k");
  std::vector<Triplet> trip;
  for (int j = 0; j < lat.dim(); ++j) {
    auto key = lat.states[j];
    IVec4 m = keys::momentum(key);
    for (auto &x : m) x = -x;
    int s = keys::spin(key);
    for (int sp = 0; sp < cm.spinor_dim; ++sp) {
      cplx c = cm.conj_matrix(sp, s);
      if (c != 0.0) trip.emplace_back(lat.find(keys::pack(0, m, sp)), j, c);
    }
  }
  AntilinearOperator J;
  J.m.resize(lat.dim(), lat.dim());
  J.m.setFromTriplets(trip.begin(), trip.end());
  return J;
}

//! Periodic scalar trigonometric polynomial sum c_n e^{i 2 pi n.x / L}.
struct TrigPoly {
  struct Term {
    IVec4 n{0, 0, 0, 0};
    cplx c{0, 0};
  };
  std::vector<Term> terms;

  int degree() const {
    int p = 0;
    for (const auto &t : terms)
      for (int v : t.n) p = std::max(p, std::abs(v));
    return p;
  }
  cplx operator()(const TorusGeometry &g, const std::array<double, 4> &x) const {
    cplx s = 0.0;
    for (const auto &t : terms) {
      double ph = 0.0;
      for (int mu = 0; mu < g.dim; ++mu) ph += 2 * kPi * t.n[mu] * x[mu] / g.lengths[mu];
      s += t.c * std::polar(1.0, ph);
    }
    return s;
  }
};

inline TrigPoly cos_poly(int mu) {
  TrigPoly f;
  IVec4 a{0, 0, 0, 0}, b{0, 0, 0, 0};
  a[mu] = 1;
  b[mu] = -1;
  f.terms = {{a, 0.5}, {b, 0.5}};
  return f;
}

enum class SupportPolicy { Reject, EnlargeThenProject };

//! Compression P_K M_f P_K of pointwise multiplication by f.
inline OperatorHandle build_multiplication_operator(
    const TrigPoly &f, const ModeLattice &lat,
    SupportPolicy policy = SupportPolicy::Reject) {
  if (policy == SupportPolicy::Reject && f.degree() > lat.K)
    throw InvalidInput("multiplication operator: coefficient support exceeds the lattice span");
  bool herm = true;
  for (const auto &t : f.terms) {
    IVec4 nn = t.n;
    for (auto &x : nn) x = -x;
    cplx partner = 0.0;
    for (const auto &u : f.terms)
      if (u.n == nn) partner += u.c;
    if (std::abs(partner - std::conj(t.c)) > 1e-14) herm = false;
  }
  std::vector<Triplet> trip;
  for (int j = 0; j < lat.dim(); ++j) {
    auto key = lat.states[j];
    IVec4 m = keys::momentum(key);
    for (const auto &t : f.terms) {
      IVec4 out = m;
      for (int mu = 0; mu < lat.geom.dim; ++mu) out[mu] += lat.den * t.n[mu];
      if (!lat.in_cutoff(out)) continue;
      int i = lat.find(keys::pack(keys::sector(key), out, keys::spin(key)));
      if (i >= 0) trip.emplace_back(i, j, t.c);
    }
  }
  SpMat m(lat.dim(), lat.dim());
  m.setFromTriplets(trip.begin(), trip.end());
  return OperatorHandle::from_sparse(std::move(m), herm);
}

//! Coefficient vector on a lattice viewed as a section of B (x) S.
struct SpinorField {
  const Lattice *lattice = nullptr;
  CVec coeffs;

  //! Pointwise value; for scalar lattices this is the spinor psi(x).
  CVec operator()(const std::array<double, 4> &x) const {
    CVec out = CVec::Zero(lattice->spinor_dim);
    for (int i = 0; i < lattice->dim(); ++i) {
      auto key = lattice->states[i];
      auto k = lattice->momentum(keys::momentum(key));
      double ph = 0.0;
      for (int mu = 0; mu < lattice->geom.dim; ++mu) ph += k[mu] * x[mu];
      out[keys::spin(key)] += coeffs[i] * std::polar(1.0, ph);
    }
    return out;
  }
  //! Coefficient inner product; equals (1/Vol) int <psi, phi> dx.
  cplx inner(const SpinorField &o) const { return coeffs.dot(o.coeffs); }
};

//! Uniform grid with n points per axis over the torus.
inline std::vector<std::array<double, 4>> torus_grid(const TorusGeometry &g, int n) {
  std::vector<std::array<double, 4>> pts;
  IVec4 cnt{1, 1, 1, 1};
  for (int mu = 0; mu < g.dim; ++mu) cnt[mu] = n;
  for (int i0 = 0; i0 < cnt[0]; ++i0)
    for (int i1 = 0; i1 < cnt[1]; ++i1)
      for (int i2 = 0; i2 < cnt[2]; ++i2)
        for (int i3 = 0; i3 < cnt[3]; ++i3) {
          IVec4 ii{i0, i1, i2, i3};
          std::array<double, 4> x{0, 0, 0, 0};
          for (int mu = 0; mu < g.dim; ++mu) x[mu] = g.lengths[mu] * ii[mu] / n;
          pts.push_back(x);
        }
  return pts;
}

} // namespace fluxtriple
