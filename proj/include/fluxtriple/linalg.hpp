#pragma once
// Numerical linear algebra used throughout: complex dense/sparse aliases,
// exact roots of unity, LAPACK-backed Hermitian eigenvalues with exact block
// decomposition, and a Lanczos tridiagonalizer for matrix-free operators.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluxtriple {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<cplx>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

//! Thrown for violated preconditions (bad dimensions, invalid input data).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

//! exp(2 pi i k / n) with the quarter-turn values returned exactly.
inline cplx root_of_unity(long k, long n) {
  long r = ((k % n) + n) % n;
  if (4 * r % n == 0) {
    switch (4 * r / n) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
    }
  }
  return std::polar(1.0, 2.0 * kPi * double(r) / double(n));
}

inline double max_abs(const CMat &m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double sparse_max_abs(const SpMat &m) {
  double r = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      r = std::max(r, std::abs(it.value()));
  return r;
}

//! Eigenvalues (ascending) of a dense Hermitian matrix, upper triangle used.
inline RVec hermitian_eigenvalues(CMat a) {
  const int n = int(a.rows());
  RVec w(n);
  if (n == 0) return w;
  int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'U', n,
                            reinterpret_cast<lapack_complex_double *>(a.data()),
                            n, w.data());
  if (info != 0)
    throw std::runtime_error("zheevd failed with info " + std::to_string(info));
  return w;
}

struct HermitianEigen {
  RVec values;
  CMat vectors;
};

inline HermitianEigen hermitian_eigensystem(CMat a) {
  const int n = int(a.rows());
  HermitianEigen out;
  out.values.resize(n);
  if (n > 0) {
    int info = LAPACKE_zheevd(
        LAPACK_COL_MAJOR, 'V', 'U', n,
        reinterpret_cast<lapack_complex_double *>(a.data()), n,
        out.values.data());
    if (info != 0)
      throw std::runtime_error("zheevd failed with info " +
                               std::to_string(info));
  }
  out.vectors = std::move(a);
  return out;
}

//! Connected components of the sparsity graph of a structurally symmetric
//! sparse matrix. Entries below `drop` in magnitude are ignored.
inline std::vector<std::vector<int>> sparse_components(const SpMat &m,
                                                       double drop = 0.0) {
  const int n = int(m.rows());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int r = 0; r < m.outerSize(); ++r)
    for (SpMat::InnerIterator it(m, r); it; ++it) {
      if (std::abs(it.value()) <= drop) continue;
      int a = find(int(it.row())), b = find(int(it.col()));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> comps;
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    if (label[root] < 0) {
      label[root] = int(comps.size());
      comps.emplace_back();
    }
    comps[label[root]].push_back(i);
  }
  return comps;
}

inline CMat dense_block(const SpMat &m, const std::vector<int> &idx) {
  const int n = int(idx.size());
  CMat b = CMat::Zero(n, n);
  std::vector<int> local(m.rows(), -1);
  for (int i = 0; i < n; ++i) local[idx[i]] = i;
  for (int i = 0; i < n; ++i)
    for (SpMat::InnerIterator it(m, idx[i]); it; ++it) {
      int j = local[it.col()];
      if (j >= 0) b(i, j) = it.value();
    }
  return b;
}

//! Spectrum of a Hermitian sparse matrix, computed exactly by dense solves
//! on each connected component of its sparsity graph.
struct BlockSpectrum {
  struct Block {
    std::vector<int> indices;
    RVec values;
  };
  std::vector<Block> blocks;

  RVec all() const {
    std::vector<double> v;
    for (const auto &b : blocks) v.insert(v.end(), b.values.data(),
                                          b.values.data() + b.values.size());
    std::sort(v.begin(), v.end());
    return Eigen::Map<RVec>(v.data(), Eigen::Index(v.size()));
  }
  int dimension() const {
    int n = 0;
    for (const auto &b : blocks) n += int(b.indices.size());
    return n;
  }
  std::size_t largest_block() const {
    std::size_t n = 0;
    for (const auto &b : blocks) n = std::max(n, b.indices.size());
    return n;
  }
};

inline BlockSpectrum block_spectrum(const SpMat &m) {
  BlockSpectrum out;
  for (auto &idx : sparse_components(m)) {
    BlockSpectrum::Block b;
    b.values = hermitian_eigenvalues(dense_block(m, idx));
    b.indices = std::move(idx);
    out.blocks.push_back(std::move(b));
  }
  return out;
}

//! Result of an m-step Lanczos tridiagonalization started from a unit vector.
struct Tridiagonal {
  RVec alpha;
  RVec beta; // size alpha.size() - 1
  bool breakdown = false;

  //! Ritz values and squared first components of the Ritz vectors (Gauss
  //! quadrature nodes and weights for the spectral measure of the start).
  std::pair<RVec, RVec> gauss_rule() const {
    const int m = int(alpha.size());
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) t(i, i) = alpha[i];
    for (int i = 0; i + 1 < m; ++i) t(i, i + 1) = t(i + 1, i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    RVec w = es.eigenvectors().row(0).transpose().cwiseAbs2();
    return {es.eigenvalues(), w};
  }
};

using ApplyFn = std::function<CVec(const CVec &)>;

//! Lanczos with full reorthogonalization. Stops early on breakdown (an
//! invariant subspace was found, so the quadrature rule is exact).
inline Tridiagonal lanczos(const ApplyFn &apply, const CVec &start, int depth,
                           double breakdown_tol = 1e-12) {
  Tridiagonal out;
  const double nrm = start.norm();
  if (nrm == 0.0) throw InvalidInput("lanczos: zero start vector");
  std::vector<CVec> basis;
  basis.push_back(start / nrm);
  std::vector<double> alpha, beta;
  for (int j = 0; j < depth; ++j) {
    CVec w = apply(basis[j]);
    double a = basis[j].dot(w).real();
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto &q : basis) w -= q * q.dot(w);
    double b = w.norm();
    if (j + 1 == depth) break;
    if (b < breakdown_tol * std::max(1.0, std::abs(a))) {
      out.breakdown = true;
      break;
    }
    beta.push_back(b);
    basis.push_back(w / b);
  }
  out.alpha = Eigen::Map<RVec>(alpha.data(), Eigen::Index(alpha.size()));
  out.beta = Eigen::Map<RVec>(beta.data(), Eigen::Index(beta.size()));
  return out;
}

//! Largest eigenvalue of a Hermitian positive semidefinite operator.
inline double lanczos_max_eigenvalue(const ApplyFn &apply, int dim, int depth,
                                     unsigned seed = 12345) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  CVec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = cplx(g(rng), g(rng));
  auto td = lanczos(apply, v, std::min(depth, dim));
  auto [nodes, w] = td.gauss_rule();
  return nodes.maxCoeff();
}

//! Operator norm of a dense or sparse map between coefficient spaces.
inline double operator_norm(const SpMat &m, int depth = 120) {
  if (m.nonZeros() == 0) return 0.0;
  if (m.cols() <= 400) {
    CMat d = CMat(m);
    Eigen::JacobiSVD<CMat> svd(d);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  }
  SpMat adj = m.adjoint();
  auto apply = [&](const CVec &v) -> CVec { return adj * (m * v); };
  return std::sqrt(std::max(0.0, lanczos_max_eigenvalue(apply, int(m.cols()), depth)));
}

inline double hermiticity_defect(const SpMat &m) {
  SpMat d = m - SpMat(m.adjoint());
  return sparse_max_abs(d);
}

} // namespace fluxtriple
