#pragma once
// Test-side reference computations. Deliberately written against the raw
// definitions (explicit matrices, plain loops) rather than the library's
// coefficient machinery.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
inline constexpr double pi = std::numbers::pi;

inline Mat clock(int N) {
  Mat p = Mat::Zero(N, N);
  for (int j = 0; j < N; ++j) p(j, j) = std::polar(1.0, 2 * pi * j / N);
  return p;
}
inline Mat shift(int N) {
  Mat q = Mat::Zero(N, N);
  for (int j = 0; j < N; ++j) q((j + 1) % N, j) = 1.0;
  return q;
}
inline Mat mpow(const Mat &m, int k) {
  Mat r = Mat::Identity(m.rows(), m.cols());
  for (int i = 0; i < k; ++i) r = r * m;
  return r;
}
//! P^{a1} Q^{a2}, a = a1 + N a2.
inline Mat sector_matrix(int N, int a) { return mpow(clock(N), a % N) * mpow(shift(N), a / N); }

struct Term {
  int sector;
  std::array<int, 4> M; // numerators over 2N
  cplx c;
};

//! Pointwise value sum_a c W_a e^{i k.x}, k_mu = 2 pi M_mu / (2N L_mu).
inline Mat evaluate(int N, const std::vector<Term> &terms, const std::array<double, 4> &L,
                    int d, const std::array<double, 4> &x) {
  Mat s = Mat::Zero(N, N);
  for (const auto &t : terms) {
    double ph = 0.0;
    for (int mu = 0; mu < d; ++mu) ph += 2 * pi * t.M[mu] / (2.0 * N * L[mu]) * x[mu];
    s += t.c * std::polar(1.0, ph) * sector_matrix(N, t.sector);
  }
  return s;
}

//! Fractional momentum offset of W_a under Omega W_a Omega^dagger = e^{2 pi i phi} W_a,
//! returned in [0, 1).
inline double twist_offset(const Mat &omega, const Mat &w) {
  Mat c = omega * w * omega.adjoint();
  cplx z = (w.adjoint() * c).trace() / double(w.rows());
  double phi = std::arg(z) / (2 * pi);
  phi -= std::floor(phi);
  if (phi > 1 - 1e-12) phi = 0.0;
  return phi;
}

//! ad(w) on vec(X) in the elementary-matrix basis E_pq, index p + N q.
inline Mat ad_matrix(const Mat &w) {
  const int N = int(w.rows());
  Mat out = Mat::Zero(N * N, N * N);
  for (int p = 0; p < N; ++p)
    for (int q = 0; q < N; ++q) {
      Mat e = Mat::Zero(N, N);
      e(p, q) = 1.0;
      Mat c = w * e - e * w;
      for (int r = 0; r < N; ++r)
        for (int s = 0; s < N; ++s) out(r + N * s, p + N * q) = c(r, s);
    }
  return out;
}

inline Mat kron(const Mat &a, const Mat &b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

//! Sorted spectrum of -i gamma^mu (d_mu + ad w_mu), w constant, on the
//! untwisted bundle of N x N matrices: one block per plane wave |n_mu| <= K
//! (periodic) or |n_mu + 1/2| <= K + 1/2 (antiperiodic).
inline RVec constant_connection_spectrum(const std::vector<Mat> &gammas, const std::vector<Mat> &w,
                                         int N, int K, double L, bool antiperiodic) {
  const int d = int(gammas.size()), S = int(gammas[0].rows());
  std::vector<double> axis;
  for (int n = -K - 1; n <= K; ++n) {
    double m = n + (antiperiodic ? 0.5 : 0.0);
    if (std::abs(m) <= K + 0.5 + 1e-12) axis.push_back(m);
  }
  std::vector<Mat> ad;
  for (const auto &x : w) ad.push_back(ad_matrix(x));
  const Mat id = Mat::Identity(N * N, N * N);
  std::vector<double> ev;
  std::vector<int> idx(d, 0);
  const int na = int(axis.size());
  long total = 1;
  for (int i = 0; i < d; ++i) total *= na;
  for (long t = 0; t < total; ++t) {
    long r = t;
    Mat blk = Mat::Zero(S * N * N, S * N * N);
    for (int mu = 0; mu < d; ++mu) {
      double k = 2 * pi * axis[r % na] / L;
      r /= na;
      blk += kron(gammas[mu], k * id - cplx(0, 1) * ad[mu]);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (blk + blk.adjoint()));
    for (int i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()[i]);
  }
  std::sort(ev.begin(), ev.end());
  return Eigen::Map<RVec>(ev.data(), Eigen::Index(ev.size()));
}

//! Sorted |k|^2 multiset of the free twisted lattice times spinor multiplicity:
//! sector a carries momenta (n + phi_a) 2 pi / L, |n + phi| <= K + 1/2.
inline RVec free_twisted_squared(int N, const std::vector<Mat> &omegas, int d, int K, double L,
                                 int S, bool antiperiodic) {
  std::vector<double> out;
  for (int a = 0; a < N * N; ++a) {
    Mat w = sector_matrix(N, a);
    std::vector<std::vector<double>> axes(d);
    for (int mu = 0; mu < d; ++mu) {
      double phi = twist_offset(omegas[mu], w) + (antiperiodic ? 0.5 : 0.0);
      for (int n = -K - 2; n <= K + 2; ++n)
        if (std::abs(n + phi) <= K + 0.5 + 1e-12) axes[mu].push_back(2 * pi * (n + phi) / L);
    }
    std::function<void(int, double)> rec = [&](int mu, double k2) {
      if (mu == d) {
        for (int s = 0; s < S; ++s) out.push_back(k2);
        return;
      }
      for (double k : axes[mu]) rec(mu + 1, k2 + k * k);
    };
    rec(0, 0.0);
  }
  std::sort(out.begin(), out.end());
  return Eigen::Map<RVec>(out.data(), Eigen::Index(out.size()));
}

//! Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)> &f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

//! dim ker T - dim ker T^dagger from a Jacobi SVD rank.
inline std::tuple<int, int, int> kernel_count(const Mat &T, double tol = 1e-8) {
  Eigen::JacobiSVD<Mat> svd(T);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()[i] > tol;
  int kp = int(T.cols()) - rank, km = int(T.rows()) - rank;
  return {kp, km, kp - km};
}

//! Landau levels of the charge-q Dirac operator on T^2: D^2 = 2 B n, each
//! level |q|-fold degenerate; level 0 lives in one chirality only.
inline std::pair<std::vector<double>, std::vector<double>> landau_spectrum(int q, int levels,
                                                                           double L1, double L2) {
  const int deg = std::abs(q);
  const double B = 2 * pi * deg / (L1 * L2);
  std::vector<double> plus, minus;
  for (int n = 0; n <= levels; ++n)
    for (int r = 0; r < deg; ++r) {
      if (q > 0) {
        plus.push_back(2 * B * n);
        if (n > 0) minus.push_back(2 * B * n);
      } else {
        minus.push_back(2 * B * n);
        if (n > 0) plus.push_back(2 * B * n);
      }
    }
  std::sort(plus.begin(), plus.end());
  std::sort(minus.begin(), minus.end());
  return {plus, minus};
}

//! Closed forms for the named fields (anti-Hermitian convention).
//! Abelian sine, d = 2: AA_2 = i c s3 sin x1, F_12 = i c s3 cos x1.
inline double abelian_sin_trace_sum(double c, double L) { return -2.0 * c * c * L * L; }
//! Constant su(2), d = 4: F_12 = -2 i c^2 s3.
inline double constant_su2_trace_sum(double c, double L) { return -16.0 * std::pow(c, 4) * std::pow(L, 4); }

//! Delta a4 = -(S/3) (4 pi)^{-d/2} * 2N * int sum_{mu<nu} tr F^2.
inline double delta_a4(double half_trace, int d, int S, int N) {
  return -(double(S) / 3.0) * std::pow(4 * pi, -0.5 * d) * 2.0 * N * half_trace;
}

} // namespace oracle
