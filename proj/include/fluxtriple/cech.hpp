#pragma once
// Cech description of PSU(N) bundles over T^2: a 3x3 grid of overlapping
// boxes, locally constant transition functions read off from the twist, and
// the Z_N lifting obstruction of their U(N) representatives.

#include "fluxtriple/bundle.hpp"

namespace fluxtriple {

using Point2 = std::array<double, 2>;

//! Boxes [(i - m) h, (i + 1 + m) h) x [(j - m) h, (j + 1 + m) h) on the torus,
//! h = L / 3. Every pair of boxes meets in at most one connected piece, and
//! the nerve triangulates the torus.
struct CechCover {
  std::array<double, 2> lengths{2 * kPi, 2 * kPi};
  int grid = 3;
  double margin = 0.25;

  int charts() const { return grid * grid; }
  int chart(int i, int j) const {
    return ((i % grid) + grid) % grid + grid * (((j % grid) + grid) % grid);
  }
  double cell(int ax) const { return lengths[ax] / grid; }

  //! Representative of x inside box c along both axes, if any.
  std::optional<Point2> lift(int c, const Point2 &x) const {
    const int ij[2] = {c % grid, c / grid};
    Point2 out;
    for (int ax = 0; ax < 2; ++ax) {
      const double lo = (ij[ax] - margin) * cell(ax), hi = (ij[ax] + 1 + margin) * cell(ax);
      double y = x[ax] - std::floor((x[ax] - lo) / lengths[ax]) * lengths[ax];
      if (!(y >= lo && y < hi)) return std::nullopt;
      out[ax] = y;
    }
    return out;
  }
  bool contains(int c, const Point2 &x) const { return lift(c, x).has_value(); }

  //! Grid vertex ((i+1) h1, (j+1) h2), common to the four boxes around it.
  Point2 corner(int i, int j) const {
    Point2 p{(i + 1) * cell(0), (j + 1) * cell(1)};
    for (int ax = 0; ax < 2; ++ax) p[ax] = std::fmod(p[ax], lengths[ax]);
    return p;
  }

  struct Triangle {
    std::array<int, 3> charts;
    Point2 point;
  };
  //! Positively oriented 2-simplices of the nerve, two per grid vertex.
  std::vector<Triangle> triangles() const {
    std::vector<Triangle> out;
    for (int j = 0; j < grid; ++j)
      for (int i = 0; i < grid; ++i) {
        int a = chart(i, j), b = chart(i + 1, j), c = chart(i + 1, j + 1), d = chart(i, j + 1);
        out.push_back({{a, b, c}, corner(i, j)});
        out.push_back({{a, c, d}, corner(i, j)});
      }
    return out;
  }

  //! Sample points of U_a cap U_b on an n x n grid of the torus.
  std::vector<Point2> overlap_samples(int a, int b, int n = 24) const {
    std::vector<Point2> pts;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Point2 x{lengths[0] * (i + 0.5) / n, lengths[1] * (j + 0.5) / n};
        if (contains(a, x) && contains(b, x)) pts.push_back(x);
      }
    return pts;
  }

  void validate() const {
    if (grid != 3) throw InvalidInput("only the 3x3 box cover of T^2 is supported");
    if (!(margin > 0.0 && margin < 0.5)) throw InvalidInput("cover margin must be in (0, 1/2)");
    for (double L : lengths)
      if (!(L > 0.0)) throw InvalidInput("cover lengths must be positive");
  }
};

inline CechCover standard_cover(const TorusGeometry &g) {
  if (g.dim != 2) throw InvalidInput("the Cech cover is implemented for T^2 only");
  CechCover c;
  c.lengths = {g.lengths[0], g.lengths[1]};
  return c;
}

//! Transition g_ab(x) on U_a cap U_b: s_a = g_ab s_b g_ab^{-1}.
using TransitionFn = std::function<CMat(int, int, const Point2 &)>;

struct CechBundle {
  CechCover cover;
  int N = 1;
  TransitionFn transition;
  double cocycle_residual = 0.0;
};

//! Distance of m from the scalar matrices, relative to its norm.
inline double central_defect(const CMat &m) {
  cplx z = m.trace() / double(m.rows());
  return max_abs(m - z * CMat::Identity(m.rows(), m.cols()));
}

//! Max over sampled triple overlaps of the PSU(N) cocycle defect.
inline double cocycle_residual(const CechCover &cover, const TransitionFn &g) {
  double r = 0.0;
  for (const auto &tri : cover.triangles()) {
    const auto [a, b, c] = tri.charts;
    const double h = cover.margin * std::min(cover.cell(0), cover.cell(1));
    for (double dx : {-0.5 * h, 0.0, 0.5 * h})
      for (double dy : {-0.5 * h, 0.0, 0.5 * h}) {
        Point2 x{tri.point[0] + dx, tri.point[1] + dy};
        for (int ax = 0; ax < 2; ++ax)
          x[ax] = std::fmod(x[ax] + cover.lengths[ax], cover.lengths[ax]);
        CMat m = g(a, b, x) * g(b, c, x) * g(c, a, x);
        r = std::max(r, central_defect(m));
      }
  }
  return r;
}

inline CechBundle make_cech_bundle(const CechCover &cover, int N, TransitionFn g) {
  cover.validate();
  CechBundle cb{cover, N, std::move(g), 0.0};
  cb.cocycle_residual = cocycle_residual(cover, cb.transition);
  return cb;
}

inline CechBundle trivial_cech(const CechCover &cover, int N) {
  return make_cech_bundle(cover, N, [N](int, int, const Point2 &) {
    return CMat(CMat::Identity(N, N));
  });
}

inline CMat matrix_power(const CMat &m, int k) {
  CMat base = k < 0 ? CMat(m.inverse()) : m;
  CMat out = CMat::Identity(m.rows(), m.cols());
  for (int i = 0; i < std::abs(k); ++i) out = out * base;
  return out;
}

//! Transitions Ad(Omega_1^{n1} Omega_2^{n2}) where (n1 L1, n2 L2) is the
//! difference of the two chart lifts.
inline CechBundle transitions_from_twist(const TwistData &twist, const CechCover &cover) {
  if (twist.dim != 2) throw InvalidInput("transitions_from_twist: T^2 twists only");
  cover.validate();
  const CMat o1 = twist.twist_matrices[0], o2 = twist.twist_matrices[1];
  auto lengths = cover.lengths;
  TransitionFn g = [o1, o2, lengths, cover](int a, int b, const Point2 &x) -> CMat {
    auto la = cover.lift(a, x), lb = cover.lift(b, x);
    if (!la || !lb) throw InvalidInput("transition evaluated outside the overlap");
    int n1 = int(std::lround(((*la)[0] - (*lb)[0]) / lengths[0]));
    int n2 = int(std::lround(((*la)[1] - (*lb)[1]) / lengths[1]));
    return matrix_power(o1, n1) * matrix_power(o2, n2);
  };
  return make_cech_bundle(cover, twist.N, std::move(g));
}

//! SU(N) representative: m det(m)^{-1/N} with the principal root.
inline CMat special_unitary_rep(const CMat &m) {
  cplx det = m.determinant();
  return m * std::pow(det, -1.0 / double(m.rows()));
}

struct FluxClassReport {
  int cls = 0;
  double cocycle_residual = 0.0;
  bool locally_constant = true;
  std::vector<int> triangle_values;
};

//! Z_N obstruction: with SU(N) lifts h_ab (a < b) and h_ba = h_ab^{-1},
//! h_ab h_bc h_ca = exp(2 pi i k_abc / N); the class is sum k_abc mod N over
//! the oriented triangles of the nerve.
inline FluxClassReport thooft_class_report(const CechBundle &cb) {
  if (cb.cocycle_residual > 1e-8)
    throw InvalidInput("thooft_class: transitions do not form a PSU(N) cocycle");
  const int N = cb.N;
  auto lift = [&](int a, int b, const Point2 &x) -> CMat {
    if (a < b) return special_unitary_rep(cb.transition(a, b, x));
    return special_unitary_rep(cb.transition(b, a, x)).inverse();
  };
  auto level = [&](const CMat &m) {
    cplx z = m.trace() / double(N);
    long k = std::lround(std::arg(z) * N / (2 * kPi));
    return int(((k % N) + N) % N);
  };
  FluxClassReport rep;
  rep.cocycle_residual = cb.cocycle_residual;
  long total = 0;
  const CechCover &cv = cb.cover;
  const double h = 0.5 * cv.margin * std::min(cv.cell(0), cv.cell(1));
  for (const auto &tri : cv.triangles()) {
    const auto [a, b, c] = tri.charts;
    int k0 = level(lift(a, b, tri.point) * lift(b, c, tri.point) * lift(c, a, tri.point));
    for (double dx : {-h, h})
      for (double dy : {-h, h}) {
        Point2 x{std::fmod(tri.point[0] + dx + cv.lengths[0], cv.lengths[0]),
                 std::fmod(tri.point[1] + dy + cv.lengths[1], cv.lengths[1])};
        if (level(lift(a, b, x) * lift(b, c, x) * lift(c, a, x)) != k0)
          rep.locally_constant = false;
      }
    rep.triangle_values.push_back(k0);
    total += k0;
  }
  rep.cls = int(((total % N) + N) % N);
  return rep;
}

inline int thooft_class(const CechBundle &cb) { return thooft_class_report(cb).cls; }

//! Max deviation of s(lift_a x) from g_ab s(lift_b x) g_ab^{-1} over overlaps.
inline double patching_residual(const CechBundle &cb, const AlgebraSection &s) {
  double r = 0.0;
  const CechCover &cv = cb.cover;
  for (int a = 0; a < cv.charts(); ++a)
    for (int b = 0; b < cv.charts(); ++b) {
      if (a == b) continue;
      for (const auto &x : cv.overlap_samples(a, b, 12)) {
        auto la = *cv.lift(a, x), lb = *cv.lift(b, x);
        CMat g = cb.transition(a, b, x);
        CMat sa = s({la[0], la[1], 0, 0}), sb = s({lb[0], lb[1], 0, 0});
        r = std::max(r, max_abs(sa - g * sb * g.inverse()));
      }
    }
  return r;
}

// ---------------------------------------------------------------------------
// Partition-of-unity blend of connections

using PartitionFn = std::function<double(const std::array<double, 4> &)>;

struct BlendedConnection {
  std::vector<BundleConnection> charts;
  std::vector<PartitionFn> partition;

  //! sum_i f_i(x) (nabla_i s)(x).
  CMat covariant(int mu, const AlgebraSection &s, const std::array<double, 4> &x) const {
    CMat out = CMat::Zero(s.twist->N, s.twist->N);
    for (std::size_t i = 0; i < charts.size(); ++i) {
      double f = partition[i](x);
      if (f != 0.0) out += f * charts[i].covariant(mu, s)(x);
    }
    return out;
  }
};

//! Smooth partition of unity subordinate to the 3x3 box cover.
inline std::vector<PartitionFn> box_partition(const CechCover &cover) {
  auto bump1 = [cover](int ax, int i, double t) {
    double w = (1 + 2 * cover.margin) * cover.cell(ax);
    double c = (i + 0.5) * cover.cell(ax);
    double d = std::remainder(t - c, cover.lengths[ax]);
    double u = 2 * d / w;
    return std::abs(u) < 1 ? std::exp(-1.0 / (1 - u * u)) : 0.0;
  };
  auto norm1 = [cover, bump1](int ax, int i, double t) {
    double tot = 0.0;
    for (int j = 0; j < cover.grid; ++j) tot += bump1(ax, j, t);
    return bump1(ax, i, t) / tot;
  };
  std::vector<PartitionFn> fs;
  for (int c = 0; c < cover.charts(); ++c) {
    int i = c % cover.grid, j = c / cover.grid;
    fs.push_back([=](const std::array<double, 4> &x) { return norm1(0, i, x[0]) * norm1(1, j, x[1]); });
  }
  return fs;
}

//! Blends chart connections with partition functions; rejects partitions
//! that are negative or do not sum to one on the sample grid.
inline BlendedConnection cech_blend(std::vector<BundleConnection> charts,
                                    std::vector<PartitionFn> partition,
                                    double tol = 1e-10) {
  if (charts.empty() || charts.size() != partition.size())
    throw InvalidInput("cech_blend: need one partition function per chart");
  const TorusGeometry g = charts[0].geom;
  for (const auto &c : charts)
    if (!c.twist->compatible(*charts[0].twist))
      throw InvalidInput("cech_blend: charts carry incompatible twists");
  for (const auto &x : torus_grid(g, g.dim == 2 ? 16 : 5)) {
    double tot = 0.0;
    for (const auto &f : partition) {
      double v = f(x);
      if (v < -tol) throw InvalidInput("cech_blend: partition function is negative");
      tot += v;
    }
    if (std::abs(tot - 1.0) > tol)
      throw InvalidInput("cech_blend: partition functions do not sum to one");
  }
  return BlendedConnection{std::move(charts), std::move(partition)};
}

//! Pointwise Leibniz and star residuals of a blended connection.
inline ConnectionResiduals blend_residuals(const BlendedConnection &bc,
                                           const AlgebraSection &s,
                                           const AlgebraSection &t, int n = 7) {
  ConnectionResiduals r;
  const TorusGeometry g = bc.charts[0].geom;
  AlgebraSection st = fiber_product(s, t), sstar = fiber_involution(s);
  for (const auto &x : torus_grid(g, n))
    for (int mu = 0; mu < g.dim; ++mu) {
      CMat lhs = bc.covariant(mu, st, x);
      CMat rhs = s(x) * bc.covariant(mu, t, x) + bc.covariant(mu, s, x) * t(x);
      r.leibniz = std::max(r.leibniz, max_abs(lhs - rhs));
      CMat a = bc.covariant(mu, s, x).adjoint(), b = bc.covariant(mu, sstar, x);
      r.star = std::max(r.star, max_abs(a - b));
    }
  return r;
}

} // namespace fluxtriple
