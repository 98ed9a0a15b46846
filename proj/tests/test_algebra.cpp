#include <catch_amalgamated.hpp>

#include "fluxtriple/action.hpp"
#include "fluxtriple/cech.hpp"
#include "oracles.hpp"

using namespace fluxtriple;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<oracle::Term> to_terms(const AlgebraSection &s) {
  std::vector<oracle::Term> t;
  for (const auto &[key, c] : s.terms) t.push_back({keys::sector(key), keys::momentum(key), c});
  return t;
}

CMat sample(const AlgebraSection &s, const std::array<double, 4> &x) {
  return oracle::evaluate(s.twist->N, to_terms(s), s.geom.lengths, s.geom.dim, x);
}

std::vector<std::array<double, 4>> random_points(int d, int n, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0, 2 * kPi);
  std::vector<std::array<double, 4>> pts(n, {0, 0, 0, 0});
  for (auto &p : pts)
    for (int mu = 0; mu < d; ++mu) p[mu] = u(rng);
  return pts;
}

} // namespace

TEST_CASE("gamma matrices satisfy the Clifford relations", "[clifford]") {
  for (int d : {2, 4}) {
    auto cm = build_clifford(d);
    auto r = verify_clifford(cm);
    CHECK(r.max() < 1e-14);
    CHECK(cm.spinor_dim == (d == 2 ? 2 : 4));
    auto signs = cm.chirality_signs();
    CHECK(std::count(signs.begin(), signs.end(), 1) == cm.spinor_dim / 2);
  }
}

TEST_CASE("KO sign table for dimensions 2 and 4", "[clifford]") {
  auto c2 = build_clifford(2), c4 = build_clifford(4);
  CHECK(c2.ko.epsilon == -1);
  CHECK(c2.ko.epsilon_prime == 1);
  CHECK(c2.ko.epsilon_second == -1);
  CHECK(c4.ko.epsilon == -1);
  CHECK(c4.ko.epsilon_prime == 1);
  CHECK(c4.ko.epsilon_second == 1);
  CHECK_THROWS_AS(build_clifford(3), InvalidInput);
}

TEST_CASE("lattice dimensions of the reference instances", "[torus]") {
  auto c2 = build_clifford(2), c4 = build_clifford(4);
  auto t2 = make_twist(2, 0, 2), t4 = make_twist(2, 0, 4);
  CHECK(triple_lattice(*t2, square_torus(2), 8, periodic_spin(), c2)->dim() == 2312);
  CHECK(triple_lattice(*t4, square_torus(4), 2, periodic_spin(), c4)->dim() == 10000);
  CHECK(triple_lattice(*t4, square_torus(4), 3, periodic_spin(), c4)->dim() == 38416);
  // half-integer offsets admit 2K + 2 modes per axis: 2 (17^2 + 2*17*18 + 18^2)
  auto t2f = make_twist(2, 1, 2);
  CHECK(triple_lattice(*t2f, square_torus(2), 8, periodic_spin(), c2)->dim() == 2450);
}

TEST_CASE("lattices are symmetric under k -> -k", "[torus]") {
  auto cm = build_clifford(2);
  for (int N : {1, 2, 3})
    for (int n12 = 0; n12 < N; ++n12)
      for (auto spin : {periodic_spin(), antiperiodic_spin(2)}) {
        auto tw = make_twist(N, n12, 2);
        auto lat = triple_lattice(*tw, square_torus(2), 3, spin, cm);
        CHECK(lattice_reflection_symmetric(*lat));
      }
}

TEST_CASE("free twisted spectrum matches the mode-sum oracle", "[torus]") {
  struct Case { int d, N, n12, K; bool anti; };
  for (auto c : {Case{2, 2, 0, 4, false}, Case{2, 2, 1, 4, false}, Case{2, 3, 2, 3, true},
                 Case{2, 3, 1, 3, false}, Case{4, 2, 1, 1, false}}) {
    auto spin = c.anti ? antiperiodic_spin(c.d) : periodic_spin();
    auto st = make_triple(c.d, c.N, c.n12, c.K, spin);
    RVec sq = squared_spectrum(st.dirac.sparse(), st.chirality);
    RVec ref = oracle::free_twisted_squared(c.N, st.twist->twist_matrices, c.d, c.K, 2 * kPi,
                                            st.cm.spinor_dim, c.anti);
    REQUIRE(sq.size() == ref.size());
    CHECK((sq - ref).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("antiperiodic spin structure opens a gap", "[torus]") {
  for (int d : {2, 4}) {
    auto st = make_triple(d, 2, 0, d == 2 ? 3 : 1, antiperiodic_spin(d));
    RVec sq = squared_spectrum(st.dirac.sparse(), st.chirality);
    CHECK_THAT(sq.minCoeff(), WithinAbs(0.25 * d, 1e-10));
    auto per = make_triple(d, 2, 0, d == 2 ? 3 : 1, periodic_spin());
    CHECK(squared_spectrum(per.dirac.sparse(), per.chirality).minCoeff() < 1e-12);
  }
}

TEST_CASE("free Dirac operator on spinor modes", "[torus]") {
  auto cm = build_clifford(2);
  auto lat = build_mode_lattice(square_torus(2), 3, periodic_spin());
  auto D = build_free_dirac(lat, cm);
  CHECK(D.hermiticity_residual(4, 1) < 1e-14);
  RVec ev = hermitian_eigenvalues(D.dense());
  CHECK(spectral_asymmetry(ev) < 1e-12);
  auto J = build_charge_conjugation(lat, cm);
  CHECK(J.intertwining_residual(D.sparse(), cm.ko.epsilon_prime) < 1e-14);
}

TEST_CASE("multiplication operator rejects or projects wide support", "[torus]") {
  auto lat = build_mode_lattice(square_torus(2), 2, periodic_spin());
  TrigPoly f;
  f.terms = {{{3, 0, 0, 0}, 1.0}};
  CHECK_THROWS_AS(build_multiplication_operator(f, lat), InvalidInput);
  auto m = build_multiplication_operator(f, lat, SupportPolicy::EnlargeThenProject);
  CHECK(m.dim == lat.dim());
  auto c = build_multiplication_operator(cos_poly(0), lat);
  CHECK(c.hermitian);
  CHECK(c.hermiticity_residual(3, 2) < 1e-14);
}

TEST_CASE("fiber product and involution match pointwise sampling", "[bundle]") {
  std::mt19937_64 rng(20240);
  struct Case { int d, N, n12; };
  for (auto c : {Case{2, 2, 0}, Case{2, 2, 1}, Case{2, 3, 1}, Case{2, 3, 2}, Case{4, 2, 1}}) {
    auto tw = make_twist(c.N, c.n12, c.d);
    auto g = square_torus(c.d);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      auto s = random_section(tw, g, rng, 5, 2), t = random_section(tw, g, rng, 5, 2);
      auto st = fiber_product(s, t), ss = fiber_involution(s);
      for (const auto &x : random_points(c.d, 6, rng)) {
        worst = std::max(worst, max_abs(sample(st, x) - sample(s, x) * sample(t, x)));
        worst = std::max(worst, max_abs(sample(ss, x) - sample(s, x).adjoint()));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("sections obey the twisted boundary conditions", "[bundle]") {
  std::mt19937_64 rng(5);
  for (int n12 : {0, 1, 2}) {
    auto tw = make_twist(3, n12, 2);
    auto g = square_torus(2);
    auto s = random_section(tw, g, rng, 8, 2);
    for (const auto &x : random_points(2, 5, rng))
      for (int mu = 0; mu < 2; ++mu) {
        auto y = x;
        y[mu] += g.lengths[mu];
        const CMat &om = tw->twist_matrices[mu];
        CHECK(max_abs(sample(s, y) - om * sample(s, x) * om.adjoint()) < 1e-12);
      }
    // library offsets agree with the conjugation phases
    for (int a = 0; a < tw->sectors(); ++a)
      for (int mu = 0; mu < 2; ++mu) {
        double phi = oracle::twist_offset(tw->twist_matrices[mu], oracle::sector_matrix(3, a));
        CHECK_THAT(tw->offset(a)[mu] / 6.0, WithinAbs(phi, 1e-12));
      }
  }
}

TEST_CASE("section evaluation agrees with the oracle", "[bundle]") {
  std::mt19937_64 rng(9);
  auto tw = make_twist(3, 1, 2);
  auto s = random_section(tw, square_torus(2), rng, 10, 2);
  for (const auto &x : random_points(2, 8, rng)) CHECK(max_abs(s(x) - sample(s, x)) < 1e-13);
}

TEST_CASE("sector terms reject incompatible momenta", "[bundle]") {
  auto tw = make_twist(2, 1, 2);
  AlgebraSection s(tw, square_torus(2));
  // sector 1 = P carries offset 1/2 along the second axis
  CHECK_THROWS_AS(s.add(1, {0, 0, 0, 0}, 1.0), InvalidInput);
  CHECK_NOTHROW(s.add(1, {0, 2, 0, 0}, 1.0));
  CHECK_THROWS_AS(s.add(7, {0, 0, 0, 0}, 1.0), InvalidInput);
  CHECK_THROWS_AS(s.add(0, {0, 0, 4, 0}, 1.0), InvalidInput);
  CHECK_THROWS_AS(build_twist(2, {{0, 1, 0, 0}, {-1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, -1, 0}}),
                  InvalidInput);
  CHECK_THROWS_AS(build_twist(2, {{0, 1}, {1, 0}}), InvalidInput);
}

TEST_CASE("algebra identities at coefficient level", "[bundle]") {
  std::mt19937_64 rng(3);
  auto tw = make_twist(3, 2, 2);
  auto g = square_torus(2);
  auto a = random_section(tw, g, rng, 4, 1), b = random_section(tw, g, rng, 4, 1),
       c = random_section(tw, g, rng, 4, 1);
  auto lhs = fiber_product(fiber_product(a, b), c), rhs = fiber_product(a, fiber_product(b, c));
  CHECK((lhs - rhs).max_coeff() < 1e-13);
  auto inv = fiber_involution(fiber_product(a, b)) -
             fiber_product(fiber_involution(b), fiber_involution(a));
  CHECK(inv.max_coeff() < 1e-13);
  CHECK((fiber_involution(fiber_involution(a)) - a).max_coeff() < 1e-14);
  auto one = identity_section(tw, g);
  CHECK((fiber_product(one, a) - a).max_coeff() < 1e-15);
  // the pairing is positive and its mean is the normalized Hilbert-Schmidt norm
  cplx p = mean_trace(hs_pairing(a, a));
  CHECK(p.real() > 0);
  CHECK(std::abs(p.imag()) < 1e-14);
  double hs = 0.0;
  for (const auto &[k, v] : a.terms) hs += std::norm(v);
  CHECK_THAT(p.real(), WithinAbs(hs, 1e-12));
}

TEST_CASE("su(N) sections and connections", "[bundle]") {
  std::mt19937_64 rng(4);
  auto tw = make_twist(2, 1, 2);
  auto g = square_torus(2);
  auto w = random_su_section(tw, g, rng, 6, 1, 0.5);
  CHECK(su_defect(w) < 1e-14);
  auto conn = random_connection(tw, g, rng);
  auto s = random_section(tw, g, rng, 4, 1), t = random_section(tw, g, rng, 4, 1);
  CHECK(connection_residuals(conn, s, t).max() < 1e-12);
  auto bad = random_hermitian_section(tw, g, rng, 3, 1, 0.5, false);
  CHECK_THROWS_AS(build_connection(tw, g, {bad, AlgebraSection(tw, g)}), InvalidInput);
}

TEST_CASE("flux class of the clock-shift transitions", "[cech]") {
  auto g = square_torus(2);
  auto cover = standard_cover(g);
  for (auto [N, n] : std::vector<std::pair<int, int>>{{2, 0}, {2, 1}, {3, 1}, {3, 2}, {4, 3}, {5, 2}}) {
    auto tw = build_twist_2d(N, n);
    auto rep = thooft_class_report(transitions_from_twist(tw, cover));
    CHECK(rep.cls == n % N);
    CHECK(rep.locally_constant);
    CHECK(rep.cocycle_residual < 1e-12);
  }
  CHECK(thooft_class(trivial_cech(cover, 3)) == 0);
}

TEST_CASE("sections patch across chart overlaps", "[cech]") {
  std::mt19937_64 rng(12);
  auto g = square_torus(2);
  auto cover = standard_cover(g);
  for (int n12 : {0, 1}) {
    auto tw = make_twist(2, n12, 2);
    auto cb = transitions_from_twist(*tw, cover);
    auto s = random_section(tw, g, rng, 6, 1);
    CHECK(patching_residual(cb, s) < 1e-12);
  }
}

TEST_CASE("non-cocycle transitions are rejected", "[cech]") {
  auto cover = standard_cover(square_torus(2));
  std::mt19937_64 rng(1);
  auto cb = make_cech_bundle(cover, 2, [](int a, int b, const Point2 &x) {
    CMat m = CMat::Identity(2, 2);
    m(0, 0) = std::polar(1.0, 0.3 * (a + 1) * x[0] + b);
    return m;
  });
  CHECK(cb.cocycle_residual > 1e-3);
  CHECK_THROWS_AS(thooft_class(cb), InvalidInput);
}

TEST_CASE("partition-of-unity blend of chart connections", "[cech]") {
  std::mt19937_64 rng(8);
  auto g = square_torus(2);
  auto tw = make_twist(2, 0, 2);
  auto cover = standard_cover(g);
  auto part = box_partition(cover);
  std::vector<BundleConnection> charts;
  for (int c = 0; c < cover.charts(); ++c) charts.push_back(random_connection(tw, g, rng, 3, 1, 0.2));
  auto bc = cech_blend(charts, part);
  auto s = random_section(tw, g, rng, 3, 1), t = random_section(tw, g, rng, 3, 1);
  auto r = blend_residuals(bc, s, t);
  CHECK(r.leibniz < 1e-12);
  CHECK(r.star < 1e-12);
  auto skewed = part;
  skewed[0] = [f = part[0]](const std::array<double, 4> &x) { return 1.5 * f(x); };
  CHECK_THROWS_AS(cech_blend(charts, skewed), InvalidInput);
}
