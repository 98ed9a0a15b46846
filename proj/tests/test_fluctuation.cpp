#include <catch_amalgamated.hpp>

#include "fluxtriple/action.hpp"
#include "oracles.hpp"

using namespace fluxtriple;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SpectralTripleData triple_with(int d, int N, int n12, int K, std::uint64_t seed, bool random = true) {
  auto tw = make_twist(N, n12, d);
  auto g = square_torus(d);
  auto cm = build_clifford(d);
  std::mt19937_64 rng(seed);
  auto conn = random ? random_connection(tw, g, rng, 3, 1, 0.2) : zero_connection(tw, g);
  return assemble_triple(tw, conn, triple_lattice(*tw, g, K, periodic_spin(), cm), cm);
}

std::vector<FluctuationPair> random_pairs(const SpectralTripleData &st, std::mt19937_64 &rng, int n) {
  std::vector<FluctuationPair> p;
  for (int i = 0; i < n; ++i) {
    auto a = random_section(st.twist, st.lat().geom, rng, 2, 1, 0.3);
    auto b = random_section(st.twist, st.lat().geom, rng, 2, 1, 0.3);
    // (a [D,b])^* = b^* [D,a^*] - [D, b^* a^*]
    auto bs = fiber_involution(b), as = fiber_involution(a);
    p.push_back({a, b});
    p.push_back({bs, as});
    p.push_back({(-1.0) * identity_section(st.twist, st.lat().geom), fiber_product(bs, as)});
  }
  return p;
}

double field_distance(const SparseField &a, const SparseField &b) {
  return field_norm(field_combine(a, 1, b, -1)) / std::max(1e-300, field_norm(b));
}

} // namespace

TEST_CASE("central fluctuations drop out", "[fluctuation]") {
  for (int d : {2, 4}) {
    auto st = triple_with(d, 2, d == 2 ? 1 : 0, d == 2 ? 4 : 1, 3);
    std::mt19937_64 rng(8);
    InnerFluctuation fl;
    fl.a_mu = central_hermitian_field(st.twist, st.lat().geom, rng, 0.4);
    auto DA = fluctuated_dirac(st, fl);
    double diff = sparse_max_abs(SpMat(DA.sparse() - st.dirac.sparse()));
    CHECK(diff < 1e-12);
    // the same field gives a visible one-sided perturbation
    CHECK(sparse_max_abs(st.matrix(fluctuation_operator(fl, st.cm))) > 1e-2);
    CHECK(pert_from_hermitian(fl.a_mu)[0].terms.empty());
  }
}

TEST_CASE("pairs and the coefficient route give the same fluctuation", "[fluctuation]") {
  for (int n12 : {0, 1}) {
    auto st = triple_with(2, 2, n12, 4, 5 + n12);
    std::mt19937_64 rng(13);
    auto fl = build_fluctuation(st, random_pairs(st, rng, 2));
    CHECK(fl.symmetrization_defect < 1e-12);
    auto op = st.compile(fluctuation_operator(fl, st.cm));
    for (int p = 0; p < 3; ++p) {
      auto v = random_probe(st.lat(), rng, 6);
      CHECK(field_distance(op.apply(v), apply_pairs(st, fl, v)) < 1e-12);
    }
    // literal D + A + eps' J A J^-1 against -i gamma (d + ad(omega + pert))
    SpMat lit = fluctuated_dirac(st, fl).sparse();
    SpMat direct = fluctuated_dirac(st, fl.pert).sparse();
    CHECK(sparse_max_abs(SpMat(lit - direct)) < 1e-12);
  }
}

TEST_CASE("fluctuated operators remain real and odd", "[fluctuation]") {
  auto st = triple_with(2, 3, 1, 3, 2);
  std::mt19937_64 rng(3);
  std::vector<AlgebraSection> pert;
  for (int mu = 0; mu < 2; ++mu) pert.push_back(random_su_section(st.twist, st.lat().geom, rng, 3, 1, 0.3));
  SpMat D = fluctuated_dirac(st, pert).sparse();
  CHECK(hermiticity_defect(D) < 1e-13);
  CHECK(st.J.intertwining_residual(D, st.cm.ko.epsilon_prime) < 1e-13);
  CHECK_NOTHROW(odd_block(D, st.chirality));
  std::vector<AlgebraSection> bad = pert;
  bad[0] += identity_section(st.twist, st.lat().geom);
  CHECK_THROWS_AS(fluctuated_dirac(st, bad), InvalidInput);
}

TEST_CASE("gauge covariance of the fluctuated Dirac operator", "[fluctuation]") {
  for (int n12 : {0, 1}) {
    auto st = triple_with(2, 2, n12, 4, 21 + n12);
    std::mt19937_64 rng(77);
    std::vector<AlgebraSection> pert;
    for (int mu = 0; mu < 2; ++mu) pert.push_back(random_su_section(st.twist, st.lat().geom, rng, 3, 1, 0.2));
    for (int i = 0; i < 3; ++i) {
      auto u = random_unitary_section(st.twist, st.lat().geom, rng, 1);
      auto r = gauge_transform(st, pert, u, 3, 100 + i);
      CHECK(r.unitarity < 1e-13);
      CHECK(r.covariance_residual < 1e-12);
      for (const auto &p : r.pert) CHECK(su_defect(p) < 1e-12);
      auto psi = random_probe(st.lat(), rng, 8);
      CHECK(fermionic_gauge_residual(st, pert, u, psi) < 1e-10);
    }
  }
}

TEST_CASE("Jacobi-Anger gauge transformation is unitary", "[fluctuation]") {
  auto tw = make_twist(2, 0, 2);
  auto g = square_torus(2);
  CMat H(2, 2);
  H << 1, 0, 0, -1;
  auto u = cosine_gauge(tw, g, H, 0.7, 0, 24);
  CHECK(unitarity_defect(u) < 1e-14);
  std::array<double, 4> x{0.4, 1.1, 0, 0};
  CMat expect = (kI * 0.7 * std::cos(0.4) * H).exp();
  CHECK(max_abs(u(x) - expect) < 1e-13);
  CHECK_THROWS_AS(gauge_transform_pert(zero_connection(tw, g), {}, 2.0 * u), InvalidInput);
}

TEST_CASE("field strength of the named presets", "[fluctuation]") {
  const double L = 2 * kPi;
  {
    auto st = triple_with(2, 2, 0, 3, 0, false);
    const double c = 0.5;
    auto fs = curvature(st.connection, abelian_sin_field(st.twist, st.lat().geom, c));
    auto ym = yang_mills_functional(fs);
    CHECK_THAT(ym.trace_sum, WithinRel(oracle::abelian_sin_trace_sum(c, L), 1e-12));
    CHECK_THAT(ym.half_norm, WithinRel(-0.5 * oracle::abelian_sin_trace_sum(c, L), 1e-12));
    std::array<double, 4> x{0.3, 2.0, 0, 0};
    CMat s3(2, 2);
    s3 << 1, 0, 0, -1;
    CHECK(max_abs(fs(0, 1)(x) - kI * c * std::cos(0.3) * s3) < 1e-14);
  }
  {
    auto st = triple_with(4, 2, 0, 1, 0, false);
    const double c = 0.25;
    auto fs = curvature(st.connection, constant_su2_field(st.twist, st.lat().geom, c));
    CHECK_THAT(yang_mills_functional(fs).trace_sum, WithinRel(oracle::constant_su2_trace_sum(c, L), 1e-12));
  }
}

TEST_CASE("Bianchi identity and plaquette holonomy", "[fluctuation]") {
  auto tw = make_twist(2, 1, 2);
  auto g = square_torus(2);
  std::mt19937_64 rng(15);
  auto conn = random_connection(tw, g, rng, 3, 1, 0.3);
  std::vector<AlgebraSection> pert{random_su_section(tw, g, rng, 2, 1, 0.2),
                                   random_su_section(tw, g, rng, 2, 1, 0.2)};
  auto fs = curvature(conn, pert);
  CHECK(bianchi_residual(fs) < 1e-12);
  std::vector<std::array<double, 4>> pts{{0.3, 0.9, 0, 0}, {2.5, 4.0, 0, 0}, {5.1, 1.7, 0, 0}};
  double e1 = holonomy_defect(fs, 0, 1, 0.02, pts), e2 = holonomy_defect(fs, 0, 1, 0.01, pts);
  CHECK(e2 < e1);
  CHECK(e2 < 0.6 * e1);
  CHECK(e2 < 1e-2);

  auto tw4 = make_twist(2, 0, 4);
  auto g4 = square_torus(4);
  auto conn4 = random_connection(tw4, g4, rng, 2, 1, 0.3);
  CHECK(bianchi_residual(curvature(conn4, {})) < 1e-12);
}

TEST_CASE("integrated trace agrees with quadrature", "[fluctuation]") {
  auto tw = make_twist(3, 1, 2);
  auto g = square_torus(2);
  std::mt19937_64 rng(10);
  auto x = random_section(tw, g, rng, 5, 1), y = random_section(tw, g, rng, 5, 1);
  cplx quad = 0.0;
  const int n = 24;
  for (const auto &p : torus_grid(g, n)) quad += (x(p) * y(p)).trace();
  quad *= g.volume() / double(n * n);
  CHECK(std::abs(integrated_trace(x, y) - quad) < 1e-10);
}
