#include <catch_amalgamated.hpp>

#include "fluxtriple/action.hpp"
#include "oracles.hpp"

using namespace fluxtriple;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SpectralTripleData random_triple(int d, int N, int n12, int K, std::uint64_t seed,
                                 double amp = 0.3) {
  auto tw = make_twist(N, n12, d);
  auto g = square_torus(d);
  auto cm = build_clifford(d);
  std::mt19937_64 rng(seed);
  auto conn = random_connection(tw, g, rng, 4, 1, amp);
  return assemble_triple(tw, conn, triple_lattice(*tw, g, K, periodic_spin(), cm), cm);
}

} // namespace

TEST_CASE("axioms hold for random connections in d = 2", "[triple]") {
  for (int n12 : {0, 1}) {
    auto st = random_triple(2, 2, n12, 4, 11 + n12);
    auto rep = verify_triple(st, 4, 1);
    INFO(rep.to_json().dump());
    CHECK(rep.all_pass());
    for (const auto &c : rep.checks) CHECK(c.residual_enlarged < 1e-10);
  }
  auto st3 = random_triple(2, 3, 2, 3, 5);
  CHECK(verify_triple(st3, 3, 2).all_pass());
}

TEST_CASE("antiperiodic triples satisfy the axioms", "[triple]") {
  auto tw = make_twist(2, 1, 2);
  auto g = square_torus(2);
  auto cm = build_clifford(2);
  std::mt19937_64 rng(2);
  auto conn = random_connection(tw, g, rng);
  auto st = assemble_triple(tw, conn, triple_lattice(*tw, g, 3, antiperiodic_spin(2), cm), cm);
  CHECK(verify_triple(st, 3, 7).all_pass());
}

TEST_CASE("Hermitian admixture breaks self-adjointness", "[triple]") {
  auto tw = make_twist(2, 0, 2);
  auto g = square_torus(2);
  auto cm = build_clifford(2);
  std::mt19937_64 rng(3);
  auto conn = random_connection(tw, g, rng);
  auto h = random_hermitian_section(tw, g, rng, 4, 1, 1.0, false);
  h *= 0.1 / h.max_coeff();
  conn.omega[0] += h;
  CHECK_THROWS_AS(assemble_triple(tw, conn, triple_lattice(*tw, g, 3, periodic_spin(), cm), cm),
                  std::logic_error);
  AssemblyOptions opt;
  opt.allow_non_hermitian = true;
  auto st = assemble_triple(tw, conn, triple_lattice(*tw, g, 3, periodic_spin(), cm), cm, opt);
  auto rep = verify_triple(st, 3, 1);
  CHECK_FALSE(rep.all_pass());
  CHECK(rep.get("self_adjoint").residual_raw > 1e-3);
  CHECK(rep.get("JD").residual_raw > 1e-3);
}

TEST_CASE("right action through J agrees with right multiplication", "[triple]") {
  auto st = random_triple(2, 3, 1, 3, 9);
  std::mt19937_64 rng(4);
  auto b = random_section(st.twist, st.lat().geom, rng, 4, 1);
  SpMat viaJ = st.right_via_J(b), direct = st.matrix(st.right(b));
  // agree away from the cutoff boundary
  CVec v = CVec::Zero(st.hilbert_dim());
  for (int i = 0; i < st.hilbert_dim(); ++i) {
    IVec4 m = keys::momentum(st.lat().states[i]);
    if (std::abs(m[0]) <= 3 * 3 && std::abs(m[1]) <= 3 * 3) v[i] = cplx(std::cos(i), std::sin(2 * i));
  }
  CHECK((viaJ * v - direct * v).norm() < 1e-12 * v.norm());
}

TEST_CASE("spectrum with constant connection matches the Kronecker oracle", "[triple]") {
  for (int d : {2, 4}) {
    auto tw = make_twist(2, 0, d);
    auto g = square_torus(d);
    auto cm = build_clifford(d);
    std::mt19937_64 rng(31 + d);
    std::vector<AlgebraSection> w;
    for (int mu = 0; mu < d; ++mu) w.push_back(random_su_section(tw, g, rng, 3, 0, 0.6));
    auto conn = build_connection(tw, g, w);
    const int K = d == 2 ? 3 : 1;
    auto st = assemble_triple(tw, conn, triple_lattice(*tw, g, K, periodic_spin(), cm), cm);
    RVec ev = hermitian_eigenvalues(CMat(st.dirac.sparse()));
    std::vector<CMat> wm;
    for (const auto &x : w) wm.push_back(x({0, 0, 0, 0}));
    RVec ref = oracle::constant_connection_spectrum(cm.gammas, wm, 2, K, 2 * kPi, false);
    REQUIRE(ev.size() == ref.size());
    CHECK((ev - ref).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(spectral_asymmetry(ev) < 1e-10);
  }
}

TEST_CASE("squared spectrum paths agree", "[triple]") {
  auto st = random_triple(2, 2, 1, 3, 17);
  const SpMat &D = st.dirac.sparse();
  RVec fast = squared_spectrum(D, st.chirality);
  RVec plain = squared_spectrum(D, {});
  auto cs = chiral_spectrum(D, st.chirality);
  CHECK((fast - plain).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((fast - cs.all()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(squared_spectrum(D, st.chirality, 100), InvalidInput);
}

TEST_CASE("commutators with the Dirac operator converge to the sup norm", "[triple]") {
  auto st = random_triple(2, 2, 0, 2, 23, 0.2);
  std::mt19937_64 rng(6);
  auto a = random_section(st.twist, st.lat().geom, rng, 3, 1);
  double sup = commutator_sup_oracle(st, a, 64);
  auto norms = verify_bounded_commutators(st, a, {2, 4, 8});
  REQUIRE(norms.size() == 3);
  std::vector<double> err;
  for (double n : norms) err.push_back(std::abs(n - sup));
  CHECK(err[2] < err[0]);
  CHECK_THAT(norms[2], WithinRel(sup, 0.05));
  for (double n : norms) CHECK(n <= sup * (1 + 1e-6));
}

TEST_CASE("Weyl counting exponent equals the dimension", "[triple]") {
  auto st = make_triple(2, 2, 0, 8, periodic_spin());
  RVec sq = squared_spectrum(st.dirac.sparse(), st.chirality);
  RVec absev = sq.cwiseSqrt();
  CHECK_THAT(counting_exponent(absev, 2.0, 7.0), WithinAbs(2.0, 0.2));
}

TEST_CASE("Kasparov module bound on a twisted bundle", "[triple]") {
  auto st = random_triple(2, 2, 1, 2, 41, 0.2);
  std::mt19937_64 rng(1);
  auto a = random_section(st.twist, st.lat().geom, rng, 3, 1, 0.5);
  auto kn = kasparov_bound_check(st, a, {2, 4});
  double sup = kasparov_sup_oracle(st, a, 48);
  REQUIRE(kn.forward.size() == 2);
  for (double f : kn.forward) CHECK(std::isfinite(f));
  CHECK(kn.forward[1] <= 2.0 * sup + 1e-9);
  CHECK(kn.backward[1] <= 2.0 * sup + 1e-9);
}
