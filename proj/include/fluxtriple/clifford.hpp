#pragma once
// Euclidean Clifford data in even dimension: gamma matrices, chirality and
// the charge-conjugation matrix of the antilinear map J_M(psi) = C conj(psi).

#include "fluxtriple/linalg.hpp"

#include <array>
#include <string>

namespace fluxtriple {

struct KOSigns {
  int epsilon = 0;        // J^2 = epsilon
  int epsilon_prime = 0;  // J D = epsilon' D J
  int epsilon_second = 0; // J Gamma = epsilon'' Gamma J
};

struct CliffordModule {
  int dim = 0;
  int spinor_dim = 0;
  std::vector<CMat> gammas;
  CMat chirality;
  CMat conj_matrix;
  KOSigns ko;

  //! Diagonal of the chirality matrix; the chosen bases keep it diagonal.
  std::vector<int> chirality_signs() const {
    std::vector<int> s(spinor_dim);
    for (int i = 0; i < spinor_dim; ++i)
      s[i] = chirality(i, i).real() > 0 ? 1 : -1;
    return s;
  }
};

namespace detail {
inline CMat pauli(int k) {
  CMat s(2, 2);
  switch (k) {
  case 0: s << 1, 0, 0, 1; break;
  case 1: s << 0, 1, 1, 0; break;
  case 2: s << 0, cplx(0, -1), cplx(0, 1), 0; break;
  default: s << 1, 0, 0, -1; break;
  }
  return s;
}
inline CMat block2(const CMat &a, const CMat &b, const CMat &c, const CMat &d) {
  CMat m(a.rows() + c.rows(), a.cols() + b.cols());
  m << a, b, c, d;
  return m;
}
} // namespace detail

//! Pauli basis for d = 2, chiral (Weyl) basis for d = 4.
inline CliffordModule build_clifford(int d) {
  using detail::pauli;
  CliffordModule cm;
  cm.dim = d;
  if (d == 2) {
    cm.spinor_dim = 2;
    cm.gammas = {pauli(1), pauli(2)};
    cm.conj_matrix = pauli(2);
    cm.ko = {-1, +1, -1};
  } else if (d == 4) {
    cm.spinor_dim = 4;
    CMat z = CMat::Zero(2, 2), id = pauli(0);
    for (int k = 1; k <= 3; ++k)
      cm.gammas.push_back(detail::block2(z, -kI * pauli(k), kI * pauli(k), z));
    cm.gammas.push_back(detail::block2(z, id, id, z));
    cm.conj_matrix = cm.gammas[1] * cm.gammas[3];
    cm.ko = {-1, +1, +1};
  } else {
    throw InvalidInput("build_clifford: only dimensions 2 and 4 are supported, got " +
                       std::to_string(d));
  }
  // Gamma = (-i)^{d/2} gamma^1 ... gamma^d
  CMat g = CMat::Identity(cm.spinor_dim, cm.spinor_dim);
  for (const auto &gm : cm.gammas) g = g * gm;
  cplx phase = std::pow(cplx(0, -1), d / 2);
  cm.chirality = phase * g;
  return cm;
}

struct CliffordResiduals {
  double anticommutator = 0;  // max ||{g^mu, g^nu} - 2 delta||
  double hermitian = 0;       // max ||g - g^dagger||
  double unitary = 0;         // max ||g g^dagger - 1||
  double chirality_hermitian = 0;
  double chirality_square = 0;
  double chirality_anticommute = 0;
  double j_square = 0;        // ||C conj(C) - eps||
  double j_gamma = 0;         // max ||C conj(g) C^-1 + g||
  double j_chirality = 0;     // ||C conj(Gamma) C^-1 - eps'' Gamma||
  double conj_unitary = 0;

  double max() const {
    return std::max({anticommutator, hermitian, unitary, chirality_hermitian,
                     chirality_square, chirality_anticommute, j_square,
                     j_gamma, j_chirality, conj_unitary});
  }
};

inline CliffordResiduals verify_clifford(const CliffordModule &cm) {
  CliffordResiduals r;
  const int s = cm.spinor_dim;
  const CMat id = CMat::Identity(s, s);
  for (int mu = 0; mu < cm.dim; ++mu) {
    const CMat &g = cm.gammas[mu];
    for (int nu = 0; nu < cm.dim; ++nu) {
      CMat ac = g * cm.gammas[nu] + cm.gammas[nu] * g;
      if (mu == nu) ac -= 2.0 * id;
      r.anticommutator = std::max(r.anticommutator, max_abs(ac));
    }
    r.hermitian = std::max(r.hermitian, max_abs(g - g.adjoint()));
    r.unitary = std::max(r.unitary, max_abs(g * g.adjoint() - id));
    r.chirality_anticommute = std::max(
        r.chirality_anticommute, max_abs(cm.chirality * g + g * cm.chirality));
  }
  r.chirality_hermitian = max_abs(cm.chirality - cm.chirality.adjoint());
  r.chirality_square = max_abs(cm.chirality * cm.chirality - id);
  const CMat &c = cm.conj_matrix;
  const CMat cinv = c.adjoint();
  r.conj_unitary = max_abs(c * c.adjoint() - id);
  r.j_square = max_abs(c * c.conjugate() - double(cm.ko.epsilon) * id);
  for (const auto &g : cm.gammas)
    r.j_gamma = std::max(r.j_gamma, max_abs(c * g.conjugate() * cinv + g));
  r.j_chirality = max_abs(c * cm.chirality.conjugate() * cinv -
                          double(cm.ko.epsilon_second) * cm.chirality);
  return r;
}

} // namespace fluxtriple
