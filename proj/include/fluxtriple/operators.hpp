#pragma once
// Symbolic operators on L^2(T, B (x) S): sums of a kinetic part gamma^mu k_mu
// and terms G (x) L(s) or G (x) R(s) with G a spinor matrix and s a section.
// The same term application drives exact evaluation on unbounded sparse
// fields and assembly of truncated sparse matrices.

#include "fluxtriple/bundle.hpp"

#include <unordered_map>

namespace fluxtriple {

enum class Side { Left, Right };

struct SpinTerm {
  CMat spin;
  Side side = Side::Left;
  AlgebraSection section;
};

struct FieldOperator {
  bool kinetic = false;
  std::vector<SpinTerm> terms;

  FieldOperator &operator+=(const FieldOperator &o) {
    kinetic = kinetic || o.kinetic;
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
  }
};

//! Unbounded coefficient field keyed by packed states.
using SparseField = std::unordered_map<std::uint64_t, cplx>;

inline double field_norm(const SparseField &f) {
  double s = 0.0;
  for (const auto &kv : f) s += std::norm(kv.second);
  return std::sqrt(s);
}

inline cplx field_inner(const SparseField &a, const SparseField &b) {
  cplx s = 0.0;
  for (const auto &[k, v] : a) {
    auto it = b.find(k);
    if (it != b.end()) s += std::conj(v) * it->second;
  }
  return s;
}

inline SparseField field_combine(const SparseField &a, cplx ca, const SparseField &b, cplx cb) {
  SparseField out;
  for (const auto &[k, v] : a) out[k] += ca * v;
  for (const auto &[k, v] : b) out[k] += cb * v;
  return out;
}

inline SparseField field_from_vector(const Lattice &lat, const CVec &v) {
  SparseField f;
  for (int i = 0; i < lat.dim(); ++i)
    if (v[i] != 0.0) f[lat.states[i]] = v[i];
  return f;
}

inline CVec field_to_vector(const Lattice &lat, const SparseField &f) {
  CVec v = CVec::Zero(lat.dim());
  for (const auto &[k, c] : f) {
    int i = lat.find(k);
    if (i >= 0) v[i] = c;
  }
  return v;
}

//! Precomputed form of a FieldOperator for fast application.
class CompiledOperator {
public:
  CompiledOperator(const FieldOperator &op, const Lattice &lat, const CliffordModule &cm,
                   TwistPtr twist)
      : twist_(std::move(twist)), lat_(&lat), kinetic_(op.kinetic), spinor_dim_(cm.spinor_dim) {
    if (kinetic_) gammas_ = cm.gammas;
    for (const auto &t : op.terms) {
      if (t.section.terms.empty()) continue;
      if (!t.section.twist->compatible(*twist_))
        throw InvalidInput("operator term carries an incompatible twist");
      Compiled c;
      c.left = t.side == Side::Left;
      c.spin.resize(spinor_dim_);
      for (int s = 0; s < spinor_dim_; ++s)
        for (int sp = 0; sp < spinor_dim_; ++sp)
          if (t.spin(sp, s) != 0.0) c.spin[s].emplace_back(sp, t.spin(sp, s));
      for (const auto &[key, v] : t.section.terms)
        if (v != 0.0) c.modes.push_back({keys::sector(key), keys::momentum(key), v});
      terms_.push_back(std::move(c));
    }
  }

  template <class Sink>
  void apply_state(std::uint64_t key, cplx v, Sink &&sink) const {
    const int a = keys::sector(key), s = keys::spin(key);
    const IVec4 m = keys::momentum(key);
    const TwistData &tw = *twist_;
    if (kinetic_) {
      auto k = lat_->momentum(m);
      for (int sp = 0; sp < spinor_dim_; ++sp) {
        cplx g = 0.0;
        for (std::size_t mu = 0; mu < gammas_.size(); ++mu) g += gammas_[mu](sp, s) * k[mu];
        if (g != 0.0) sink(keys::with_spin(key, sp), g * v);
      }
    }
    for (const auto &c : terms_) {
      if (c.spin[s].empty()) continue;
      for (const auto &md : c.modes) {
        int out;
        cplx ph;
        if (c.left) {
          out = tw.compose(md.sector, a);
          ph = tw.product_phase(md.sector, a);
        } else {
          out = tw.compose(a, md.sector);
          ph = tw.product_phase(a, md.sector);
        }
        IVec4 mm;
        for (int mu = 0; mu < 4; ++mu) mm[mu] = m[mu] + md.m[mu];
        const cplx w = md.c * ph * v;
        for (const auto &[sp, g] : c.spin[s]) sink(keys::pack(out, mm, sp), g * w);
      }
    }
  }

  SparseField apply(const SparseField &f) const {
    SparseField out;
    out.reserve(f.size() * 4);
    for (const auto &[k, v] : f)
      apply_state(k, v, [&](std::uint64_t kk, cplx x) { out[kk] += x; });
    return out;
  }

  //! Truncated matrix P op P on `target` columns/rows.
  SpMat matrix(const Lattice &target) const {
    std::vector<Triplet> trip;
    for (int j = 0; j < target.dim(); ++j)
      apply_state(target.states[j], 1.0, [&](std::uint64_t kk, cplx x) {
        int i = target.find(kk);
        if (i >= 0) trip.emplace_back(i, j, x);
      });
    SpMat m(target.dim(), target.dim());
    m.setFromTriplets(trip.begin(), trip.end());
    m.prune(cplx(0.0), 0.0);
    return m;
  }

private:
  struct Mode {
    int sector;
    IVec4 m;
    cplx c;
  };
  struct Compiled {
    bool left = true;
    std::vector<std::vector<std::pair<int, cplx>>> spin;
    std::vector<Mode> modes;
  };
  TwistPtr twist_;
  const Lattice *lat_;
  bool kinetic_;
  int spinor_dim_;
  std::vector<CMat> gammas_;
  std::vector<Compiled> terms_;
};

inline CMat spin_identity(const CliffordModule &cm) {
  return CMat::Identity(cm.spinor_dim, cm.spinor_dim);
}

//! a (x) 1.
inline FieldOperator left_multiplication(const AlgebraSection &a, const CliffordModule &cm) {
  return FieldOperator{false, {{spin_identity(cm), Side::Left, a}}};
}

//! b^0 = J b^* J^{-1}, acting as right multiplication by b.
inline FieldOperator right_multiplication(const AlgebraSection &b, const CliffordModule &cm) {
  return FieldOperator{false, {{spin_identity(cm), Side::Right, b}}};
}

//! -i gamma^mu (d_mu + ad w_mu).
inline FieldOperator dirac_operator(const std::vector<AlgebraSection> &w, const CliffordModule &cm) {
  FieldOperator op;
  op.kinetic = true;
  for (int mu = 0; mu < int(w.size()); ++mu) {
    if (w[mu].terms.empty()) continue;
    op.terms.push_back({-kI * cm.gammas[mu], Side::Left, w[mu]});
    op.terms.push_back({kI * cm.gammas[mu], Side::Right, w[mu]});
  }
  return op;
}

//! gamma^mu (x) L(A_mu).
inline FieldOperator clifford_left(const std::vector<AlgebraSection> &a, const CliffordModule &cm) {
  FieldOperator op;
  for (int mu = 0; mu < int(a.size()); ++mu)
    if (!a[mu].terms.empty()) op.terms.push_back({cm.gammas[mu], Side::Left, a[mu]});
  return op;
}

//! Random probe supported on `count` random lattice states.
inline SparseField random_probe(const Lattice &lat, std::mt19937_64 &rng, int count) {
  std::uniform_int_distribution<int> pick(0, lat.dim() - 1);
  std::normal_distribution<double> g;
  SparseField f;
  for (int i = 0; i < count; ++i) f[lat.states[pick(rng)]] += cplx(g(rng), g(rng));
  return f;
}

} // namespace fluxtriple
