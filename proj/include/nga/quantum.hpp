#pragma once

#include <array>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "nga/common.hpp"
#include "nga/group.hpp"
#include "nga/rng.hpp"
#include "nga/train.hpp"

namespace nga {

using cplx = std::complex<double>;

/// Normalized single-qubit state alpha|0> + beta|1>, stored as 4 reals
/// (re0, im0, re1, im1).
struct QubitState {
  cplx alpha{1.0, 0.0};
  cplx beta{0.0, 0.0};

  std::array<double, 4> reals() const {
    return {alpha.real(), alpha.imag(), beta.real(), beta.imag()};
  }
  double norm_sq() const { return std::norm(alpha) + std::norm(beta); }
};

inline QubitState make_state(cplx alpha, cplx beta) {
  QubitState s{alpha, beta};
  if (std::abs(s.norm_sq() - 1.0) > 1e-12)
    throw Error("qubit state is not normalized: |alpha|^2+|beta|^2 = " +
                std::to_string(s.norm_sq()));
  return s;
}

inline QubitState state_from_reals(const std::array<double, 4>& r) {
  return make_state({r[0], r[1]}, {r[2], r[3]});
}

/// 2x2 unitary, row-major.
struct Gate {
  std::array<cplx, 4> u{};
  std::string label;
};

inline Gate make_gate(std::array<cplx, 4> u, std::string label) {
  // unitarity: U dagger U = I
  const cplx a = u[0], b = u[1], c = u[2], d = u[3];
  const cplx g00 = std::conj(a) * a + std::conj(c) * c;
  const cplx g01 = std::conj(a) * b + std::conj(c) * d;
  const cplx g11 = std::conj(b) * b + std::conj(d) * d;
  if (std::abs(g00 - 1.0) > 1e-12 || std::abs(g11 - 1.0) > 1e-12 || std::abs(g01) > 1e-12)
    throw Error("gate '" + label + "' is not unitary");
  return Gate{u, std::move(label)};
}

inline Gate gate_mul(const Gate& x, const Gate& y, std::string label = "") {
  std::array<cplx, 4> u;
  u[0] = x.u[0] * y.u[0] + x.u[1] * y.u[2];
  u[1] = x.u[0] * y.u[1] + x.u[1] * y.u[3];
  u[2] = x.u[2] * y.u[0] + x.u[3] * y.u[2];
  u[3] = x.u[2] * y.u[1] + x.u[3] * y.u[3];
  return Gate{u, std::move(label)};
}

inline bool gate_close(const Gate& x, const Gate& y, double tol) {
  for (int k = 0; k < 4; ++k)
    if (std::abs(x.u[k] - y.u[k]) > tol) return false;
  return true;
}

inline QubitState apply_gate(const Gate& g, const QubitState& s) {
  QubitState out;
  out.alpha = g.u[0] * s.alpha + g.u[1] * s.beta;
  out.beta = g.u[2] * s.alpha + g.u[3] * s.beta;
  return out;
}

enum class Axis { X, Y, Z };

/// R_axis(theta) = exp(-i theta sigma_axis / 2); at theta = pi this is
/// -i sigma_axis, so R(pi)^2 = -I and the generated group is Q8 rather than
/// Z2 x Z2 x Z2.
inline Gate rotation_gate(Axis axis, double angle) {
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  const cplx i{0.0, 1.0};
  switch (axis) {
    case Axis::X:
      return make_gate({cplx{c, 0}, -i * s, -i * s, cplx{c, 0}}, "Rx");
    case Axis::Y:
      return make_gate({cplx{c, 0}, cplx{-s, 0}, cplx{s, 0}, cplx{c, 0}}, "Ry");
    default:
      return make_gate({std::exp(-i * (angle / 2.0)), cplx{0, 0}, cplx{0, 0},
                        std::exp(i * (angle / 2.0))},
                       "Rz");
  }
}

inline Gate identity_gate() { return make_gate({cplx{1, 0}, {}, {}, cplx{1, 0}}, "I"); }

/// The closure of a generator set under multiplication, its Cayley table,
/// and a verified isomorphism onto the builtin Q8.
struct GateGroup {
  std::vector<Gate> gates;  // identity first; matrices distinct up to tol
  FiniteGroup table;        // Cayley table of the matrix group
  std::vector<int> iso;     // iso[gate index] = builtin Q8 element index
  FiniteGroup q8;           // the isomorphism target

  int element_of(int gate_index) const { return iso[gate_index]; }
  /// gate index realizing builtin element g
  int gate_of(int element) const {
    for (size_t i = 0; i < iso.size(); ++i)
      if (iso[i] == element) return static_cast<int>(i);
    throw Error("element has no preimage in the gate group");
  }
};

namespace detail {

/// Multiplicative order of element g in a Cayley table.
inline int element_order(const FiniteGroup& G, int g) {
  int x = g, ord = 1;
  while (x != G.identity()) {
    x = G.mul(x, g);
    ++ord;
    if (ord > G.order()) throw Error("element order exceeded group order");
  }
  return ord;
}

/// Backtracking search for a group isomorphism phi: A -> B fixing the
/// identity, pruned by element order. Returns empty if none exists.
inline std::vector<int> find_isomorphism(const FiniteGroup& A, const FiniteGroup& B) {
  const int n = A.order();
  if (B.order() != n) return {};
  std::vector<int> ord_a(n), ord_b(n);
  for (int g = 0; g < n; ++g) {
    ord_a[g] = element_order(A, g);
    ord_b[g] = element_order(B, g);
  }
  std::vector<int> phi(n, -1);
  std::vector<char> used(n, 0);
  phi[A.identity()] = B.identity();
  used[B.identity()] = 1;

  auto consistent = [&](int g) {
    for (int h = 0; h < n; ++h) {
      if (phi[h] < 0) continue;
      const int gh = A.mul(g, h), hg = A.mul(h, g);
      if (phi[gh] >= 0 && phi[gh] != B.mul(phi[g], phi[h])) return false;
      if (phi[hg] >= 0 && phi[hg] != B.mul(phi[h], phi[g])) return false;
    }
    return true;
  };

  std::function<bool(int)> assign = [&](int g) -> bool {
    while (g < n && phi[g] >= 0) ++g;
    if (g == n) return true;
    for (int b = 0; b < n; ++b) {
      if (used[b] || ord_b[b] != ord_a[g]) continue;
      phi[g] = b;
      used[b] = 1;
      if (consistent(g) && assign(g + 1)) return true;
      phi[g] = -1;
      used[b] = 0;
    }
    return false;
  };
  if (!assign(0)) return {};
  return phi;
}

}  // namespace detail

/// Closes the generators under multiplication (matrices equal within tol are
/// identified), builds the Cayley table, and finds an isomorphism onto the
/// builtin Q8 by pruned brute force. Gate labels are rewritten to the Q8
/// labels of their images.
inline GateGroup generate_gate_group(const std::vector<Gate>& generators, double tol = 1e-9) {
  constexpr int kMaxClosure = 64;
  std::vector<Gate> elems{identity_gate()};
  auto find = [&](const Gate& g) -> int {
    for (size_t i = 0; i < elems.size(); ++i)
      if (gate_close(elems[i], g, tol)) return static_cast<int>(i);
    return -1;
  };
  for (const Gate& g : generators) {
    make_gate(g.u, g.label);  // revalidate unitarity
    if (find(g) < 0) elems.push_back(g);
  }
  // close under multiplication, iterating to a fixpoint
  bool grew = true;
  while (grew) {
    grew = false;
    const size_t sz = elems.size();
    for (size_t i = 0; i < sz; ++i) {
      for (size_t j = 0; j < sz; ++j) {
        const Gate prod = gate_mul(elems[i], elems[j]);
        if (find(prod) < 0) {
          elems.push_back(prod);
          grew = true;
          if (static_cast<int>(elems.size()) > kMaxClosure)
            throw ClosureTooLarge("closure exceeded " + std::to_string(kMaxClosure) +
                                  " elements; generators do not span a small finite group");
        }
      }
    }
  }

  const int n = static_cast<int>(elems.size());
  std::vector<std::vector<int>> cayley(n, std::vector<int>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int k = find(gate_mul(elems[i], elems[j]));
      if (k < 0) throw Error("matrix product escaped the closed set; tol too tight?");
      cayley[i][j] = k;
    }
  }

  GateGroup gg;
  gg.q8 = quaternion_group();
  gg.table = make_group(cayley);  // validates the group axioms
  gg.iso = detail::find_isomorphism(gg.table, gg.q8);
  if (gg.iso.empty())
    throw NotIsomorphic("the generated gate group (order " + std::to_string(n) +
                        ") is not isomorphic to Q8");
  gg.gates = std::move(elems);
  for (int i = 0; i < n; ++i) gg.gates[i].label = gg.q8.label(gg.iso[i]);
  return gg;
}

/// Haar-uniform random state: 4 standard normals as a complex 2-vector,
/// normalized.
inline QubitState random_state(Rng& rng) {
  cplx a{rng.gaussian(), rng.gaussian()};
  cplx b{rng.gaussian(), rng.gaussian()};
  double n = std::sqrt(std::norm(a) + std::norm(b));
  while (n == 0.0) {  // astronomically unlikely
    a = {rng.gaussian(), rng.gaussian()};
    b = {rng.gaussian(), rng.gaussian()};
    n = std::sqrt(std::norm(a) + std::norm(b));
  }
  return QubitState{a / n, b / n};
}

inline QubitState random_state(uint64_t seed) {
  Rng rng(seed);
  return random_state(rng);
}

/// Bloch vector (2 Re(conj(a) b), 2 Im(conj(a) b), |a|^2 - |b|^2).
inline std::array<double, 3> bloch_coordinates(const QubitState& s) {
  const cplx ab = std::conj(s.alpha) * s.beta;
  return {2.0 * ab.real(), 2.0 * ab.imag(), std::norm(s.alpha) - std::norm(s.beta)};
}

/// sqrt(1 - |<psi|phi>|^2); zero exactly when the states agree up to a
/// global phase. Evaluated as |psi_a phi_b - psi_b phi_a|, which is the same
/// value for unit states but stays accurate near zero where the direct form
/// loses half the significand to cancellation.
inline double phase_invariant_distance(const QubitState& psi, const QubitState& phi) {
  return std::abs(psi.alpha * phi.beta - psi.beta * phi.alpha);
}

/// Placement of the 4 state reals inside the network input; every other
/// coordinate is zero on input, and the same 4 coordinates are the readout.
struct Embedding {
  int dim = 0;
  std::array<int, 4> coords{0, 1, 2, 3};

  Vec embed(const QubitState& s) const {
    Vec x(dim, 0.0);
    const auto r = s.reals();
    for (int k = 0; k < 4; ++k) {
      if (coords[k] < 0 || coords[k] >= dim)
        throw DimensionMismatch("embedding coordinate outside [0,dim)");
      x[coords[k]] = r[k];
    }
    return x;
  }

  std::vector<int> mask() const { return {coords[0], coords[1], coords[2], coords[3]}; }
};

/// One sample per (random state, group element): input embeds psi, target is
/// U psi for the matrix realizing that element. Per-state child seeds keep
/// generation order-independent.
inline std::vector<Sample> make_dataset(const GateGroup& gg, int num_states, uint64_t seed,
                                        const Embedding& embedding) {
  if (num_states < 1) throw Error("make_dataset: num_states must be >= 1");
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(num_states) * gg.gates.size());
  for (int i = 0; i < num_states; ++i) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
    const QubitState psi = random_state(rng);
    const Vec input = embedding.embed(psi);
    for (size_t j = 0; j < gg.gates.size(); ++j) {
      const QubitState tpsi = apply_gate(gg.gates[j], psi);
      const auto r = tpsi.reals();
      out.push_back(Sample{gg.iso[j], input, Vec(r.begin(), r.end())});
    }
  }
  return out;
}

}  // namespace nga
