#pragma once

#include <string>
#include <vector>

#include "nga/common.hpp"

namespace nga {

/// A finite group given by its Cayley table. Elements are dense indices
/// 0..n-1 and index 0 is always the identity; inverse lookups are O(1).
class FiniteGroup {
 public:
  /// Defaults to the trivial group, so containing types stay default-constructible.
  FiniteGroup() : n_(1), cayley_{0}, inverse_{0}, labels_{"e"} {}

  int order() const { return n_; }
  int identity() const { return 0; }
  int mul(int g, int h) const { return cayley_[static_cast<size_t>(g) * n_ + h]; }
  int inv(int g) const { return inverse_[g]; }
  const std::string& label(int g) const { return labels_[g]; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::vector<std::vector<int>> cayley_table() const {
    std::vector<std::vector<int>> t(n_, std::vector<int>(n_));
    for (int g = 0; g < n_; ++g)
      for (int h = 0; h < n_; ++h) t[g][h] = mul(g, h);
    return t;
  }

  friend FiniteGroup make_group(const std::vector<std::vector<int>>&,
                                std::vector<std::string>);

 private:
  int n_ = 0;
  std::vector<int> cayley_;  // flat n*n, row g, column h
  std::vector<int> inverse_;
  std::vector<std::string> labels_;
};

/// Validates a Cayley table and derives identity and inverse tables.
/// All four axioms are checked; associativity is the O(n^3) scan and is
/// capped at n <= 256.
inline FiniteGroup make_group(const std::vector<std::vector<int>>& cayley,
                              std::vector<std::string> labels = {}) {
  const int n = static_cast<int>(cayley.size());
  if (n == 0) throw AxiomViolation(AxiomViolation::Axiom::Identity, "empty Cayley table");
  if (n > 256) {
    throw DimensionTooLarge("group order " + std::to_string(n) +
                            " exceeds the associativity-check cap of 256");
  }
  for (int g = 0; g < n; ++g) {
    if (static_cast<int>(cayley[g].size()) != n) {
      throw AxiomViolation(AxiomViolation::Axiom::Closure,
                           "Cayley table row " + std::to_string(g) + " has " +
                               std::to_string(cayley[g].size()) + " entries, expected " +
                               std::to_string(n));
    }
    for (int h = 0; h < n; ++h) {
      if (cayley[g][h] < 0 || cayley[g][h] >= n) {
        throw AxiomViolation(AxiomViolation::Axiom::Closure,
                             "entry (" + std::to_string(g) + "," + std::to_string(h) +
                                 ") = " + std::to_string(cayley[g][h]) + " is outside [0," +
                                 std::to_string(n) + ")");
      }
    }
  }

  // Identity must sit at index 0; that convention keeps serialized tables canonical.
  for (int g = 0; g < n; ++g) {
    if (cayley[0][g] != g || cayley[g][0] != g) {
      // Maybe the table is a group with the identity elsewhere; say so if it is.
      for (int e = 1; e < n; ++e) {
        bool is_id = true;
        for (int h = 0; h < n && is_id; ++h)
          is_id = cayley[e][h] == h && cayley[h][e] == h;
        if (is_id) {
          throw AxiomViolation(AxiomViolation::Axiom::Identity,
                               "identity element is at index " + std::to_string(e) +
                                   "; relabel so the identity is index 0");
        }
      }
      throw AxiomViolation(AxiomViolation::Axiom::Identity,
                           "index 0 is not an identity (fails at element " +
                               std::to_string(g) + ") and no other element is one");
    }
  }

  std::vector<int> inverse(n, -1);
  for (int g = 0; g < n; ++g) {
    for (int h = 0; h < n; ++h) {
      if (cayley[g][h] == 0 && cayley[h][g] == 0) {
        inverse[g] = h;
        break;
      }
    }
    if (inverse[g] < 0) {
      throw AxiomViolation(AxiomViolation::Axiom::Inverse,
                           "element " + std::to_string(g) + " has no two-sided inverse");
    }
  }

  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        if (cayley[cayley[a][b]][c] != cayley[a][cayley[b][c]]) {
          throw AxiomViolation(AxiomViolation::Axiom::Associativity,
                               "(a*b)*c != a*(b*c) for a=" + std::to_string(a) +
                                   " b=" + std::to_string(b) + " c=" + std::to_string(c));
        }

  if (labels.empty()) {
    labels.resize(n);
    for (int g = 0; g < n; ++g) labels[g] = "g" + std::to_string(g);
  }
  if (static_cast<int>(labels.size()) != n) {
    throw AxiomViolation(AxiomViolation::Axiom::Closure,
                         "label list has " + std::to_string(labels.size()) +
                             " entries for a group of order " + std::to_string(n));
  }

  FiniteGroup G;
  G.n_ = n;
  G.cayley_.resize(static_cast<size_t>(n) * n);
  for (int g = 0; g < n; ++g)
    for (int h = 0; h < n; ++h) G.cayley_[static_cast<size_t>(g) * n + h] = cayley[g][h];
  G.inverse_ = std::move(inverse);
  G.labels_ = std::move(labels);
  return G;
}

inline FiniteGroup cyclic_group(int n) {
  if (n < 1) throw UnknownGroup("cyclic group needs order >= 1");
  std::vector<std::vector<int>> t(n, std::vector<int>(n));
  for (int g = 0; g < n; ++g)
    for (int h = 0; h < n; ++h) t[g][h] = (g + h) % n;
  std::vector<std::string> labels(n);
  labels[0] = "e";
  for (int g = 1; g < n; ++g) labels[g] = n == 2 ? "r" : "g^" + std::to_string(g);
  return make_group(t, labels);
}

inline FiniteGroup klein_four_group() {
  // {e,a,b,c} with a^2 = b^2 = c^2 = e and ab = c; XOR on two bits.
  std::vector<std::vector<int>> t(4, std::vector<int>(4));
  for (int g = 0; g < 4; ++g)
    for (int h = 0; h < 4; ++h) t[g][h] = g ^ h;
  return make_group(t, {"e", "a", "b", "c"});
}

inline FiniteGroup quaternion_group() {
  // Elements encoded as (axis, sign): index = 2*axis + (sign < 0), with the
  // axis order 1, i, j, k. Products come from the quaternion unit relations
  // i^2 = j^2 = k^2 = ijk = -1.
  struct Unit {
    int axis;
    int sign;
  };
  auto unit_mul = [](int a, int b) -> Unit {
    if (a == 0) return {b, +1};
    if (b == 0) return {a, +1};
    if (a == b) return {0, -1};
    // i*j=k, j*k=i, k*i=j and anti-commutativity for the rest.
    static const int axis3[4][4] = {{0, 0, 0, 0}, {0, 0, 3, 2}, {0, 3, 0, 1}, {0, 2, 1, 0}};
    static const int sign3[4][4] = {{1, 1, 1, 1}, {1, 1, 1, -1}, {1, -1, 1, 1}, {1, 1, -1, 1}};
    return {axis3[a][b], sign3[a][b]};
  };
  std::vector<std::vector<int>> t(8, std::vector<int>(8));
  for (int g = 0; g < 8; ++g) {
    for (int h = 0; h < 8; ++h) {
      int ga = g / 2, gs = g % 2 ? -1 : +1;
      int ha = h / 2, hs = h % 2 ? -1 : +1;
      Unit u = unit_mul(ga, ha);
      int sign = gs * hs * u.sign;
      t[g][h] = 2 * u.axis + (sign < 0 ? 1 : 0);
    }
  }
  return make_group(t, {"e", "-e", "i", "-i", "j", "-j", "k", "-k"});
}

/// Named groups: "Z2", "K4", "Q8", and cyclic "Zn(<n>)" or "Z<n>".
inline FiniteGroup builtin_group(const std::string& name) {
  if (name == "K4") return klein_four_group();
  if (name == "Q8") return quaternion_group();
  if (name.size() > 1 && name[0] == 'Z') {
    std::string num = name.substr(1);
    if (num.size() > 2 && num.front() == 'n' && num[1] == '(' && num.back() == ')')
      num = num.substr(2, num.size() - 3);
    try {
      size_t pos = 0;
      int n = std::stoi(num, &pos);
      if (pos == num.size() && n >= 1) return cyclic_group(n);
    } catch (const std::exception&) {
    }
  }
  throw UnknownGroup("unknown group name '" + name +
                     "' (expected Z2, Zn(<n>), K4, or Q8)");
}

/// An action of a finite group on {0,...,set_size-1}: one permutation per
/// element, respecting identity and composition.
struct FiniteGAction {
  FiniteGroup group;
  int set_size = 0;
  std::vector<std::vector<int>> perm;  // perm[g][s] = g . s

  int apply(int g, int s) const { return perm[g][s]; }
};

struct ActionViolation {
  enum class Kind { Shape, Bijection, Identity, Composition };
  Kind kind;
  int g = -1;
  int h = -1;
  std::string what;
};

struct ActionReport {
  std::vector<ActionViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Exhaustively checks perm[e] = id and perm[gh] = perm[g] o perm[h];
/// violations are report content, not faults.
inline ActionReport validate_action(const FiniteGAction& A) {
  ActionReport rep;
  const int n = A.group.order();
  const int m = A.set_size;
  using K = ActionViolation::Kind;
  if (static_cast<int>(A.perm.size()) != n) {
    rep.violations.push_back({K::Shape, -1, -1,
                              "permutation table has " + std::to_string(A.perm.size()) +
                                  " rows for a group of order " + std::to_string(n)});
    return rep;
  }
  for (int g = 0; g < n; ++g) {
    if (static_cast<int>(A.perm[g].size()) != m) {
      rep.violations.push_back({K::Shape, g, -1,
                                "perm[" + std::to_string(g) + "] has " +
                                    std::to_string(A.perm[g].size()) + " entries, expected " +
                                    std::to_string(m)});
      continue;
    }
    std::vector<char> seen(m, 0);
    for (int s = 0; s < m; ++s) {
      int t = A.perm[g][s];
      if (t < 0 || t >= m || seen[t]) {
        rep.violations.push_back({K::Bijection, g, -1,
                                  "perm[" + std::to_string(g) + "] is not a bijection"});
        break;
      }
      seen[t] = 1;
    }
  }
  if (!rep.violations.empty()) return rep;

  const int e = A.group.identity();
  for (int s = 0; s < m; ++s) {
    if (A.perm[e][s] != s) {
      rep.violations.push_back({K::Identity, e, -1, "perm[e] moves point " + std::to_string(s)});
      break;
    }
  }
  for (int g = 0; g < n; ++g) {
    for (int h = 0; h < n; ++h) {
      const int gh = A.group.mul(g, h);
      for (int s = 0; s < m; ++s) {
        if (A.perm[gh][s] != A.perm[g][A.perm[h][s]]) {
          rep.violations.push_back({K::Composition, g, h,
                                    "perm[gh] != perm[g] o perm[h] for g=" + std::to_string(g) +
                                        " h=" + std::to_string(h) + " at s=" + std::to_string(s)});
          break;
        }
      }
    }
  }
  return rep;
}

/// Builds a validated action from an explicit permutation table.
inline FiniteGAction make_action(FiniteGroup group, int set_size,
                                 std::vector<std::vector<int>> perm) {
  FiniteGAction A{std::move(group), set_size, std::move(perm)};
  ActionReport rep = validate_action(A);
  if (!rep.ok()) throw InvalidAction(rep.violations.front().what);
  return A;
}

/// The action of G on itself by left multiplication: perm[g](s) = g*s.
inline FiniteGAction left_multiplication_action(const FiniteGroup& G) {
  const int n = G.order();
  std::vector<std::vector<int>> perm(n, std::vector<int>(n));
  for (int g = 0; g < n; ++g)
    for (int s = 0; s < n; ++s) perm[g][s] = G.mul(g, s);
  return FiniteGAction{G, n, std::move(perm)};
}

namespace detail {

/// Test hook: builds an action without validation, e.g. for negative controls
/// with deliberately corrupted wiring. Not part of the public construction path.
inline FiniteGAction unchecked_action(FiniteGroup group, int set_size,
                                      std::vector<std::vector<int>> perm) {
  return FiniteGAction{std::move(group), set_size, std::move(perm)};
}

}  // namespace detail

}  // namespace nga
