#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nga {

using Vec = std::vector<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A Cayley table failed one of the four group axioms.
struct AxiomViolation : Error {
  enum class Axiom { Closure, Identity, Inverse, Associativity };
  Axiom axiom;
  AxiomViolation(Axiom a, const std::string& msg) : Error(msg), axiom(a) {}
};

struct UnknownGroup : Error {
  using Error::Error;
};

/// A permutation table does not define a valid group action.
struct InvalidAction : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct UnknownElement : Error {
  using Error::Error;
};

struct DimensionTooLarge : Error {
  using Error::Error;
};

struct ClosureTooLarge : Error {
  using Error::Error;
};

struct NotIsomorphic : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Feature-major view over a block of samples: row(f) is a contiguous
/// batch-length array of feature f across the block.
struct FView {
  double* ptr = nullptr;
  int dim = 0;
  int batch = 0;
  double* row(int f) const { return ptr + static_cast<size_t>(f) * batch; }
  FView rows(int first, int count) const {
    return FView{ptr + static_cast<size_t>(first) * batch, count, batch};
  }
  size_t size() const { return static_cast<size_t>(dim) * batch; }
};

/// Owning feature-major block.
struct FBlock {
  Vec data;
  int dim = 0;
  int batch = 0;
  void resize(int d, int b) {
    dim = d;
    batch = b;
    data.resize(static_cast<size_t>(d) * b);
  }
  FView view() { return FView{data.data(), dim, batch}; }
};

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double inf_dist(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("inf_dist: size mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline void require_dim(size_t got, size_t want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(want) +
                            " coordinates, got " + std::to_string(got));
  }
}

}  // namespace nga
