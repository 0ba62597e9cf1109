#pragma once

#include <span>
#include <variant>
#include <vector>

#include "nga/common.hpp"
#include "nga/mlp.hpp"
#include "nga/rng.hpp"

namespace nga {

/// NICE additive coupling: forward (x1, x2) -> (x1, x2 + m(x1)) on fixed
/// halves, inverse subtracts the same values. Unit-triangular Jacobian, so
/// log|det J| = 0 identically.
struct CouplingLayer {
  int dim = 0;
  Mlp conditioner;  // maps first half to an offset for the second half

  static CouplingLayer make(int dim, const std::vector<int>& hidden, Rng& rng) {
    if (dim % 2 != 0) throw DimensionMismatch("coupling layer requires even dim, got " + std::to_string(dim));
    std::vector<int> widths;
    widths.push_back(dim / 2);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(dim / 2);
    return CouplingLayer{dim, Mlp::glorot(std::move(widths), rng)};
  }
};

/// Fixed permutation of coordinates, sampled once at construction and stored
/// with the model. forward: y[i] = x[perm[i]].
struct PermutationLayer {
  std::vector<int> perm;
  std::vector<int> inv;

  static PermutationLayer make(int dim, Rng& rng) {
    PermutationLayer p;
    p.perm = rng.permutation(dim);
    p.set_inverse();
    return p;
  }

  static PermutationLayer from_perm(std::vector<int> perm) {
    PermutationLayer p;
    p.perm = std::move(perm);
    p.set_inverse();
    return p;
  }

  void set_inverse() {
    inv.assign(perm.size(), 0);
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  }
};

/// Fixed invertible linear map, for hand-set nets in worked examples and
/// tests. Carries no trainable parameters; trained architectures use only
/// coupling and permutation layers.
struct LinearLayer {
  int dim = 0;
  Vec mat;      // row-major dim x dim
  Vec inv_mat;  // precomputed inverse

  static LinearLayer make(int dim, Vec matrix);
};

using Layer = std::variant<CouplingLayer, PermutationLayer, LinearLayer>;

namespace detail {

/// Gauss-Jordan inverse with partial pivoting; throws on singular input.
inline Vec invert_matrix(int n, const Vec& m) {
  Vec a = m;
  Vec inv(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) inv[static_cast<size_t>(i) * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[static_cast<size_t>(r) * n + col]) > std::abs(a[static_cast<size_t>(piv) * n + col]))
        piv = r;
    if (a[static_cast<size_t>(piv) * n + col] == 0.0)
      throw Error("linear layer matrix is singular");
    if (piv != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(a[static_cast<size_t>(piv) * n + c], a[static_cast<size_t>(col) * n + c]);
        std::swap(inv[static_cast<size_t>(piv) * n + c], inv[static_cast<size_t>(col) * n + c]);
      }
    }
    const double d = a[static_cast<size_t>(col) * n + col];
    for (int c = 0; c < n; ++c) {
      a[static_cast<size_t>(col) * n + c] /= d;
      inv[static_cast<size_t>(col) * n + c] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[static_cast<size_t>(r) * n + col];
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        a[static_cast<size_t>(r) * n + c] -= f * a[static_cast<size_t>(col) * n + c];
        inv[static_cast<size_t>(r) * n + c] -= f * inv[static_cast<size_t>(col) * n + c];
      }
    }
  }
  return inv;
}

inline void matvec(int n, const Vec& m, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < n; ++r) {
    const double* row = &m[static_cast<size_t>(r) * n];
    double acc = 0.0;
    for (int c = 0; c < n; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

inline void matvec_t(int n, const Vec& m, std::span<const double> x, std::span<double> y) {
  for (int c = 0; c < n; ++c) y[c] = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = &m[static_cast<size_t>(r) * n];
    const double xr = x[r];
    for (int c = 0; c < n; ++c) y[c] += row[c] * xr;
  }
}

}  // namespace detail

inline LinearLayer LinearLayer::make(int dim, Vec matrix) {
  if (static_cast<int>(matrix.size()) != dim * dim)
    throw DimensionMismatch("linear layer matrix must be dim x dim");
  LinearLayer l;
  l.dim = dim;
  l.inv_mat = detail::invert_matrix(dim, matrix);
  l.mat = std::move(matrix);
  return l;
}

/// Per-layer activations recorded by a cached pass; index matches the layer list.
struct NetCache {
  std::vector<MlpCache> mlp;
  Vec half;  // d/2 scratch
  Vec full;  // d scratch
};

struct NetBatchCache {
  std::vector<MlpBatchCache> mlp;
  FBlock half;
  FBlock full;
};

/// A stack of exactly invertible layers sharing one dimension. forward applies
/// layers in order; inverse applies layer inverses in reverse order and is
/// analytic, no iterative solve anywhere.
struct InvertibleNet {
  int dim = 0;
  std::vector<Layer> layers;

  size_t param_count() const {
    size_t n = 0;
    for (const Layer& l : layers)
      if (const auto* c = std::get_if<CouplingLayer>(&l)) n += c->conditioner.param_count();
    return n;
  }

  void write_params(double* out) const {
    for (const Layer& l : layers)
      if (const auto* c = std::get_if<CouplingLayer>(&l)) {
        c->conditioner.write_params(out);
        out += c->conditioner.param_count();
      }
  }

  void read_params(const double* in) {
    for (Layer& l : layers)
      if (auto* c = std::get_if<CouplingLayer>(&l)) {
        c->conditioner.read_params(in);
        in += c->conditioner.param_count();
      }
  }

  void check_dim(size_t got) const { require_dim(got, static_cast<size_t>(dim), "InvertibleNet"); }

  void forward_inplace(std::span<double> x, NetCache& c) const {
    check_dim(x.size());
    c.mlp.resize(layers.size());
    const int half = dim / 2;
    for (size_t i = 0; i < layers.size(); ++i) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[i])) {
        c.half.resize(half);
        cp->conditioner.forward(x.subspan(0, half), c.half, c.mlp[i]);
        for (int k = 0; k < half; ++k) x[half + k] += c.half[k];
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[i])) {
        c.full.assign(x.begin(), x.end());
        for (int k = 0; k < dim; ++k) x[k] = c.full[pm->perm[k]];
      } else {
        const auto& ln = std::get<LinearLayer>(layers[i]);
        c.full.assign(x.begin(), x.end());
        detail::matvec(dim, ln.mat, c.full, x);
      }
    }
  }

  void inverse_inplace(std::span<double> y, NetCache& c) const {
    check_dim(y.size());
    c.mlp.resize(layers.size());
    const int half = dim / 2;
    for (size_t ii = layers.size(); ii-- > 0;) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        c.half.resize(half);
        cp->conditioner.forward(y.subspan(0, half), c.half, c.mlp[ii]);
        for (int k = 0; k < half; ++k) y[half + k] -= c.half[k];
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.assign(y.begin(), y.end());
        for (int k = 0; k < dim; ++k) y[pm->perm[k]] = c.full[k];
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.assign(y.begin(), y.end());
        detail::matvec(dim, ln.inv_mat, c.full, y);
      }
    }
  }

  Vec forward(std::span<const double> x) const {
    Vec y(x.begin(), x.end());
    NetCache c;
    forward_inplace(y, c);
    return y;
  }

  Vec inverse(std::span<const double> y) const {
    Vec x(y.begin(), y.end());
    NetCache c;
    inverse_inplace(x, c);
    return x;
  }

  /// --- batched variants over feature-major blocks (X is dim x batch) ----

  void forward_batch(const FView& X, NetBatchCache& c) const {
    c.mlp.resize(layers.size());
    const int half = dim / 2;
    const int B = X.batch;
    for (size_t i = 0; i < layers.size(); ++i) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[i])) {
        c.half.resize(half, B);
        cp->conditioner.forward_batch(X.rows(0, half), c.half.view(), c.mlp[i]);
        for (int k = 0; k < half; ++k) {
          double* xr = X.row(half + k);
          const double* mk = c.half.view().row(k);
          for (int s = 0; s < B; ++s) xr[s] += mk[s];
        }
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[i])) {
        c.full.resize(dim, B);
        std::copy(X.ptr, X.ptr + X.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k)
          std::copy(c.full.view().row(pm->perm[k]), c.full.view().row(pm->perm[k]) + B, X.row(k));
      } else {
        const auto& ln = std::get<LinearLayer>(layers[i]);
        c.full.resize(dim, B);
        std::copy(X.ptr, X.ptr + X.size(), c.full.data.begin());
        for (int r = 0; r < dim; ++r) {
          double* xr = X.row(r);
          for (int s = 0; s < B; ++s) xr[s] = 0.0;
          for (int k = 0; k < dim; ++k) {
            const double w = ln.mat[static_cast<size_t>(r) * dim + k];
            const double* fk = c.full.view().row(k);
            for (int s = 0; s < B; ++s) xr[s] += w * fk[s];
          }
        }
      }
    }
  }

  void inverse_batch(const FView& Y, NetBatchCache& c) const {
    c.mlp.resize(layers.size());
    const int half = dim / 2;
    const int B = Y.batch;
    for (size_t ii = layers.size(); ii-- > 0;) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        c.half.resize(half, B);
        cp->conditioner.forward_batch(Y.rows(0, half), c.half.view(), c.mlp[ii]);
        for (int k = 0; k < half; ++k) {
          double* yr = Y.row(half + k);
          const double* mk = c.half.view().row(k);
          for (int s = 0; s < B; ++s) yr[s] -= mk[s];
        }
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.resize(dim, B);
        std::copy(Y.ptr, Y.ptr + Y.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k)
          std::copy(c.full.view().row(k), c.full.view().row(k) + B, Y.row(pm->perm[k]));
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.resize(dim, B);
        std::copy(Y.ptr, Y.ptr + Y.size(), c.full.data.begin());
        for (int r = 0; r < dim; ++r) {
          double* yr = Y.row(r);
          for (int s = 0; s < B; ++s) yr[s] = 0.0;
          for (int k = 0; k < dim; ++k) {
            const double w = ln.inv_mat[static_cast<size_t>(r) * dim + k];
            const double* fk = c.full.view().row(k);
            for (int s = 0; s < B; ++s) yr[s] += w * fk[s];
          }
        }
      }
    }
  }

  void backprop_forward_batch(NetBatchCache& c, const FView& G, std::span<double> grad) const {
    const int half = dim / 2;
    const int B = G.batch;
    size_t offset = grad.empty() ? 0 : param_count();
    for (size_t ii = layers.size(); ii-- > 0;) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        const size_t np = cp->conditioner.param_count();
        std::span<double> gslice;
        if (!grad.empty()) {
          offset -= np;
          gslice = grad.subspan(offset, np);
        }
        c.half.resize(half, B);
        cp->conditioner.backprop_batch(c.mlp[ii], G.rows(half, half), +1.0, gslice,
                                       c.half.view());
        for (int k = 0; k < half; ++k) {
          double* gk = G.row(k);
          const double* hk = c.half.view().row(k);
          for (int s = 0; s < B; ++s) gk[s] += hk[s];
        }
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.resize(dim, B);
        std::copy(G.ptr, G.ptr + G.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k)
          std::copy(c.full.view().row(k), c.full.view().row(k) + B, G.row(pm->perm[k]));
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.resize(dim, B);
        std::copy(G.ptr, G.ptr + G.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k) {
          double* gk = G.row(k);
          for (int s = 0; s < B; ++s) gk[s] = 0.0;
          for (int r = 0; r < dim; ++r) {
            const double w = ln.mat[static_cast<size_t>(r) * dim + k];
            const double* fr = c.full.view().row(r);
            for (int s = 0; s < B; ++s) gk[s] += w * fr[s];
          }
        }
      }
    }
  }

  void backprop_inverse_batch(NetBatchCache& c, const FView& G, std::span<double> grad) const {
    const int half = dim / 2;
    const int B = G.batch;
    size_t offset = 0;
    for (size_t ii = 0; ii < layers.size(); ++ii) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        const size_t np = cp->conditioner.param_count();
        std::span<double> gslice;
        if (!grad.empty()) {
          gslice = grad.subspan(offset, np);
          offset += np;
        }
        c.half.resize(half, B);
        cp->conditioner.backprop_batch(c.mlp[ii], G.rows(half, half), -1.0, gslice,
                                       c.half.view());
        for (int k = 0; k < half; ++k) {
          double* gk = G.row(k);
          const double* hk = c.half.view().row(k);
          for (int s = 0; s < B; ++s) gk[s] += hk[s];
        }
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.resize(dim, B);
        std::copy(G.ptr, G.ptr + G.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k)
          std::copy(c.full.view().row(pm->perm[k]), c.full.view().row(pm->perm[k]) + B, G.row(k));
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.resize(dim, B);
        std::copy(G.ptr, G.ptr + G.size(), c.full.data.begin());
        for (int k = 0; k < dim; ++k) {
          double* gk = G.row(k);
          for (int s = 0; s < B; ++s) gk[s] = 0.0;
          for (int r = 0; r < dim; ++r) {
            const double w = ln.inv_mat[static_cast<size_t>(r) * dim + k];
            const double* fr = c.full.view().row(r);
            for (int s = 0; s < B; ++s) gk[s] += w * fr[s];
          }
        }
      }
    }
  }

  /// Cotangent pull-back through forward, given the cache of the matching
  /// forward_inplace call. g is replaced by d/dx; parameter gradients are
  /// accumulated into grad (layout matches write_params; may be empty).
  void backprop_forward(NetCache& c, std::span<double> g, std::span<double> grad) const {
    const int half = dim / 2;
    size_t offset = grad.empty() ? 0 : param_count();
    for (size_t ii = layers.size(); ii-- > 0;) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        const size_t np = cp->conditioner.param_count();
        std::span<double> gslice;
        if (!grad.empty()) {
          offset -= np;
          gslice = grad.subspan(offset, np);
        }
        c.half.resize(half);
        cp->conditioner.backprop(c.mlp[ii], g.subspan(half, half), +1.0, gslice,
                                 c.half);
        for (int k = 0; k < half; ++k) g[k] += c.half[k];
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.assign(g.begin(), g.end());
        for (int k = 0; k < dim; ++k) g[pm->perm[k]] = c.full[k];
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.assign(g.begin(), g.end());
        detail::matvec_t(dim, ln.mat, c.full, g);
      }
    }
  }

  /// Cotangent pull-back through inverse, given the cache of the matching
  /// inverse_inplace call. g is replaced by d/dy.
  void backprop_inverse(NetCache& c, std::span<double> g, std::span<double> grad) const {
    const int half = dim / 2;
    size_t offset = 0;
    for (size_t ii = 0; ii < layers.size(); ++ii) {
      if (const auto* cp = std::get_if<CouplingLayer>(&layers[ii])) {
        const size_t np = cp->conditioner.param_count();
        std::span<double> gslice;
        if (!grad.empty()) {
          gslice = grad.subspan(offset, np);
          offset += np;
        }
        c.half.resize(half);
        cp->conditioner.backprop(c.mlp[ii], g.subspan(half, half), -1.0, gslice,
                                 c.half);
        for (int k = 0; k < half; ++k) g[k] += c.half[k];
      } else if (const auto* pm = std::get_if<PermutationLayer>(&layers[ii])) {
        c.full.assign(g.begin(), g.end());
        for (int k = 0; k < dim; ++k) g[k] = c.full[pm->perm[k]];
      } else {
        const auto& ln = std::get<LinearLayer>(layers[ii]);
        c.full.assign(g.begin(), g.end());
        detail::matvec_t(dim, ln.inv_mat, c.full, g);
      }
    }
  }
};

/// Identity net of the given dimension (no layers).
inline InvertibleNet identity_net(int dim) { return InvertibleNet{dim, {}}; }

/// Stack of additive coupling layers; when interleave is set, a fresh random
/// permutation is inserted before every coupling layer after the first.
inline InvertibleNet make_coupling_net(int dim, int num_coupling, const std::vector<int>& hidden,
                                       bool interleave, Rng& rng) {
  if (num_coupling > 0 && dim % 2 != 0)
    throw DimensionMismatch("coupling net requires even dim, got " + std::to_string(dim));
  InvertibleNet net;
  net.dim = dim;
  for (int i = 0; i < num_coupling; ++i) {
    if (interleave && i > 0) net.layers.emplace_back(PermutationLayer::make(dim, rng));
    net.layers.emplace_back(CouplingLayer::make(dim, hidden, rng));
  }
  return net;
}

}  // namespace nga
