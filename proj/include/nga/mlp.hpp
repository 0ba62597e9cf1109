#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "nga/common.hpp"
#include "nga/rng.hpp"

namespace nga {

namespace detail {

/// exp(x) for x in [-50, 1], Cephes-style rational core with exact power-of-two
/// scaling. Branch-free, so activation loops vectorize; ~2 ulp.
inline double exp_core(double x) {
  const double log2e = 1.4426950408889634074;
  const double ln2_hi = 6.93145751953125e-1;
  const double ln2_lo = 1.42860682030941723212e-6;
  const double pn = std::floor(log2e * x + 0.5);
  x -= pn * ln2_hi;
  x -= pn * ln2_lo;
  const double xx = x * x;
  const double p = x * (9.99999999999999999910e-1 +
                        xx * (3.02994407707441961300e-2 + xx * 1.26177193074810590878e-4));
  const double q = 2.00000000000000000005e0 +
                   xx * (2.27265548208155028766e-1 +
                         xx * (2.52448340349684104192e-3 + xx * 3.00198505138664455042e-6));
  const double r = 1.0 + 2.0 * p / (q - p);
  // scale by 2^pn through the exponent bits; pn stays in a safe range here
  const int64_t bits = (static_cast<int64_t>(pn) + 1023) << 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return r * scale;
}

/// tanh with a short odd series near zero (avoids 1-e cancellation) and the
/// exp form elsewhere; saturates exactly at |x| >= 20. Deterministic across
/// platforms, unlike libm, and cheap enough to vectorize.
inline double tanh_fast(double x) {
  const double ax = std::abs(x);
  const double x2 = x * x;
  const double small =
      x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
  const double cl = ax < 20.0 ? ax : 20.0;
  const double e = exp_core(-2.0 * cl);
  double big = (1.0 - e) / (1.0 + e);
  big = x < 0.0 ? -big : big;
  return ax < 1e-2 ? small : (ax < 20.0 ? big : (x < 0.0 ? -1.0 : 1.0));
}

}  // namespace detail

/// Activations recorded during a forward pass, reused by backprop.
/// acts[l] is the input to linear layer l (post-tanh for l > 0).
struct MlpCache {
  std::vector<Vec> acts;
  Vec g1, g2;  // scratch cotangents
};

/// Same, for feature-major sample blocks.
struct MlpBatchCache {
  std::vector<FBlock> acts;
  FBlock g, gnext;
};

/// Fully connected conditioner with tanh between layers and a linear output.
/// Parameter order is W0, b0, W1, b1, ... with weights row-major.
struct Mlp {
  std::vector<int> widths;     // [in, hidden..., out]
  std::vector<Vec> weights;    // weights[l]: widths[l+1] x widths[l]
  std::vector<Vec> biases;

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }

  static Mlp zeros(std::vector<int> widths) {
    Mlp m;
    m.widths = std::move(widths);
    for (size_t l = 0; l + 1 < m.widths.size(); ++l) {
      m.weights.emplace_back(static_cast<size_t>(m.widths[l + 1]) * m.widths[l], 0.0);
      m.biases.emplace_back(m.widths[l + 1], 0.0);
    }
    return m;
  }

  /// Glorot-uniform weights, zero biases. The final layer is zeroed so the
  /// map starts out identically zero.
  static Mlp glorot(std::vector<int> widths, Rng& rng, bool zero_last = true) {
    Mlp m = zeros(std::move(widths));
    for (int l = 0; l < m.num_layers(); ++l) {
      if (zero_last && l == m.num_layers() - 1) continue;
      const double a = std::sqrt(6.0 / (m.widths[l] + m.widths[l + 1]));
      for (double& w : m.weights[l]) w = rng.uniform(-a, a);
    }
    return m;
  }

  size_t param_count() const {
    size_t n = 0;
    for (int l = 0; l < num_layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  void write_params(double* out) const {
    for (int l = 0; l < num_layers(); ++l) {
      for (double w : weights[l]) *out++ = w;
      for (double b : biases[l]) *out++ = b;
    }
  }

  void read_params(const double* in) {
    for (int l = 0; l < num_layers(); ++l) {
      for (double& w : weights[l]) w = *in++;
      for (double& b : biases[l]) b = *in++;
    }
  }

  // four-lane partial sums: a fixed, vectorizable summation order
  static double dot(const double* w, const double* a, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int k = 0;
    for (; k + 4 <= n; k += 4) {
      s0 += w[k] * a[k];
      s1 += w[k + 1] * a[k + 1];
      s2 += w[k + 2] * a[k + 2];
      s3 += w[k + 3] * a[k + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; k < n; ++k) s += w[k] * a[k];
    return s;
  }

  void forward(std::span<const double> x, std::span<double> y, MlpCache& c) const {
    c.acts.resize(num_layers());
    c.acts[0].assign(x.begin(), x.end());
    for (int l = 0; l < num_layers(); ++l) {
      const Vec& a = c.acts[l];
      const int rows = widths[l + 1], cols = widths[l];
      const bool last = l == num_layers() - 1;
      if (!last) c.acts[l + 1].resize(rows);
      for (int r = 0; r < rows; ++r) {
        const double acc = biases[l][r] + dot(&weights[l][static_cast<size_t>(r) * cols], a.data(), cols);
        if (last)
          y[r] = acc;
        else
          c.acts[l + 1][r] = detail::tanh_fast(acc);
      }
    }
  }

  void forward(std::span<const double> x, std::span<double> y) const {
    MlpCache c;
    forward(x, y, c);
  }

  /// --- batched evaluation over feature-major sample blocks -------------
  /// The batch dimension is contiguous, so every inner loop below streams
  /// unit-stride arrays. Summation orders are fixed, independent of any
  /// worker count.

  void forward_batch(const FView& X, const FView& Y, MlpBatchCache& c) const {
    const int B = X.batch;
    c.acts.resize(num_layers());
    c.acts[0].resize(widths[0], B);
    std::copy(X.ptr, X.ptr + X.size(), c.acts[0].data.begin());
    for (int l = 0; l < num_layers(); ++l) {
      const int rows = widths[l + 1], cols = widths[l];
      const bool last = l == num_layers() - 1;
      FView A = c.acts[l].view();
      FView Z = Y;
      if (!last) {
        c.acts[l + 1].resize(rows, B);
        Z = c.acts[l + 1].view();
      }
      // 4-row tiles share each streamed activation row
      int r = 0;
      for (; r + 4 <= rows; r += 4) {
        double* z0 = Z.row(r);
        double* z1 = Z.row(r + 1);
        double* z2 = Z.row(r + 2);
        double* z3 = Z.row(r + 3);
        for (int s = 0; s < B; ++s) {
          z0[s] = biases[l][r];
          z1[s] = biases[l][r + 1];
          z2[s] = biases[l][r + 2];
          z3[s] = biases[l][r + 3];
        }
        const double* w0 = &weights[l][static_cast<size_t>(r) * cols];
        const double* w1 = w0 + cols;
        const double* w2 = w1 + cols;
        const double* w3 = w2 + cols;
        for (int k = 0; k < cols; ++k) {
          const double* ak = A.row(k);
          const double c0 = w0[k], c1 = w1[k], c2 = w2[k], c3 = w3[k];
          for (int s = 0; s < B; ++s) {
            const double a = ak[s];
            z0[s] += c0 * a;
            z1[s] += c1 * a;
            z2[s] += c2 * a;
            z3[s] += c3 * a;
          }
        }
      }
      for (; r < rows; ++r) {
        double* zr = Z.row(r);
        const double br = biases[l][r];
        for (int s = 0; s < B; ++s) zr[s] = br;
        const double* wrow = &weights[l][static_cast<size_t>(r) * cols];
        for (int k = 0; k < cols; ++k) {
          const double w = wrow[k];
          const double* ak = A.row(k);
          for (int s = 0; s < B; ++s) zr[s] += w * ak[s];
        }
      }
      if (!last) {
        double* zd = Z.ptr;
        const size_t total = Z.size();
        for (size_t i = 0; i < total; ++i) zd[i] = detail::tanh_fast(zd[i]);
      }
    }
  }

  /// Batched reverse-mode; mirrors backprop. dx gets sign * J^T upstream.
  void backprop_batch(MlpBatchCache& c, const FView& upstream, double sign,
                      std::span<double> grad, const FView& dx) const {
    const int B = upstream.batch;
    c.g.resize(widths.back(), B);
    std::copy(upstream.ptr, upstream.ptr + upstream.size(), c.g.data.begin());
    size_t offset = grad.empty() ? 0 : param_count();
    for (int l = num_layers() - 1; l >= 0; --l) {
      const int rows = widths[l + 1], cols = widths[l];
      FView G = c.g.view();
      FView A = c.acts[l].view();
      if (!grad.empty()) {
        offset -= static_cast<size_t>(rows) * cols + rows;
        double* gw = grad.data() + offset;
        double* gb = gw + static_cast<size_t>(rows) * cols;
        // dW = G A^T in 4x4 register tiles
        int r = 0;
        for (; r + 4 <= rows; r += 4) {
          const double* g0 = G.row(r);
          const double* g1 = G.row(r + 1);
          const double* g2 = G.row(r + 2);
          const double* g3 = G.row(r + 3);
          double* gw0 = gw + static_cast<size_t>(r) * cols;
          double* gw1 = gw0 + cols;
          double* gw2 = gw1 + cols;
          double* gw3 = gw2 + cols;
          int k = 0;
          for (; k + 4 <= cols; k += 4) {
            double t[4][4] = {};
            const double* a0 = A.row(k);
            const double* a1 = A.row(k + 1);
            const double* a2 = A.row(k + 2);
            const double* a3 = A.row(k + 3);
            for (int s = 0; s < B; ++s) {
              const double w0 = g0[s], w1 = g1[s], w2 = g2[s], w3 = g3[s];
              const double b0 = a0[s], b1 = a1[s], b2 = a2[s], b3 = a3[s];
              t[0][0] += w0 * b0;
              t[0][1] += w0 * b1;
              t[0][2] += w0 * b2;
              t[0][3] += w0 * b3;
              t[1][0] += w1 * b0;
              t[1][1] += w1 * b1;
              t[1][2] += w1 * b2;
              t[1][3] += w1 * b3;
              t[2][0] += w2 * b0;
              t[2][1] += w2 * b1;
              t[2][2] += w2 * b2;
              t[2][3] += w2 * b3;
              t[3][0] += w3 * b0;
              t[3][1] += w3 * b1;
              t[3][2] += w3 * b2;
              t[3][3] += w3 * b3;
            }
            for (int dr = 0; dr < 4; ++dr) {
              double* gwr = gw + static_cast<size_t>(r + dr) * cols;
              for (int dk = 0; dk < 4; ++dk) gwr[k + dk] += sign * t[dr][dk];
            }
          }
          for (; k < cols; ++k) {
            gw0[k] += sign * dot(g0, A.row(k), B);
            gw1[k] += sign * dot(g1, A.row(k), B);
            gw2[k] += sign * dot(g2, A.row(k), B);
            gw3[k] += sign * dot(g3, A.row(k), B);
          }
        }
        for (; r < rows; ++r) {
          const double* gr = G.row(r);
          double* gwrow = gw + static_cast<size_t>(r) * cols;
          for (int k = 0; k < cols; ++k) gwrow[k] += sign * dot(gr, A.row(k), B);
        }
        for (r = 0; r < rows; ++r) {
          const double* gr = G.row(r);
          double sb = 0.0;
          for (int s = 0; s < B; ++s) sb += gr[s];
          gb[r] += sign * sb;
        }
      }
      FView D = l > 0 ? [&] {
        c.gnext.resize(cols, B);
        return c.gnext.view();
      }()
                      : dx;
      std::fill(D.ptr, D.ptr + D.size(), 0.0);
      {
        // 4 source rows per pass share each destination row
        int r = 0;
        for (; r + 4 <= rows; r += 4) {
          const double* g0 = G.row(r);
          const double* g1 = G.row(r + 1);
          const double* g2 = G.row(r + 2);
          const double* g3 = G.row(r + 3);
          const double* w0 = &weights[l][static_cast<size_t>(r) * cols];
          const double* w1 = w0 + cols;
          const double* w2 = w1 + cols;
          const double* w3 = w2 + cols;
          for (int k = 0; k < cols; ++k) {
            double* dk = D.row(k);
            const double c0 = w0[k], c1 = w1[k], c2 = w2[k], c3 = w3[k];
            for (int s = 0; s < B; ++s)
              dk[s] += c0 * g0[s] + c1 * g1[s] + c2 * g2[s] + c3 * g3[s];
          }
        }
        for (; r < rows; ++r) {
          const double* gr = G.row(r);
          const double* wrow = &weights[l][static_cast<size_t>(r) * cols];
          for (int k = 0; k < cols; ++k) {
            const double w = wrow[k];
            double* dk = D.row(k);
            for (int s = 0; s < B; ++s) dk[s] += w * gr[s];
          }
        }
      }
      if (l > 0) {
        for (int k = 0; k < cols; ++k) {
          const double* ak = A.row(k);
          double* dk = D.row(k);
          for (int s = 0; s < B; ++s) dk[s] *= 1.0 - ak[s] * ak[s];
        }
        std::swap(c.g, c.gnext);
      } else if (sign != 1.0) {
        for (size_t i = 0; i < dx.size(); ++i) dx.ptr[i] *= sign;
      }
    }
  }

  /// Reverse-mode pass. Accumulates sign * d(upstream . output)/d(params) into
  /// grad (laid out like write_params) and writes sign * (J^T upstream) to dx.
  /// grad may be empty to skip parameter gradients.
  void backprop(MlpCache& c, std::span<const double> upstream, double sign,
                std::span<double> grad, std::span<double> dx) const {
    Vec& g = c.g1;
    Vec& gnext = c.g2;
    g.assign(upstream.begin(), upstream.end());
    size_t offset = grad.empty() ? 0 : param_count();
    for (int l = num_layers() - 1; l >= 0; --l) {
      const int rows = widths[l + 1], cols = widths[l];
      const Vec& a = c.acts[l];
      if (!grad.empty()) {
        offset -= static_cast<size_t>(rows) * cols + rows;
        double* gw = grad.data() + offset;
        double* gb = gw + static_cast<size_t>(rows) * cols;
        for (int r = 0; r < rows; ++r) {
          const double gr = sign * g[r];
          double* gwrow = gw + static_cast<size_t>(r) * cols;
          for (int k = 0; k < cols; ++k) gwrow[k] += gr * a[k];
          gb[r] += gr;
        }
      }
      gnext.assign(cols, 0.0);
      for (int r = 0; r < rows; ++r) {
        const double gr = g[r];
        const double* wrow = &weights[l][static_cast<size_t>(r) * cols];
        for (int k = 0; k < cols; ++k) gnext[k] += wrow[k] * gr;
      }
      if (l > 0) {
        // tanh'(z) = 1 - tanh(z)^2 and acts[l] holds tanh(z).
        for (int k = 0; k < cols; ++k) gnext[k] *= 1.0 - a[k] * a[k];
      }
      std::swap(g, gnext);
    }
    for (size_t i = 0; i < dx.size(); ++i) dx[i] = sign * g[i];
  }
};

}  // namespace nga
