#pragma once

#include <span>
#include <vector>

#include "nga/common.hpp"
#include "nga/group.hpp"
#include "nga/net.hpp"
#include "nga/numdiff.hpp"
#include "nga/rng.hpp"

namespace nga {

/// Intermediate values of one apply() call, kept for reverse-mode.
struct ApplyTape {
  int g = 0;
  Vec buf, buf2;
  NetCache h_inv, h_fwd;
  std::vector<NetCache> dec, enc;
};

/// Batched counterpart over a feature-major sample block.
struct ApplyBatchTape {
  int g = 0;
  FBlock tmp;
  NetBatchCache h_inv, h_fwd;
  std::vector<NetBatchCache> dec, enc;
};

/// A family of networks, one per group element, that satisfies the group laws
/// for every parameter setting. Element g acts by decoding each slot with its
/// own net, permuting slots by g's action on S, re-encoding with the
/// destination slot's net, all conjugated by H:
///
///   apply(g, x) = H( raw_g( H^{-1}(x) ) ),  raw_g(u)_s = T_s(T_{g^-1 s}^{-1}(u_{g^-1 s}))
///
/// Slots are |S| contiguous blocks of p coordinates, block s at offset s*p.
struct NeuralGroupAction {
  FiniteGAction action;
  int p = 0;
  std::vector<InvertibleNet> slot_nets;  // T_s, dim p each
  InvertibleNet conjugator;              // H, dim p*|S|

  int dim() const { return p * action.set_size; }
  int group_order() const { return action.group.order(); }

  void check_element(int g) const {
    if (g < 0 || g >= group_order())
      throw UnknownElement("unknown group element index " + std::to_string(g));
  }

  size_t param_count() const {
    size_t n = conjugator.param_count();
    for (const auto& t : slot_nets) n += t.param_count();
    return n;
  }

  /// Flat parameter vector: T_0, ..., T_{|S|-1}, then H.
  Vec get_params() const {
    Vec out(param_count());
    double* o = out.data();
    for (const auto& t : slot_nets) {
      t.write_params(o);
      o += t.param_count();
    }
    conjugator.write_params(o);
    return out;
  }

  void set_params(const Vec& in) {
    if (in.size() != param_count()) throw DimensionMismatch("set_params: wrong parameter count");
    const double* i = in.data();
    for (auto& t : slot_nets) {
      t.read_params(i);
      i += t.param_count();
    }
    conjugator.read_params(i);
  }

  /// The Lemma-1 action without the conjugation.
  void apply_raw_inplace(int g, Vec& x, ApplyTape* tape = nullptr) const {
    check_element(g);
    require_dim(x.size(), static_cast<size_t>(dim()), "apply_raw");
    const int ns = action.set_size;
    ApplyTape local;
    ApplyTape& t = tape ? *tape : local;
    t.g = g;
    t.dec.resize(ns);
    t.enc.resize(ns);
    // decode every slot via its own T^{-1}
    for (int s = 0; s < ns; ++s)
      slot_nets[s].inverse_inplace(std::span<double>(x).subspan(static_cast<size_t>(s) * p, p),
                                   t.dec[s]);
    // permute slots: decoded slot s lands in slot g.s
    t.buf2.resize(x.size());
    for (int s = 0; s < ns; ++s) {
      const int gs = action.perm[g][s];
      for (int k = 0; k < p; ++k) t.buf2[static_cast<size_t>(gs) * p + k] = x[static_cast<size_t>(s) * p + k];
    }
    x.swap(t.buf2);
    // re-encode via the destination slot's T
    for (int s = 0; s < ns; ++s)
      slot_nets[s].forward_inplace(std::span<double>(x).subspan(static_cast<size_t>(s) * p, p),
                                   t.enc[s]);
  }

  Vec apply_raw(int g, std::span<const double> x) const {
    Vec y(x.begin(), x.end());
    apply_raw_inplace(g, y);
    return y;
  }

  /// The conjugated action H(g . H^{-1}(x)). Pass a tape to enable backprop.
  void apply_inplace(int g, Vec& x, ApplyTape* tape = nullptr) const {
    check_element(g);
    require_dim(x.size(), static_cast<size_t>(dim()), "apply");
    ApplyTape local;
    ApplyTape& t = tape ? *tape : local;
    conjugator.inverse_inplace(x, t.h_inv);
    apply_raw_inplace(g, x, &t);
    conjugator.forward_inplace(x, t.h_fwd);
  }

  Vec apply(int g, std::span<const double> x) const {
    Vec y(x.begin(), x.end());
    apply_inplace(g, y);
    return y;
  }

  /// Batched apply over a feature-major block (dim x batch), in place.
  void apply_batch(int g, const FView& X, ApplyBatchTape& t) const {
    check_element(g);
    require_dim(static_cast<size_t>(X.dim), static_cast<size_t>(dim()), "apply_batch");
    const int ns = action.set_size;
    const int B = X.batch;
    t.g = g;
    t.dec.resize(ns);
    t.enc.resize(ns);
    conjugator.inverse_batch(X, t.h_inv);
    for (int s = 0; s < ns; ++s) slot_nets[s].inverse_batch(X.rows(s * p, p), t.dec[s]);
    t.tmp.resize(X.dim, B);
    std::copy(X.ptr, X.ptr + X.size(), t.tmp.data.begin());
    for (int s = 0; s < ns; ++s) {
      const int gs = action.perm[g][s];
      std::copy(t.tmp.view().row(s * p), t.tmp.view().row(s * p) + static_cast<size_t>(p) * B,
                X.row(gs * p));
    }
    for (int s = 0; s < ns; ++s) slot_nets[s].forward_batch(X.rows(s * p, p), t.enc[s]);
    conjugator.forward_batch(X, t.h_fwd);
  }

  /// Batched reverse-mode; G is replaced by input cotangents.
  void backprop_batch(ApplyBatchTape& t, const FView& G, std::span<double> grad) const {
    const int ns = action.set_size;
    const int B = G.batch;
    std::vector<size_t> t_off(ns + 1, 0);
    for (int s = 0; s < ns; ++s) t_off[s + 1] = t_off[s] + slot_nets[s].param_count();
    std::span<double> hgrad;
    if (!grad.empty()) hgrad = grad.subspan(t_off[ns], conjugator.param_count());

    conjugator.backprop_forward_batch(t.h_fwd, G, hgrad);
    for (int s = 0; s < ns; ++s) {
      auto slice = grad.empty() ? std::span<double>() : grad.subspan(t_off[s], t_off[s + 1] - t_off[s]);
      slot_nets[s].backprop_forward_batch(t.enc[s], G.rows(s * p, p), slice);
    }
    t.tmp.resize(G.dim, B);
    std::copy(G.ptr, G.ptr + G.size(), t.tmp.data.begin());
    for (int s = 0; s < ns; ++s) {
      const int gs = action.perm[t.g][s];
      std::copy(t.tmp.view().row(gs * p), t.tmp.view().row(gs * p) + static_cast<size_t>(p) * B,
                G.row(s * p));
    }
    for (int s = 0; s < ns; ++s) {
      auto slice = grad.empty() ? std::span<double>() : grad.subspan(t_off[s], t_off[s + 1] - t_off[s]);
      slot_nets[s].backprop_inverse_batch(t.dec[s], G.rows(s * p, p), slice);
    }
    conjugator.backprop_inverse_batch(t.h_inv, G, hgrad);
  }

  /// Reverse-mode through apply(): g_cot is replaced by the cotangent w.r.t.
  /// the input; parameter gradients accumulate into grad (layout matches
  /// get_params; empty to skip).
  void backprop(ApplyTape& t, Vec& g_cot, std::span<double> grad) const {
    const int ns = action.set_size;
    std::span<double> hgrad, tgrad;
    std::vector<size_t> t_off(ns + 1, 0);
    for (int s = 0; s < ns; ++s) t_off[s + 1] = t_off[s] + slot_nets[s].param_count();
    if (!grad.empty()) hgrad = grad.subspan(t_off[ns], conjugator.param_count());

    conjugator.backprop_forward(t.h_fwd, g_cot, hgrad);
    for (int s = 0; s < ns; ++s) {
      auto slice = grad.empty() ? std::span<double>() : grad.subspan(t_off[s], t_off[s + 1] - t_off[s]);
      slot_nets[s].backprop_forward(t.enc[s], std::span<double>(g_cot).subspan(static_cast<size_t>(s) * p, p), slice);
    }
    // undo the slot permutation: cotangent of decoded slot s comes from slot g.s
    t.buf.resize(g_cot.size());
    for (int s = 0; s < ns; ++s) {
      const int gs = action.perm[t.g][s];
      for (int k = 0; k < p; ++k) t.buf[static_cast<size_t>(s) * p + k] = g_cot[static_cast<size_t>(gs) * p + k];
    }
    g_cot.swap(t.buf);
    for (int s = 0; s < ns; ++s) {
      auto slice = grad.empty() ? std::span<double>() : grad.subspan(t_off[s], t_off[s + 1] - t_off[s]);
      slot_nets[s].backprop_inverse(t.dec[s], std::span<double>(g_cot).subspan(static_cast<size_t>(s) * p, p), slice);
    }
    conjugator.backprop_inverse(t.h_inv, g_cot, hgrad);
  }
};

/// Specs for the trainable architecture: coupling-only nets, so the whole
/// action is volume-preserving.
struct NetSpec {
  int slot_coupling_layers = 1;
  int conj_coupling_layers = 3;
  std::vector<int> hidden = {64, 64};
};

/// Builds an action with freshly initialized nets. Draw order is fixed
/// (T_0..T_{n-1}, then H) so a seed pins every parameter and permutation.
inline NeuralGroupAction make_neural_group_action(FiniteGAction action, int p,
                                                  const NetSpec& spec, Rng& rng) {
  NeuralGroupAction a;
  a.p = p;
  const int ns = action.set_size;
  a.action = std::move(action);
  for (int s = 0; s < ns; ++s)
    a.slot_nets.push_back(make_coupling_net(p, spec.slot_coupling_layers, spec.hidden, false, rng));
  a.conjugator = make_coupling_net(p * ns, spec.conj_coupling_layers, spec.hidden, true, rng);
  return a;
}

struct PairResidual {
  int g = 0, h = 0;
  double max_resid = 0.0;
  double mean_resid = 0.0;
};

/// Residuals are normalized by 1 + ||x||_inf of the sampled input.
struct LawReport {
  int samples = 0;
  double tol = 0.0;
  double identity_max = 0.0;
  double identity_mean = 0.0;
  std::vector<PairResidual> pairs;
  double max_residual = 0.0;  // max over pairs and the identity check
  bool pass = false;
};

/// Checks apply(e, x) = x and apply(gh, x) = apply(g, apply(h, x)) over all
/// ordered pairs on a fixed sample set, evaluated in feature-major blocks.
/// The construction guarantees a pass up to roundoff for any parameter
/// setting, trained or random.
inline LawReport verify_group_laws(const NeuralGroupAction& A, int num_samples, double tol,
                                   uint64_t seed = 0x6e676131) {
  if (num_samples < 1) throw Error("verify_group_laws: num_samples must be >= 1");
  const int n = A.group_order();
  const int d = A.dim();
  const int B = num_samples;
  Rng rng(seed);
  FBlock X0;
  X0.resize(d, B);
  Vec scale(B);
  for (int i = 0; i < B; ++i) {  // sample i fills column i
    double m = 0.0;
    for (int f = 0; f < d; ++f) {
      const double v = rng.gaussian();
      X0.view().row(f)[i] = v;
      m = std::max(m, std::abs(v));
    }
    scale[i] = 1.0 + m;
  }

  // column-wise max |P - Q| / scale, folded into max and mean
  auto fold = [&](const FView& P, const FView& Q, double& mx, double& mean) {
    for (int i = 0; i < B; ++i) {
      double m = 0.0;
      for (int f = 0; f < d; ++f) m = std::max(m, std::abs(P.row(f)[i] - Q.row(f)[i]));
      const double r = m / scale[i];
      mx = std::max(mx, r);
      mean += r / B;
    }
  };

  ApplyBatchTape tape;
  std::vector<FBlock> hx(n);
  for (int h = 0; h < n; ++h) {
    hx[h].resize(d, B);
    hx[h].data = X0.data;
    A.apply_batch(h, hx[h].view(), tape);
  }

  LawReport rep;
  rep.samples = num_samples;
  rep.tol = tol;
  fold(hx[A.action.group.identity()].view(), X0.view(), rep.identity_max, rep.identity_mean);

  rep.pairs.reserve(static_cast<size_t>(n) * n);
  FBlock lhs;
  for (int g = 0; g < n; ++g) {
    for (int h = 0; h < n; ++h) {
      PairResidual pr{g, h, 0.0, 0.0};
      const int gh = A.action.group.mul(g, h);
      lhs.resize(d, B);
      lhs.data = hx[h].data;
      A.apply_batch(g, lhs.view(), tape);
      fold(hx[gh].view(), lhs.view(), pr.max_resid, pr.mean_resid);
      rep.max_residual = std::max(rep.max_residual, pr.max_resid);
      rep.pairs.push_back(pr);
    }
  }
  rep.max_residual = std::max(rep.max_residual, rep.identity_max);
  rep.pass = rep.max_residual <= tol;
  return rep;
}

struct VolumeReport {
  int samples = 0;
  double fd_step = 0.0;
  double tol = 0.0;
  struct PerElement {
    int g = 0;
    double max_dev = 0.0;  // max | |det J| - 1 |
  };
  std::vector<PerElement> elements;
  double max_dev = 0.0;
  bool pass = false;
};

/// Finite-difference check that every apply(g, .) has |det J| = 1. Capped at
/// dim 32; the estimate costs 2*dim applies per sample.
inline VolumeReport verify_volume(const NeuralGroupAction& A, int num_samples, double fd_step,
                                  double tol, uint64_t seed = 0x6e676132) {
  if (fd_step <= 0.0) throw Error("verify_volume: fd_step must be positive");
  const int d = A.dim();
  if (d > 32)
    throw DimensionTooLarge("verify_volume is capped at dimension 32, got " + std::to_string(d));
  Rng rng(seed);
  VolumeReport rep;
  rep.samples = num_samples;
  rep.fd_step = fd_step;
  rep.tol = tol;
  for (int g = 0; g < A.group_order(); ++g) {
    VolumeReport::PerElement pe{g, 0.0};
    for (int i = 0; i < num_samples; ++i) {
      Vec x(d);
      for (double& v : x) v = rng.gaussian();
      auto f = [&](const Vec& z) { return A.apply(g, z); };
      const double det = determinant(numeric_jacobian(f, x, fd_step));
      pe.max_dev = std::max(pe.max_dev, std::abs(std::abs(det) - 1.0));
    }
    rep.max_dev = std::max(rep.max_dev, pe.max_dev);
    rep.elements.push_back(pe);
  }
  rep.pass = rep.max_dev <= tol;
  return rep;
}

/// Probabilistic transitions of an observed state phi in R^n, driven by a
/// deterministic action on the enlarged space (phi, pi) with pi ~ N(0, I_m).
struct GenerativeAction {
  NeuralGroupAction base;
  int observed_dim = 0;   // n
  int auxiliary_dim = 0;  // m
};

inline GenerativeAction make_generative_action(NeuralGroupAction base, int observed_dim) {
  const int d = base.dim();
  if (observed_dim < 1 || observed_dim >= d)
    throw DimensionMismatch("generative action needs 1 <= n < p|S|; got n=" +
                            std::to_string(observed_dim) + " with p|S|=" + std::to_string(d));
  return GenerativeAction{std::move(base), observed_dim, d - observed_dim};
}

/// Samples pi from the seeded generator, applies g on (phi, pi), and returns
/// the first n coordinates. Deterministic given the seed.
inline Vec generative_transition(const GenerativeAction& GA, int g, std::span<const double> phi,
                                 uint64_t seed) {
  require_dim(phi.size(), static_cast<size_t>(GA.observed_dim), "generative_transition");
  Rng rng(seed);
  Vec x(phi.begin(), phi.end());
  x.resize(GA.base.dim());
  for (int k = 0; k < GA.auxiliary_dim; ++k) x[GA.observed_dim + k] = rng.gaussian();
  GA.base.apply_inplace(g, x);
  x.resize(GA.observed_dim);
  return x;
}

}  // namespace nga
