#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <thread>
#include <vector>

#include "nga/action.hpp"
#include "nga/common.hpp"
#include "nga/rng.hpp"

namespace nga {

/// One supervised example: apply element g to input, compare the masked
/// output coordinates against target.
struct Sample {
  int g = 0;
  Vec input;
  Vec target;  // one value per readout-mask coordinate
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 0;  // 0 = full batch
  int max_epochs = 1000;
  double target_loss = 0.0;
  uint64_t seed = 0;
  std::vector<int> readout_mask;
  double test_fraction = 0.1;
  int law_check_samples = 10;
  int checkpoint_every = 0;  // epochs; 0 disables
  int threads = 1;

  void validate(int dim) const {
    if (learning_rate <= 0.0) throw ConfigError("learning-rate must be positive");
    if (batch_size < 0) throw ConfigError("batch size must be >= 1 (or 0 for full batch)");
    if (max_epochs < 0) throw ConfigError("max epochs must be >= 0");
    if (readout_mask.empty()) throw ConfigError("readout-mask must be nonempty");
    for (int c : readout_mask)
      if (c < 0 || c >= dim)
        throw ConfigError("readout-mask coordinate " + std::to_string(c) + " outside [0," +
                          std::to_string(dim) + ")");
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double max_law_residual = 0.0;
};

/// Divergence signal; carries the history gathered before the abort.
struct NonFiniteLoss : Error {
  std::vector<EpochStats> history;
  NonFiniteLoss(const std::string& msg, std::vector<EpochStats> h)
      : Error(msg), history(std::move(h)) {}
};

struct TrainResult {
  std::vector<EpochStats> history;
  bool reached_target = false;
  int epochs_run = 0;
  size_t train_samples = 0;
  size_t test_samples = 0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;  // summed over the held-out set
  double final_max_law_residual = 0.0;
  double wall_seconds = 0.0;

  /// Mean summed-squared error per held-out sample.
  double test_loss_per_sample() const {
    return test_samples ? final_test_loss / static_cast<double>(test_samples) : 0.0;
  }
};

namespace detail {

/// Deterministic block-structured batch reduction: samples are split into
/// fixed blocks, each block is processed per group element in element order
/// as one feature-major batched pass, and block partials are summed in block
/// order. The result is bit-identical no matter how many workers process the
/// blocks.
constexpr int kReduceBlock = 1024;

struct BlockWorkspace {
  FBlock X, G;
  ApplyBatchTape tape;
  std::vector<std::vector<size_t>> by_elem;
};

inline double block_loss_grad(const NeuralGroupAction& A, std::span<const Sample> batch,
                              size_t lo, size_t hi, std::span<const int> mask,
                              std::span<double> grad, BlockWorkspace& ws) {
  const int dim = A.dim();
  const int n_elems = A.group_order();
  ws.by_elem.assign(n_elems, {});
  for (size_t i = lo; i < hi; ++i) {
    const Sample& s = batch[i];
    require_dim(s.input.size(), static_cast<size_t>(dim), "sample input");
    require_dim(s.target.size(), mask.size(), "sample target");
    A.check_element(s.g);
    ws.by_elem[s.g].push_back(i);
  }
  double loss = 0.0;
  for (int g = 0; g < n_elems; ++g) {
    const auto& idx = ws.by_elem[g];
    if (idx.empty()) continue;
    const int B = static_cast<int>(idx.size());
    ws.X.resize(dim, B);
    FView X = ws.X.view();
    for (int f = 0; f < dim; ++f) {
      double* xr = X.row(f);
      for (int s = 0; s < B; ++s) xr[s] = batch[idx[s]].input[f];
    }
    A.apply_batch(g, X, ws.tape);
    if (!grad.empty()) {
      ws.G.resize(dim, B);
      std::fill(ws.G.data.begin(), ws.G.data.end(), 0.0);
    }
    for (size_t c = 0; c < mask.size(); ++c) {
      const double* outc = X.row(mask[c]);
      double* gc = grad.empty() ? nullptr : ws.G.view().row(mask[c]);
      for (int s = 0; s < B; ++s) {
        const double r = outc[s] - batch[idx[s]].target[c];
        loss += r * r;
        if (gc) gc[s] = 2.0 * r;
      }
    }
    if (!grad.empty()) A.backprop_batch(ws.tape, ws.G.view(), grad);
  }
  return loss;
}

inline double batch_loss_grad(const NeuralGroupAction& A, std::span<const Sample> batch,
                              std::span<const int> mask, Vec* grad_out, int threads) {
  const size_t n = batch.size();
  const size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  const size_t np = grad_out ? A.param_count() : 0;
  std::vector<double> block_loss(nblocks, 0.0);
  std::vector<Vec> block_grad(nblocks);

  auto run_block = [&](size_t b, BlockWorkspace& ws) {
    if (grad_out) block_grad[b].assign(np, 0.0);
    std::span<double> gspan = grad_out ? std::span<double>(block_grad[b]) : std::span<double>();
    block_loss[b] = block_loss_grad(A, batch, b * kReduceBlock,
                                    std::min(n, (b + 1) * kReduceBlock), mask, gspan, ws);
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(nblocks)));
  if (workers == 1) {
    BlockWorkspace ws;
    for (size_t b = 0; b < nblocks; ++b) run_block(b, ws);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        BlockWorkspace ws;
        for (size_t b = next.fetch_add(1); b < nblocks; b = next.fetch_add(1)) run_block(b, ws);
      });
    }
    for (auto& th : pool) th.join();
  }

  double total = 0.0;
  if (grad_out) grad_out->assign(np, 0.0);
  for (size_t b = 0; b < nblocks; ++b) {
    total += block_loss[b];
    if (grad_out)
      for (size_t k = 0; k < np; ++k) (*grad_out)[k] += block_grad[b][k];
  }
  return total;
}

}  // namespace detail

/// Sum of squared errors over the masked output coordinates, summed over the
/// batch; no averaging.
inline double loss(const NeuralGroupAction& A, std::span<const Sample> batch,
                   std::span<const int> mask) {
  if (batch.empty()) throw Error("loss: batch must be nonempty");
  return detail::batch_loss_grad(A, batch, mask, nullptr, 1);
}

/// Companion metric: RMS error per masked coordinate for a given summed loss.
inline double per_coordinate_rms(double summed_loss, size_t num_samples, size_t mask_size) {
  if (num_samples == 0 || mask_size == 0) return 0.0;
  return std::sqrt(summed_loss / (static_cast<double>(num_samples) * mask_size));
}

struct AdamState {
  int64_t step = 0;
  Vec m, v;
};

/// Bias-corrected Adam update: theta -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(Vec& params, const Vec& grads, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionMismatch("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw DimensionMismatch("adam_step: stale state");
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

/// Hook invoked after each epoch (checkpointing, logging). Throwing aborts
/// training.
using EpochHook =
    std::function<void(const EpochStats&, const NeuralGroupAction&, const AdamState&)>;

/// Minibatch Adam on the summed squared-error loss. The dataset is split
/// 90/10 into train/test by a seeded shuffle; history rows carry the summed
/// train loss, held-out test loss, and the per-epoch law spot-check. Runs
/// until target loss or max epochs. Deterministic given the config seed.
inline TrainResult train(NeuralGroupAction& A, std::vector<Sample> dataset,
                         const TrainConfig& cfg, const EpochHook& hook = {}) {
  if (dataset.empty()) throw Error("train: dataset must be nonempty");
  cfg.validate(A.dim());
  const auto t0 = std::chrono::steady_clock::now();

  // seeded 90/10 split
  Rng split_rng(Rng::mix(cfg.seed, 0x5417));
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  size_t num_test = static_cast<size_t>(dataset.size() * cfg.test_fraction);
  if (cfg.test_fraction > 0.0 && num_test == 0 && dataset.size() > 1) num_test = 1;
  std::vector<Sample> test_set, train_set;
  for (size_t i = 0; i < order.size(); ++i)
    (i < num_test ? test_set : train_set).push_back(std::move(dataset[order[i]]));

  auto eval_test = [&]() {
    return test_set.empty()
               ? 0.0
               : detail::batch_loss_grad(A, test_set, cfg.readout_mask, nullptr, cfg.threads);
  };
  auto law_residual = [&](int epoch) {
    if (cfg.law_check_samples <= 0) return 0.0;
    return verify_group_laws(A, cfg.law_check_samples, 1.0, Rng::mix(cfg.seed, 7622 + epoch))
        .max_residual;
  };

  TrainResult res;
  res.train_samples = train_set.size();
  res.test_samples = test_set.size();
  auto record = [&](int epoch, double train_loss) {
    EpochStats st{epoch, train_loss, eval_test(), law_residual(epoch)};
    res.history.push_back(st);
    return st;
  };
  auto finish = [&](bool reached, int epochs) {
    res.reached_target = reached;
    res.epochs_run = epochs;
    const EpochStats& last = res.history.back();
    res.final_train_loss = last.train_loss;
    res.final_test_loss = last.test_loss;
    res.final_max_law_residual = last.max_law_residual;
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };

  // epoch 0: losses before any update
  const double initial_loss =
      detail::batch_loss_grad(A, train_set, cfg.readout_mask, nullptr, cfg.threads);
  const EpochStats st0 = record(0, initial_loss);
  if (hook) hook(st0, A, AdamState{});
  if (initial_loss <= cfg.target_loss) return finish(true, 0);

  Vec params = A.get_params();
  Vec grad;
  AdamState state;
  const size_t batch = cfg.batch_size == 0 ? train_set.size() : static_cast<size_t>(cfg.batch_size);
  std::vector<size_t> idx(train_set.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<Sample> minibatch;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    if (batch >= train_set.size()) {
      epoch_loss = detail::batch_loss_grad(A, train_set, cfg.readout_mask, &grad, cfg.threads);
      adam_step(params, grad, state, cfg);
      A.set_params(params);
    } else {
      Rng shuffle_rng(Rng::mix(cfg.seed, 0xe70c + epoch));
      shuffle_rng.shuffle(idx);
      for (size_t lo = 0; lo < idx.size(); lo += batch) {
        const size_t hi = std::min(idx.size(), lo + batch);
        minibatch.clear();
        for (size_t i = lo; i < hi; ++i) minibatch.push_back(train_set[idx[i]]);
        epoch_loss +=
            detail::batch_loss_grad(A, minibatch, cfg.readout_mask, &grad, cfg.threads);
        adam_step(params, grad, state, cfg);
        A.set_params(params);
      }
    }
    const EpochStats st = record(epoch, epoch_loss);
    if (hook) hook(st, A, state);
    if (!std::isfinite(epoch_loss) || epoch_loss > 1e6 * std::max(initial_loss, 1e-9)) {
      throw NonFiniteLoss("training diverged at epoch " + std::to_string(epoch) +
                              " (loss " + std::to_string(epoch_loss) + ")",
                          res.history);
    }
    if (st.train_loss <= cfg.target_loss) return finish(true, epoch);
  }
  return finish(false, cfg.max_epochs);
}

}  // namespace nga
