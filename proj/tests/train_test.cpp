#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nga/numdiff.hpp"
#include "nga/train.hpp"

using namespace nga;

namespace {

NeuralGroupAction small_action(uint64_t seed, const char* group = "Z2", int p = 2,
                               NetSpec spec = NetSpec{1, 1, {6}}) {
  Rng rng(seed);
  return make_neural_group_action(left_multiplication_action(builtin_group(group)), p, spec, rng);
}

void randomize_params(NeuralGroupAction& A, Rng& rng, double scale = 0.4) {
  Vec params = A.get_params();
  for (double& v : params)
    if (v == 0.0) v = rng.uniform(-scale, scale);
  A.set_params(params);
}

std::vector<Sample> random_dataset(const NeuralGroupAction& teacher, int count, uint64_t seed,
                                   const std::vector<int>& mask) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    Sample s;
    s.g = static_cast<int>(rng.index(teacher.group_order()));
    s.input.resize(teacher.dim());
    for (double& v : s.input) v = rng.gaussian();
    const Vec y = teacher.apply(s.g, s.input);
    for (int c : mask) s.target.push_back(y[c]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("loss definition") {
  NeuralGroupAction A = small_action(1);
  Rng rng(2);
  randomize_params(A, rng);
  const std::vector<int> mask{0, 1, 2, 3};

  SUBCASE("zero when targets equal the model output") {
    // targets come from the one-sample path; the blocked evaluation may
    // round differently in the last ulp, so "zero" means representation noise
    const std::vector<Sample> batch = random_dataset(A, 8, 3, mask);
    CHECK(loss(A, batch, mask) <= 1e-24);
  }
  SUBCASE("one masked coordinate with residual 0.5 gives 0.25") {
    Vec x(A.dim());
    for (double& v : x) v = rng.gaussian();
    const std::vector<int> single{2};
    const Vec y = A.apply(1, x);
    Sample s{1, x, {y[2] - 0.5}};
    CHECK(loss(A, std::vector<Sample>{s}, single) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("identity-initialized action, g = e, targets = input readout") {
    NeuralGroupAction fresh = small_action(4);  // zero-init couplings, no permutations in T
    Vec x(fresh.dim());
    for (double& v : x) v = rng.gaussian();
    Sample s{0, x, {}};
    for (int c : mask) s.target.push_back(x[c]);
    CHECK(loss(fresh, std::vector<Sample>{s}, mask) <= 1e-24);
  }
  SUBCASE("order invariance of the sum") {
    std::vector<Sample> batch = random_dataset(A, 700, 5, mask);
    for (Sample& s : batch) s.target[0] += 0.01;  // make it nonzero
    const double a = loss(A, batch, mask);
    Rng shuffle_rng(6);
    shuffle_rng.shuffle(batch);
    const double b = loss(A, batch, mask);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
  SUBCASE("per-coordinate rms") {
    CHECK(per_coordinate_rms(4.0, 4, 4) == doctest::Approx(0.5));
  }
  SUBCASE("mismatched sample dimensions throw") {
    Sample bad{0, Vec{1.0}, Vec{0.0, 0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(loss(A, std::vector<Sample>{bad}, mask), DimensionMismatch);
    CHECK_THROWS_AS(loss(A, std::vector<Sample>{}, mask), Error);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Vec params{1.0, -2.0, 3.0};
  AdamState st;
  TrainConfig cfg;
  adam_step(params, Vec{0.0, 0.0, 0.0}, st, cfg);
  CHECK(params == Vec{1.0, -2.0, 3.0});
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step matches the hand-computed update") {
  // t=1: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps)
  const double g = 2.0, lr = 1e-3, eps = 1e-8;
  Vec params{1.0};
  AdamState st;
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.epsilon = eps;
  adam_step(params, Vec{g}, st, cfg);
  const double expected = 1.0 - lr * g / (std::abs(g) + eps);
  CHECK(params[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("adam: constant gradient moves at -lr * sign(g) asymptotically") {
  Vec params{0.0};
  AdamState st;
  TrainConfig cfg;
  const double g = -0.37;
  double prev = params[0];
  double delta = 0.0;
  for (int t = 0; t < 3000; ++t) {
    adam_step(params, Vec{g}, st, cfg);
    delta = params[0] - prev;
    prev = params[0];
  }
  CHECK(delta == doctest::Approx(cfg.learning_rate).epsilon(0.01));  // toward +, g < 0
}

TEST_CASE("train: dataset of current outputs converges at epoch 0") {
  NeuralGroupAction A = small_action(10);
  Rng rng(11);
  randomize_params(A, rng);
  const std::vector<int> mask{0, 1, 2, 3};
  TrainConfig cfg;
  cfg.readout_mask = mask;
  cfg.seed = 9;
  cfg.max_epochs = 50;
  cfg.target_loss = 1e-24;  // "zero" up to cross-path rounding
  const TrainResult res = train(A, random_dataset(A, 32, 12, mask), cfg);
  CHECK(res.reached_target);
  CHECK(res.epochs_run == 0);
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].train_loss <= 1e-24);
  CHECK(res.history[0].epoch == 0);
}

TEST_CASE("train: realizable slot-map regression reaches 1e-8") {
  // teacher with hand-set linear conditioners; student starts at identity
  NeuralGroupAction teacher = small_action(20, "Z2", 2, NetSpec{1, 0, {}});
  {
    Vec p = teacher.get_params();
    REQUIRE(p.size() == 4);  // W,b per slot conditioner (1x1 each)
    p = {0.7, -0.3, 0.2, 0.1};
    teacher.set_params(p);
  }
  const std::vector<int> mask{0, 1, 2, 3};
  std::vector<Sample> data = random_dataset(teacher, 64, 21, mask);

  NeuralGroupAction student = small_action(22, "Z2", 2, NetSpec{1, 0, {}});
  TrainConfig cfg;
  cfg.readout_mask = mask;
  cfg.seed = 23;
  cfg.max_epochs = 2000;  // full batch: one step per epoch
  cfg.target_loss = 1e-8;
  cfg.law_check_samples = 2;
  const TrainResult res = train(student, data, cfg);
  CHECK(res.reached_target);
  CHECK(res.final_train_loss < 1e-8);
  CHECK(res.epochs_run <= 2000);
}

TEST_CASE("train: loss gradient matches finite differences end to end") {
  NeuralGroupAction A = small_action(30, "Z2", 4, NetSpec{1, 2, {8, 8}});
  Rng rng(31);
  randomize_params(A, rng);
  REQUIRE(A.param_count() <= 10000);
  const std::vector<int> mask{0, 2, 7};
  NeuralGroupAction teacher = small_action(32, "Z2", 4, NetSpec{1, 2, {8, 8}});
  Rng trng(33);
  randomize_params(teacher, trng);
  const std::vector<Sample> batch = random_dataset(teacher, 3, 34, mask);

  Vec grad;
  detail::batch_loss_grad(A, batch, mask, &grad, 1);
  auto scalar = [&](const Vec& q) {
    NeuralGroupAction B = A;
    B.set_params(q);
    return loss(B, batch, mask);
  };
  const Vec fd = numeric_gradient(scalar, A.get_params(), 1e-6);
  REQUIRE(fd.size() == grad.size());
  for (size_t i = 0; i < fd.size(); ++i) {
    const double denom = std::max(std::abs(fd[i]), 1e-3);
    CHECK(std::abs(fd[i] - grad[i]) / denom <= 1e-5);
  }
}

TEST_CASE("train: bitwise reproducible under a fixed seed") {
  auto run = [] {
    NeuralGroupAction teacher = small_action(40, "Z2", 2, NetSpec{1, 1, {4}});
    Rng rng(41);
    randomize_params(teacher, rng);
    const std::vector<int> mask{0, 1, 2, 3};
    std::vector<Sample> data = random_dataset(teacher, 40, 42, mask);
    NeuralGroupAction student = small_action(43, "Z2", 2, NetSpec{1, 1, {4}});
    TrainConfig cfg;
    cfg.readout_mask = mask;
    cfg.seed = 44;
    cfg.max_epochs = 25;
    cfg.batch_size = 16;
    cfg.target_loss = 0.0;
    const TrainResult res = train(student, data, cfg);
    Vec out = student.get_params();
    for (const EpochStats& st : res.history) {
      out.push_back(st.train_loss);
      out.push_back(st.test_loss);
      out.push_back(st.max_law_residual);
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("train: group laws hold after every epoch") {
  NeuralGroupAction teacher = small_action(50, "K4", 2, NetSpec{1, 1, {6}});
  Rng rng(51);
  randomize_params(teacher, rng);
  const std::vector<int> mask{0, 1};
  std::vector<Sample> data = random_dataset(teacher, 48, 52, mask);
  NeuralGroupAction student = small_action(53, "K4", 2, NetSpec{1, 1, {6}});
  TrainConfig cfg;
  cfg.readout_mask = mask;
  cfg.seed = 54;
  cfg.max_epochs = 15;
  cfg.batch_size = 16;
  const TrainResult res = train(student, data, cfg);
  for (const EpochStats& st : res.history) CHECK(st.max_law_residual <= 1e-10);
}

TEST_CASE("train: divergence aborts with history") {
  NeuralGroupAction teacher = small_action(60, "Z2", 2, NetSpec{1, 1, {6}});
  Rng rng(61);
  randomize_params(teacher, rng);
  const std::vector<int> mask{0, 1, 2, 3};
  std::vector<Sample> data = random_dataset(teacher, 32, 62, mask);
  NeuralGroupAction student = small_action(63, "Z2", 2, NetSpec{1, 1, {6}});
  TrainConfig cfg;
  cfg.readout_mask = mask;
  cfg.seed = 64;
  cfg.max_epochs = 400;
  cfg.learning_rate = 1e6;  // blow up on purpose
  try {
    train(student, data, cfg);
    CHECK(false);  // must not converge quietly at this rate
  } catch (const NonFiniteLoss& e) {
    CHECK_FALSE(e.history.empty());
  }
}

TEST_CASE("batch gradients are bitwise independent of the worker count") {
  NeuralGroupAction A = small_action(80, "K4", 2, NetSpec{1, 1, {6}});
  Rng rng(81);
  randomize_params(A, rng);
  const std::vector<int> mask{0, 1, 2, 3};
  NeuralGroupAction teacher = small_action(82, "K4", 2, NetSpec{1, 1, {6}});
  Rng trng(83);
  randomize_params(teacher, trng);
  // several reduce blocks' worth of samples
  const std::vector<Sample> batch = random_dataset(teacher, 1000, 84, mask);
  Vec g1, g3;
  const double l1 = detail::batch_loss_grad(A, batch, mask, &g1, 1);
  const double l3 = detail::batch_loss_grad(A, batch, mask, &g3, 3);
  CHECK(l1 == l3);
  CHECK(g1 == g3);
}

TEST_CASE("config validation") {
  NeuralGroupAction A = small_action(70);
  TrainConfig cfg;
  cfg.readout_mask = {};
  std::vector<Sample> data{{0, Vec(A.dim(), 0.0), {}}};
  CHECK_THROWS_AS(train(A, data, cfg), ConfigError);
  cfg.readout_mask = {A.dim() + 3};
  CHECK_THROWS_AS(train(A, data, cfg), ConfigError);
  cfg.readout_mask = {0};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(train(A, data, cfg), ConfigError);
}
