#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>

#include "nga/io.hpp"
#include "nga/quantum.hpp"

namespace nga::cli {

namespace fs = std::filesystem;

/// Everything cmd_train needs: group, architecture, dataset size, optimizer
/// settings, seeds, output directory. Loaded from JSON; omitted fields take
/// the defaults below, which reproduce the Q8 gate experiment.
struct RunConfig {
  std::string group = "Q8";
  std::string group_file;  // JSON Cayley table; overrides `group` when set
  int p = 16;
  NetSpec net;  // one coupling layer per T_s, three + permutations for H
  int num_states = 1024;
  TrainConfig train;
  uint64_t seed = 1;
  int threads = 1;
  std::string out_dir;

  RunConfig() {
    train.batch_size = 1024;
    train.max_epochs = 400;
    train.target_loss = 2e-9;
  }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

}  // namespace detail

inline json run_config_to_json(const RunConfig& c) {
  return json{{"group", c.group},
              {"group_file", c.group_file},
              {"p", c.p},
              {"net",
               {{"slot_coupling_layers", c.net.slot_coupling_layers},
                {"conj_coupling_layers", c.net.conj_coupling_layers},
                {"hidden", c.net.hidden}}},
              {"dataset", {{"num_states", c.num_states}}},
              {"train",
               {{"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"target_loss", c.train.target_loss},
                {"checkpoint_every", c.train.checkpoint_every}}},
              {"seed", c.seed},
              {"threads", c.threads},
              {"out_dir", c.out_dir}};
}

inline RunConfig run_config_from_json(const json& j) {
  detail::check_keys(j, {"group", "group_file", "p", "net", "dataset", "train", "seed",
                         "threads", "out_dir"},
                     "config");
  RunConfig c;
  c.group = j.value("group", c.group);
  c.group_file = j.value("group_file", c.group_file);
  c.p = j.value("p", c.p);
  if (c.p < 2 || c.p % 2 != 0)
    throw ConfigError("p must be a positive even integer (additive coupling splits each slot "
                      "in half); got " + std::to_string(c.p));
  if (j.contains("net")) {
    const json& n = j.at("net");
    detail::check_keys(n, {"slot_coupling_layers", "conj_coupling_layers", "hidden"}, "config.net");
    c.net.slot_coupling_layers = n.value("slot_coupling_layers", c.net.slot_coupling_layers);
    c.net.conj_coupling_layers = n.value("conj_coupling_layers", c.net.conj_coupling_layers);
    c.net.hidden = n.value("hidden", c.net.hidden);
    if (c.net.slot_coupling_layers < 0 || c.net.conj_coupling_layers < 0)
      throw ConfigError("coupling layer counts must be >= 0");
    for (int h : c.net.hidden)
      if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  if (j.contains("dataset")) {
    detail::check_keys(j.at("dataset"), {"num_states"}, "config.dataset");
    c.num_states = j.at("dataset").value("num_states", c.num_states);
    if (c.num_states < 1) throw ConfigError("dataset.num_states must be >= 1");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::check_keys(t,
                       {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs",
                        "target_loss", "checkpoint_every"},
                       "config.train");
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.beta1 = t.value("beta1", c.train.beta1);
    c.train.beta2 = t.value("beta2", c.train.beta2);
    c.train.epsilon = t.value("epsilon", c.train.epsilon);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.target_loss = t.value("target_loss", c.train.target_loss);
    c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
  }
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return run_config_from_json(parse_json_file(path));
}

inline FiniteGroup group_from_config(const RunConfig& c) {
  if (!c.group_file.empty()) return group_from_json(parse_json_file(c.group_file));
  return builtin_group(c.group);
}

/// Standard generators of the Q8 gate group.
inline std::vector<Gate> default_generators() {
  const double pi = 3.14159265358979323846;
  return {rotation_gate(Axis::X, pi), rotation_gate(Axis::Y, pi), rotation_gate(Axis::Z, pi)};
}

/// Relabels gate-group elements into the model's group: composes the gate
/// closure's Q8 isomorphism with one from builtin Q8 onto `target`. Throws
/// when target is not isomorphic to Q8.
inline std::vector<int> gate_elements_for_group(const GateGroup& gg, const FiniteGroup& target) {
  const std::vector<int> to_target = nga::detail::find_isomorphism(gg.q8, target);
  if (to_target.empty())
    throw ConfigError("the gate dataset needs a group isomorphic to Q8; '" +
                      std::string("order ") + std::to_string(target.order()) + "' group is not");
  std::vector<int> out(gg.iso.size());
  for (size_t i = 0; i < gg.iso.size(); ++i) out[i] = to_target[gg.iso[i]];
  return out;
}

struct TrainOutputs {
  std::string run_dir;
  std::string model_path;
  TrainResult result;
};

/// Builds the configured action, generates the gate dataset, trains, and
/// writes model.json, loss.csv, and summary.json under the run directory.
/// Returns exit code 0 when the target loss was reached, 2 otherwise.
inline int cmd_train(const std::string& config_path, const std::string& out_override = "",
                     TrainOutputs* outputs = nullptr) {
  RunConfig cfg = load_run_config(config_path);
  const json effective = run_config_to_json(cfg);

  std::string run_dir = !out_override.empty() ? out_override : cfg.out_dir;
  if (run_dir.empty()) {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%08llx",
                  static_cast<unsigned long long>(detail::fnv1a(effective.dump()) & 0xffffffffULL));
    run_dir = "runs/" + cfg.group + "-" + hash + "-" + detail::utc_timestamp();
  }
  fs::create_directories(run_dir);

  FiniteGroup G = group_from_config(cfg);
  FiniteGAction act = left_multiplication_action(G);
  Rng param_rng(Rng::mix(cfg.seed, 1));
  NeuralGroupAction A = make_neural_group_action(std::move(act), cfg.p, cfg.net, param_rng);

  const GateGroup gg = generate_gate_group(default_generators());
  const std::vector<int> elem = gate_elements_for_group(gg, G);
  Embedding emb{A.dim(), {0, 1, 2, 3}};
  std::vector<Sample> dataset = make_dataset(gg, cfg.num_states, Rng::mix(cfg.seed, 2), emb);
  // make_dataset labels samples with builtin-Q8 elements; remap onto G
  {
    std::vector<int> remap(G.order());
    for (size_t j = 0; j < gg.gates.size(); ++j) remap[gg.iso[j]] = elem[j];
    for (Sample& s : dataset) s.g = remap[s.g];
  }

  TrainConfig tc = cfg.train;
  tc.seed = Rng::mix(cfg.seed, 3);
  tc.readout_mask = emb.mask();
  tc.threads = cfg.threads;

  EpochHook hook = [&](const EpochStats& st, const NeuralGroupAction& model,
                       const AdamState& ost) {
    std::printf("epoch %d  train %.6e  test %.6e  law %.2e\n", st.epoch, st.train_loss,
                st.test_loss, st.max_law_residual);
    std::fflush(stdout);
    if (tc.checkpoint_every > 0 && st.epoch % tc.checkpoint_every == 0) {
      json mj = model_to_json(model);
      mj["embedding"] = json{{"dim", emb.dim}, {"coords", emb.coords}};
      write_text_file(run_dir + "/model_epoch" + std::to_string(st.epoch) + ".json",
                      mj.dump(2) + "\n");
      write_text_file(run_dir + "/adam_epoch" + std::to_string(st.epoch) + ".json",
                      adam_state_to_json(ost).dump(2) + "\n");
    }
  };

  bool diverged = false;
  std::string divergence_message;
  TrainResult result;
  try {
    result = train(A, std::move(dataset), tc, hook);
  } catch (const NonFiniteLoss& e) {
    diverged = true;
    divergence_message = e.what();
    result.history = e.history;
    if (!result.history.empty()) {
      const EpochStats& last = result.history.back();
      result.final_train_loss = last.train_loss;
      result.final_test_loss = last.test_loss;
      result.final_max_law_residual = last.max_law_residual;
      result.epochs_run = last.epoch;
    }
  }

  json mj = model_to_json(A);
  mj["embedding"] = json{{"dim", emb.dim}, {"coords", emb.coords}};
  write_text_file(run_dir + "/model.json", mj.dump(2) + "\n");
  write_text_file(run_dir + "/loss.csv", history_to_csv(result.history));

  json summary{{"schema_version", kSchemaVersion},
               {"reached_target", result.reached_target},
               {"diverged", diverged},
               {"epochs_run", result.epochs_run},
               {"train_samples", result.train_samples},
               {"test_samples", result.test_samples},
               {"final_train_loss", result.final_train_loss},
               {"final_test_loss", result.final_test_loss},
               {"final_test_loss_per_sample", result.test_loss_per_sample()},
               {"final_rms_per_coordinate",
                per_coordinate_rms(result.final_test_loss, std::max<size_t>(1, result.test_samples),
                                   4)},
               {"max_law_residual", result.final_max_law_residual},
               {"wall_seconds", result.wall_seconds},
               {"config", effective}};
  if (diverged) summary["divergence_message"] = divergence_message;
  write_text_file(run_dir + "/summary.json", summary.dump(2) + "\n");

  std::cout << "wrote " << run_dir << "/model.json (final test loss "
            << fmt_double(result.final_test_loss) << ", "
            << (result.reached_target ? "target reached" : "target not reached") << ")\n";
  if (outputs) *outputs = TrainOutputs{run_dir, run_dir + "/model.json", result};
  return result.reached_target ? 0 : 2;
}

/// Loads a model, checks the group laws (and volume preservation when the
/// dimension allows finite differencing), writes law_report.json, and exits
/// 0 iff everything passed.
inline int cmd_verify(const std::string& model_path, int samples, double tol,
                      const std::string& out_dir = ".") {
  NeuralGroupAction A = model_from_json(parse_json_file(model_path));
  const LawReport rep = verify_group_laws(A, samples, tol);
  json out = law_report_to_json(rep);
  bool pass = rep.pass;
  if (A.dim() <= 32) {
    const VolumeReport vol = verify_volume(A, std::min(samples, 20), 1e-5, 1e-6);
    out["volume"] = volume_report_to_json(vol);
    pass = pass && vol.pass;
  }
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/law_report.json", out.dump(2) + "\n");
  std::cout << (pass ? "PASS" : "FAIL") << ": max law residual "
            << fmt_double(rep.max_residual) << " (tol " << fmt_double(tol) << ", "
            << samples << " samples)\n";
  return pass ? 0 : 1;
}

/// Bloch CSV schema: label,x,y,z,re0,im0,re1,im1. One row for the input
/// state, one per element for the learned transformation, one per element for
/// the true gate: 17 rows for Q8.
inline int cmd_eval(const std::string& model_path, uint64_t state_seed,
                    const std::string& out_dir = ".") {
  const json mj = parse_json_file(model_path);
  NeuralGroupAction A = model_from_json(mj);
  if (!mj.contains("embedding"))
    throw ConfigError("model file lacks the 'embedding' block written by cmd_train");
  Embedding emb;
  emb.dim = mj.at("embedding").at("dim").get<int>();
  const auto coords = mj.at("embedding").at("coords").get<std::vector<int>>();
  if (static_cast<int>(coords.size()) != 4 || emb.dim != A.dim())
    throw ConfigError("model embedding block is malformed");
  for (int k = 0; k < 4; ++k) emb.coords[k] = coords[k];

  const GateGroup gg = generate_gate_group(default_generators());
  const std::vector<int> elem = gate_elements_for_group(gg, A.action.group);
  const QubitState psi = random_state(state_seed);

  auto bloch_row = [](const std::string& label, const std::array<double, 4>& r) {
    const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
    std::array<double, 3> b{0.0, 0.0, 0.0};
    if (n > 1e-9) {
      const QubitState s{{r[0] / n, r[1] / n}, {r[2] / n, r[3] / n}};
      b = bloch_coordinates(s);
    }
    std::string row = label;
    for (double v : b) row += "," + fmt_double(v);
    for (double v : r) row += "," + fmt_double(v);
    return row + "\n";
  };

  std::string csv = "label,x,y,z,re0,im0,re1,im1\n";
  csv += bloch_row("input", psi.reals());

  json elems = json::array();
  double max_linf = 0.0;
  std::vector<std::string> true_rows;
  for (size_t j = 0; j < gg.gates.size(); ++j) {
    const QubitState truth = apply_gate(gg.gates[j], psi);
    const Vec out = A.apply(elem[j], emb.embed(psi));
    std::array<double, 4> learned{};
    for (int k = 0; k < 4; ++k) learned[k] = out[emb.coords[k]];
    const auto tr = truth.reals();
    double linf = 0.0;
    for (int k = 0; k < 4; ++k) linf = std::max(linf, std::abs(learned[k] - tr[k]));
    max_linf = std::max(max_linf, linf);

    const double lnorm = std::sqrt(learned[0] * learned[0] + learned[1] * learned[1] +
                                   learned[2] * learned[2] + learned[3] * learned[3]);
    double pdist = 1.0;
    if (lnorm > 1e-9) {
      const QubitState ls{{learned[0] / lnorm, learned[1] / lnorm},
                          {learned[2] / lnorm, learned[3] / lnorm}};
      pdist = phase_invariant_distance(ls, truth);
    }
    elems.push_back(json{{"label", gg.gates[j].label},
                         {"linf_error", linf},
                         {"phase_invariant_distance", pdist}});
    csv += bloch_row("learned:" + gg.gates[j].label, learned);
    true_rows.push_back(bloch_row("true:" + gg.gates[j].label, tr));
  }
  for (const std::string& row : true_rows) csv += row;

  fs::create_directories(out_dir);
  write_text_file(out_dir + "/bloch.csv", csv);
  write_text_file(out_dir + "/eval.json",
                  json{{"state_seed", state_seed}, {"max_linf_error", max_linf},
                       {"elements", elems}}
                          .dump(2) +
                      "\n");
  std::cout << "wrote " << out_dir << "/bloch.csv (max readout error " << fmt_double(max_linf)
            << ")\n";
  return 0;
}

/// Writes the supervised gate dataset in a compact form: the qubit state and
/// per-element targets, plus the embedding needed to reconstruct full inputs.
inline int cmd_gen_dataset(int num_states, uint64_t seed, const std::string& out_path,
                           const std::string& config_path = "") {
  RunConfig cfg = load_run_config(config_path);
  const GateGroup gg = generate_gate_group(default_generators());
  Embedding emb{cfg.p * gg.table.order(), {0, 1, 2, 3}};
  json samples = json::array();
  for (int i = 0; i < num_states; ++i) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
    const QubitState psi = random_state(rng);
    const auto in = psi.reals();
    json per_elem = json::array();
    for (size_t j = 0; j < gg.gates.size(); ++j) {
      const auto tr = apply_gate(gg.gates[j], psi).reals();
      per_elem.push_back(json{{"g", gg.iso[j]},
                              {"label", gg.gates[j].label},
                              {"target", std::vector<double>(tr.begin(), tr.end())}});
    }
    samples.push_back(json{{"state", std::vector<double>(in.begin(), in.end())},
                           {"transforms", per_elem}});
  }
  json out{{"schema_version", kSchemaVersion},
           {"group", group_to_json(gg.q8)},
           {"embedding", {{"dim", emb.dim}, {"coords", emb.coords}}},
           {"seed", seed},
           {"samples", samples}};
  if (!out_path.empty()) {
    if (fs::path(out_path).has_parent_path())
      fs::create_directories(fs::path(out_path).parent_path());
    write_text_file(out_path, out.dump(2) + "\n");
    std::cout << "wrote " << out_path << " (" << num_states << " states x "
              << gg.gates.size() << " elements)\n";
  } else {
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

}  // namespace nga::cli
