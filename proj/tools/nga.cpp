// Command-line front end: train / verify / eval / gen-dataset.

#include <CLI11.hpp>

#include "nga/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"group-equivariant invertible networks: build, train, verify, evaluate"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_dir;
  uint64_t seed = 1;
  int samples = 100;
  double tol = 1e-9;

  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config_path, "config JSON (defaults reproduce the Q8 run)");
  train->add_option("--out", out_dir, "run directory (default: runs/<hash>-<timestamp>)");

  auto* verify = app.add_subcommand("verify", "check group laws (and volume when dim <= 32)");
  verify->add_option("--model", model_path, "model JSON")->required();
  verify->add_option("--samples", samples, "random inputs per check (default 100)");
  verify->add_option("--tol", tol, "residual tolerance (default 1e-9)");
  verify->add_option("--out", out_dir, "where to write law_report.json (default .)");

  auto* eval = app.add_subcommand("eval", "apply learned and true gates to a random state");
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--seed", seed, "state seed (default 1)");
  eval->add_option("--out", out_dir, "where to write bloch.csv and eval.json (default .)");

  std::string dataset_out = "dataset.json";
  auto* gen = app.add_subcommand("gen-dataset", "write the supervised gate dataset");
  gen->add_option("--samples", samples, "number of random states (default 100)");
  gen->add_option("--seed", seed, "dataset seed (default 1)");
  gen->add_option("--out", dataset_out, "output path (default dataset.json)");
  gen->add_option("--config", config_path, "config JSON, for the embedding dimension");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return nga::cli::cmd_train(config_path, out_dir);
    if (verify->parsed())
      return nga::cli::cmd_verify(model_path, samples, tol, out_dir.empty() ? "." : out_dir);
    if (eval->parsed())
      return nga::cli::cmd_eval(model_path, seed, out_dir.empty() ? "." : out_dir);
    if (gen->parsed()) return nga::cli::cmd_gen_dataset(samples, seed, dataset_out, config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
