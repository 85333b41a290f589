// ddeld command-line tool.
//
//   ddeld gen    --config cfg.json --out data/
//   ddeld eval   --config cfg.json [--dataset data/dataset.ddld] --window 11
//   ddeld sweep  --config cfg.json --threads 4
//   ddeld bench  [--repetitions 9]
//   ddeld probe  --radius 2 --layers 3
//   ddeld sizing --config cfg.json
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include "CLI11.hpp"

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "ddeld/experiment.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

unsigned threads_from_env() {
  const char* env = std::getenv("DDELD_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  unsigned v = 0;
  const std::string s(env);
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || v == 0) {
    throw ddeld::ConfigError("DDELD_THREADS must be a positive integer, got '" + s + "'");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain decomposition for local-dependency PDE surrogates"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string window;
  std::optional<unsigned> threads;
  std::optional<std::string> dataset_path;
  std::size_t repetitions = 0;
  std::size_t radius = 0, layers = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Dataset and fitting seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--window", window, "Window sizes w1,..,wd");
    sub->add_option("--threads", threads, "Worker threads (default: DDELD_THREADS or 1)")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen", "Generate a dataset file");
  auto* eval = app.add_subcommand("eval", "Fit and evaluate a predictor");
  auto* sweep = app.add_subcommand("sweep", "Window size x frequency r2 grid");
  auto* bench = app.add_subcommand("bench", "Time chunk + patch against B_max");
  auto* probe = app.add_subcommand("probe", "Receptive-field impulse probe");
  auto* sizing = app.add_subcommand("sizing", "Window size recommendation");
  for (auto* sub : {gen, eval, sweep, bench, probe, sizing}) common(sub);
  eval->add_option("--dataset", dataset_path, "Evaluate on an existing dataset file");
  bench->add_option("--repetitions", repetitions, "Repetitions per B_max point")->check(CLI::PositiveNumber);
  probe->add_option("--radius", radius, "Stencil radius")->check(CLI::PositiveNumber);
  probe->add_option("--layers", layers, "Number of composed layers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  ddeld::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = ddeld::load_config(config_path);
    cfg.threads = threads ? *threads : threads_from_env();
    if (seed) cfg.dataset.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!window.empty()) cfg.window = ddeld::parse_window_flag(window, cfg.dataset.shape.rank());
    if (repetitions) cfg.bench.repetitions = repetitions;
    if (radius) cfg.probe.radius = radius;
    if (layers) cfg.probe.layers = layers;
  } catch (const ddeld::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (gen->parsed()) {
      ddeld::cmd_gen(cfg, std::cout, cfg.out + "/dataset.ddld");
    } else if (eval->parsed()) {
      ddeld::cmd_eval(cfg, std::cout, cfg.out, dataset_path);
    } else if (sweep->parsed()) {
      ddeld::cmd_sweep(cfg, std::cout, cfg.out);
    } else if (bench->parsed()) {
      ddeld::cmd_bench(cfg.bench, std::cout, cfg.out);
    } else if (probe->parsed()) {
      const auto r = ddeld::cmd_probe(cfg.probe.radius, cfg.probe.layers, std::cout);
      if (!r.pass) return kRuntimeError;
    } else if (sizing->parsed()) {
      ddeld::cmd_sizing(cfg, std::cout, cfg.out);
    }
  } catch (const ddeld::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
