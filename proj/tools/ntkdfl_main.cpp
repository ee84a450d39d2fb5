#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ntkdfl/config.hpp"
#include "ntkdfl/error.hpp"
#include "ntkdfl/experiment.hpp"
#include "ntkdfl/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Decentralized federated learning simulator (NTK-DFL and SGD baselines)"};
  app.set_version_flag("--version", std::string(ntkdfl::version()) + " (" +
                                        std::string(ntkdfl::build_revision()) + ")");
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  run->add_option("--config", config_path, "JSON run configuration")->required();
  run->add_option("--seed", seed, "Run only this seed (overrides the config)");
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--workers", workers, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Parse and validate a configuration");
  validate->add_option("--config", config_path, "JSON run configuration")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ntkdfl::RunConfig cfg = ntkdfl::load_config(config_path);
    if (*validate) {
      std::cout << ntkdfl::serialize_config(cfg);
      return 0;
    }
    ntkdfl::RunOptions options;
    options.workers = workers;
    options.seed = seed;
    if (out) options.output_dir = std::filesystem::path(*out);
    for (const auto& dir : ntkdfl::run_experiment(cfg, options)) std::cout << dir.string() << "\n";
    return 0;
  } catch (const ntkdfl::Error& e) {
    std::cerr << "error [" << ntkdfl::to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ntkdfl::ErrorCode::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
