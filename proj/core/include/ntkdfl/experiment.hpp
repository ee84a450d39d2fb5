#pragma once

// Experiment orchestration: partition, init, K communication rounds, final
// aggregation with client selection, and the on-disk artifacts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "ntkdfl/config.hpp"
#include "ntkdfl/data.hpp"
#include "ntkdfl/metrics.hpp"
#include "ntkdfl/thread_pool.hpp"
#include "ntkdfl/topology.hpp"

namespace ntkdfl {

struct ExperimentData {
  Dataset train;
  Dataset test;
};

/// Reads the configured IDX files, applying downsampling and size limits.
ExperimentData load_experiment_data(const RunConfig& cfg);

struct RunResult {
  std::uint64_t seed = 0;
  ModelDims dims;
  std::vector<RoundLog> rounds;                // round 0 (init) through K
  std::vector<double> final_client_acc;        // holdout accuracy per client
  std::vector<WeightVector> final_weights;
  std::vector<std::size_t> sizes;              // N_i
  std::vector<std::size_t> empty_clients;
  std::vector<std::size_t> participants;       // clients with N_i > 0
  std::vector<SelectionOrder> selection;       // high_to_low, random, low_to_high
  std::vector<std::size_t> opted_in;           // first opt_in clients of the configured order
  double selected_acc = 0.0;                   // holdout accuracy of the opted-in average
};

/// Called with every round's graph before the round runs (k >= 1).
using TopologySink = std::function<void(std::size_t round, const Topology&)>;

/// One seed of cfg, entirely in memory. Errors raised in a round are
/// rethrown with the round number prepended.
RunResult simulate(const RunConfig& cfg, std::uint64_t seed, const Dataset& train,
                   const Dataset& test, ThreadPool& pool, const TopologySink& sink = {});

struct RunOptions {
  std::size_t workers = 1;
  std::optional<std::filesystem::path> output_dir;   // overrides cfg.output_dir
  std::optional<std::uint64_t> seed;                  // overrides cfg.seeds
};

/// Runs every seed and writes metrics.csv, selection.csv and manifest.json
/// (plus edges_round_<k>.txt when dump_edges is set). A single seed writes
/// straight into the output directory; several seeds use seed_<n>/ below it.
/// Returns the run directories.
std::vector<std::filesystem::path> run_experiment(const RunConfig& cfg, const RunOptions& options = {});

/// manifest.json contents for a finished run.
std::string manifest_json(const RunConfig& cfg, const RunResult& result);

}  // namespace ntkdfl
