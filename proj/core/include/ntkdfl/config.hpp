#pragma once

// Run configuration: a JSON document, validated on load. Unknown keys are
// rejected and every error names the offending field.
//
// {
//   "dataset": {"name": "mnist", "root": ".", "train_images": "...", "train_labels": "...",
//               "test_images": "...", "test_labels": "...", "downsample": 1,
//               "max_train": 0, "max_test": 0},
//   "num_clients": 300,
//   "heterogeneity": {"kind": "dirichlet", "alpha": 0.1},          // or {"kind": "iid"}
//   "topology": {"kind": "regular", "kappa": 5, "mean_degree": 5, "mode": "dynamic"},
//   "algorithm": "ntk_dfl",                                        // dpsgd | dfedavg | dfedavgm
//   "rounds": 200,
//   "model": {"hidden": 100},
//   "ntk": {"eta": 0.01, "t_grid": [100, ..., 800], "jacobian_batches": 1,
//           "per_round_averaging": true},
//   "sgd": {"lr": 0.1, "batch_size": 25, "local_epochs": 20, "momentum": 0.0},
//   "init": "shared",                                              // or per_client
//   "selection": {"criterion": "high_to_low", "validation_ratio": 0.5, "opt_in": 0},
//   "seeds": [0],                                                  // or "seed": 0
//   "bytes_per_scalar": 4,
//   "output_dir": "runs",
//   "dump_edges": false
// }

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ntkdfl/baselines.hpp"
#include "ntkdfl/metrics.hpp"
#include "ntkdfl/mlp.hpp"
#include "ntkdfl/topology.hpp"

namespace ntkdfl {

enum class Algorithm { NtkDfl, Dpsgd, Dfedavg, Dfedavgm };
enum class DatasetName { Mnist, FashionMnist };

std::string to_string(Algorithm a);
std::string to_string(DatasetName d);

/// Environment variable consulted for dataset.root when the config omits it.
inline constexpr const char* kDataRootEnv = "NTKDFL_DATA_DIR";

struct DatasetConfig {
  DatasetName name = DatasetName::Mnist;
  std::string root = ".";
  std::string train_images = "train-images-idx3-ubyte.gz";
  std::string train_labels = "train-labels-idx1-ubyte.gz";
  std::string test_images = "t10k-images-idx3-ubyte.gz";
  std::string test_labels = "t10k-labels-idx1-ubyte.gz";
  std::size_t downsample = 1;
  std::size_t max_train = 0;
  std::size_t max_test = 0;

  /// Relative file names resolve against root.
  std::filesystem::path resolve(const std::string& file) const;

  bool operator==(const DatasetConfig&) const = default;
};

struct HeterogeneityConfig {
  bool iid = false;
  double alpha = 0.1;

  bool operator==(const HeterogeneityConfig&) const = default;
};

struct RunConfig {
  DatasetConfig dataset;
  std::size_t num_clients = 300;
  HeterogeneityConfig heterogeneity;
  TopologySpec topology;
  Algorithm algorithm = Algorithm::NtkDfl;
  std::size_t rounds = 200;
  std::size_t hidden = 100;

  double eta = 0.01;
  std::vector<long> t_grid = {100, 200, 300, 400, 500, 600, 700, 800};
  std::size_t jacobian_batches = 1;
  bool per_round_averaging = true;

  /// Effective SGD settings: the algorithm's defaults overlaid with any
  /// fields given in the document.
  SgdConfig sgd = SgdConfig::dfedavg();

  InitScheme init = InitScheme::Shared;
  SelectionCriterion selection_criterion = SelectionCriterion::HighToLow;
  double validation_ratio = 0.5;
  /// Clients averaged into the reported selected model (0 = all participants).
  std::size_t opt_in = 0;

  std::vector<std::uint64_t> seeds = {0};
  std::size_t bytes_per_scalar = 4;
  std::string output_dir = "runs";
  bool dump_edges = false;

  /// Re-runs the range checks applied by parse_config.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates. Throws Error(ErrorCode::Config) with either
/// "line L, column C: ..." for syntax errors or "<field.path>: ..." for
/// validation failures.
RunConfig parse_config(std::string_view text);

RunConfig load_config(const std::filesystem::path& path);

/// Pretty-printed JSON holding every effective value; parse_config of the
/// result reproduces the config.
std::string serialize_config(const RunConfig& cfg);

}  // namespace ntkdfl
