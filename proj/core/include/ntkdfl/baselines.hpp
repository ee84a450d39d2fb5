#pragma once

// SGD-based decentralized baselines sharing the NTK-DFL model, data and
// topology schedule. Mixing is the uniform closed-neighborhood mean used by
// the NTK protocol's averaging phase.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ntkdfl/mlp.hpp"
#include "ntkdfl/protocol.hpp"
#include "ntkdfl/thread_pool.hpp"
#include "ntkdfl/topology.hpp"

namespace ntkdfl {

struct SgdConfig {
  double lr = 0.1;
  std::size_t batch_size = 10;
  std::size_t local_epochs = 1;
  double momentum = 0.0;
  Loss loss = Loss::SoftmaxCrossEntropy;

  void validate() const;
  bool operator==(const SgdConfig&) const = default;

  static SgdConfig dpsgd() { return {0.1, 10, 1, 0.0}; }
  static SgdConfig dfedavg() { return {0.1, 25, 20, 0.0}; }
  static SgdConfig dfedavgm() { return {0.01, 50, 20, 0.9}; }
};

/// `local_epochs` epochs of shuffled mini-batch SGD with heavy-ball momentum
/// (v <- mu v + g, w <- w - lr v). A batch larger than the data is truncated.
WeightVector local_sgd(const ModelDims& dims, const WeightVector& w, const Batch& data,
                       const SgdConfig& cfg, std::uint64_t seed);

/// Seed of client i's local SGD in round k.
std::uint64_t sgd_seed(std::uint64_t run_seed, std::size_t round, std::size_t client);

/// One local epoch, then neighborhood averaging. Clients without data only
/// average.
RoundMessageLog dpsgd_round(std::vector<ClientState>& states, const Topology& topo,
                            const ModelDims& dims, const SgdConfig& cfg, std::uint64_t run_seed,
                            std::size_t round, ThreadPool& pool, std::size_t bytes_per_scalar = 4);

/// Neighborhood averaging, then cfg.local_epochs of local SGD; momentum is
/// forced to zero unless momentum_on.
RoundMessageLog dfedavg_round(std::vector<ClientState>& states, const Topology& topo,
                              const ModelDims& dims, const SgdConfig& cfg, bool momentum_on,
                              std::uint64_t run_seed, std::size_t round, ThreadPool& pool,
                              std::size_t bytes_per_scalar = 4);

}  // namespace ntkdfl
