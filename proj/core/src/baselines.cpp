#include "ntkdfl/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

namespace {

std::vector<WeightVector> collect(const std::vector<ClientState>& states) {
  std::vector<WeightVector> w;
  w.reserve(states.size());
  for (const auto& s : states) w.push_back(s.weights);
  return w;
}

RoundMessageLog mix(std::vector<ClientState>& states, const Topology& topo,
                    std::size_t bytes_per_scalar) {
  RoundMessageLog log;
  log.bytes_per_scalar = bytes_per_scalar;
  auto mixed = neighborhood_average(collect(states), topo);
  for (std::size_t i = 0; i < states.size(); ++i) {
    log.add(MessageClass::WeightsOut,
            topo.degree(i) * static_cast<std::uint64_t>(states[i].weights.size()));
    states[i].weights = std::move(mixed[i]);
  }
  return log;
}

void local_phase(std::vector<ClientState>& states, const ModelDims& dims, const SgdConfig& cfg,
                 std::uint64_t run_seed, std::size_t round, ThreadPool& pool) {
  pool.parallel_for(states.size(), [&](std::size_t i) {
    ClientState& s = states[i];
    if (s.data.size() == 0) return;
    s.weights = local_sgd(dims, s.weights, s.data, cfg, sgd_seed(run_seed, round, s.id));
  });
}

}  // namespace

void SgdConfig::validate() const {
  require(lr >= 0.0, ErrorCode::InvalidArgument, "learning rate must be nonnegative");
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch size must be >= 1");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidArgument,
          "momentum must lie in [0, 1)");
}

std::uint64_t sgd_seed(std::uint64_t run_seed, std::size_t round, std::size_t client) {
  return derive_seed(run_seed, "sgd", round, client);
}

WeightVector local_sgd(const ModelDims& dims, const WeightVector& w, const Batch& data,
                       const SgdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  require(data.size() > 0, ErrorCode::EmptyInput, "local SGD on an empty dataset");
  Engine eng = make_engine(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  WeightVector out = w;
  WeightVector velocity = WeightVector::Zero(w.size());
  const std::size_t bs = std::min(cfg.batch_size, data.size());
  Batch mini;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), eng);
    for (std::size_t at = 0; at < order.size(); at += bs) {
      const std::size_t len = std::min(bs, order.size() - at);
      const auto n = static_cast<Eigen::Index>(len);
      mini.inputs.resize(n, data.inputs.cols());
      mini.targets.resize(n, data.targets.cols());
      mini.labels.resize(len);
      for (std::size_t r = 0; r < len; ++r) {
        const auto src = static_cast<Eigen::Index>(order[at + r]);
        mini.inputs.row(static_cast<Eigen::Index>(r)) = data.inputs.row(src);
        mini.targets.row(static_cast<Eigen::Index>(r)) = data.targets.row(src);
        mini.labels[r] = data.labels[order[at + r]];
      }
      const WeightVector g = loss_gradient(dims, out, mini, cfg.loss);
      velocity = cfg.momentum * velocity + g;
      out -= cfg.lr * velocity;
    }
  }
  return out;
}

RoundMessageLog dpsgd_round(std::vector<ClientState>& states, const Topology& topo,
                            const ModelDims& dims, const SgdConfig& cfg, std::uint64_t run_seed,
                            std::size_t round, ThreadPool& pool, std::size_t bytes_per_scalar) {
  SgdConfig one_epoch = cfg;
  one_epoch.local_epochs = 1;
  local_phase(states, dims, one_epoch, run_seed, round, pool);
  return mix(states, topo, bytes_per_scalar);
}

RoundMessageLog dfedavg_round(std::vector<ClientState>& states, const Topology& topo,
                              const ModelDims& dims, const SgdConfig& cfg, bool momentum_on,
                              std::uint64_t run_seed, std::size_t round, ThreadPool& pool,
                              std::size_t bytes_per_scalar) {
  RoundMessageLog log = mix(states, topo, bytes_per_scalar);
  SgdConfig local = cfg;
  if (!momentum_on) local.momentum = 0.0;
  local_phase(states, dims, local, run_seed, round, pool);
  return log;
}

}  // namespace ntkdfl
