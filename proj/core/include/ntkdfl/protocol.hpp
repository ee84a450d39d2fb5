#pragma once

// One NTK-DFL communication round:
//   1. clients swap weights with neighbors and average over the closed
//      neighborhood, then send the average back;
//   2. every client linearizes the model at its own average and at each
//      neighbor's average over its local data, and ships the neighbor-specific
//      Jacobian, labels and evaluations to that neighbor;
//   3. every client stacks what it owns and received, builds the local kernel
//      and evolves its weights in closed form.
//
// Cross-client traffic goes through a Mailbox owned by the orchestrator.
// Messages carry round and phase tags; a client only ever drains messages of
// the phase it is in, and the mailbox must be empty at each phase boundary.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ntkdfl/mlp.hpp"
#include "ntkdfl/ntk.hpp"
#include "ntkdfl/thread_pool.hpp"
#include "ntkdfl/topology.hpp"

namespace ntkdfl {

struct ClientState {
  std::size_t id = 0;
  WeightVector weights;
  Batch data;
};

enum class MessageClass : std::size_t { WeightsOut, AvgWeightsBack, Jacobians, Labels, Evals };
inline constexpr std::size_t kMessageClassCount = 5;

struct RoundMessageLog {
  std::array<std::uint64_t, kMessageClassCount> scalars{};
  std::size_t bytes_per_scalar = 4;

  void add(MessageClass cls, std::uint64_t n) { scalars[static_cast<std::size_t>(cls)] += n; }
  std::uint64_t count(MessageClass cls) const { return scalars[static_cast<std::size_t>(cls)]; }
  std::uint64_t total_scalars() const;
  std::uint64_t bytes_sent() const { return total_scalars() * bytes_per_scalar; }
};

enum class Phase { Average, AverageBack, Jacobian };

/// Payload of a Jacobian-phase message: J_{i,j}, Y_i and f(X_i; w_j).
struct JacobianPacket {
  MlpJacobian jacobian;
  Matrix targets;
  Matrix evals;
};

using Payload = std::variant<std::shared_ptr<const WeightVector>, std::shared_ptr<const JacobianPacket>>;

struct Message {
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t round = 0;
  Phase phase = Phase::Average;
  MessageClass cls = MessageClass::WeightsOut;
  Payload payload;
};

class Mailbox {
 public:
  Mailbox(std::size_t clients, std::size_t round) : inbox_(clients), round_(round) {}

  std::size_t round() const { return round_; }
  void begin_phase(Phase phase);
  void post(Message msg);
  /// Messages for `client` in the current phase, ordered by sender.
  std::vector<Message> take(std::size_t client);
  /// Asserts every inbox was drained.
  void end_phase();

 private:
  std::vector<std::vector<Message>> inbox_;
  std::size_t round_;
  Phase phase_ = Phase::Average;
  bool open_ = false;
};

struct NtkConfig {
  ModelDims dims;
  double eta = 0.01;
  std::vector<long> t_grid = {100, 200, 300, 400, 500, 600, 700, 800};
  std::size_t batches = 1;
  bool per_round_averaging = true;
  std::size_t bytes_per_scalar = 4;
};

/// Uniform closed-neighborhood mean; an isolated node keeps its vector.
/// Summation order is (own, neighbors ascending).
std::vector<WeightVector> neighborhood_average(const std::vector<WeightVector>& weights,
                                               const Topology& topo);

/// Result of the averaging phase as seen by each client.
struct AveragedWeights {
  std::vector<std::shared_ptr<const WeightVector>> own;
  /// neighbor_weights[i][k] belongs to topo.neighbors(i)[k].
  std::vector<std::vector<std::shared_ptr<const WeightVector>>> neighbor_weights;
};

AveragedWeights phase_average(const std::vector<ClientState>& states, const Topology& topo,
                              Mailbox& mail, RoundMessageLog& log, bool average = true);

/// What a client owns after the Jacobian phase.
struct ClientStack {
  MlpJacobian jacobian;
  Matrix targets;
  Matrix evals;
};

/// Row range [begin, end) of client data used in one sub-round.
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// rows split into `batches` near-equal contiguous ranges.
std::vector<RowRange> batch_ranges(std::size_t rows, std::size_t batches);

std::vector<ClientStack> phase_jacobians(const ModelDims& dims,
                                         const std::vector<ClientState>& states,
                                         const Topology& topo, const AveragedWeights& weights,
                                         std::size_t batch, std::size_t batches, Mailbox& mail,
                                         RoundMessageLog& log, ThreadPool& pool);

struct ClientEvolution {
  WeightVector weights;
  long chosen_t = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t stack_rows = 0;
};

std::vector<ClientEvolution> phase_evolve(const std::vector<ClientStack>& stacks,
                                          const AveragedWeights& base, const NtkConfig& cfg,
                                          ThreadPool& pool);

struct RoundReport {
  RoundMessageLog log;
  std::vector<ClientEvolution> evolutions;   // from the last sub-round
};

/// Runs averaging, Jacobian exchange and evolution (repeated per Jacobian
/// batch) and replaces every client's weights.
RoundReport run_round(std::vector<ClientState>& states, const Topology& topo, const NtkConfig& cfg,
                      std::size_t round, ThreadPool& pool);

}  // namespace ntkdfl
