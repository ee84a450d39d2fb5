#include "ntkdfl/protocol.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ntkdfl/error.hpp"

namespace ntkdfl {

std::uint64_t RoundMessageLog::total_scalars() const {
  return std::accumulate(scalars.begin(), scalars.end(), std::uint64_t{0});
}

void Mailbox::begin_phase(Phase phase) {
  require(!open_, ErrorCode::InvalidArgument, "previous phase still open");
  phase_ = phase;
  open_ = true;
}

void Mailbox::post(Message msg) {
  require(open_ && msg.phase == phase_ && msg.round == round_, ErrorCode::InvalidArgument,
          "message tagged for another round or phase");
  require(msg.to < inbox_.size(), ErrorCode::InvalidArgument, "message to unknown client");
  inbox_[msg.to].push_back(std::move(msg));
}

std::vector<Message> Mailbox::take(std::size_t client) {
  std::vector<Message> out;
  out.swap(inbox_.at(client));
  for (const auto& m : out)
    require(m.phase == phase_ && m.round == round_, ErrorCode::InvalidArgument,
            "stale message crossed a phase barrier");
  std::stable_sort(out.begin(), out.end(),
                   [](const Message& a, const Message& b) { return a.from < b.from; });
  return out;
}

void Mailbox::end_phase() {
  for (const auto& box : inbox_)
    require(box.empty(), ErrorCode::InvalidArgument, "undelivered messages at phase barrier");
  open_ = false;
}

std::vector<WeightVector> neighborhood_average(const std::vector<WeightVector>& weights,
                                               const Topology& topo) {
  require(weights.size() == topo.size(), ErrorCode::DimensionMismatch,
          "topology and client count differ");
  std::vector<WeightVector> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    WeightVector acc = weights[i];
    for (auto j : topo.neighbors(i)) {
      require(weights[j].size() == acc.size(), ErrorCode::DimensionMismatch,
              "clients hold weight vectors of different length");
      acc += weights[j];
    }
    acc /= static_cast<double>(topo.degree(i) + 1);
    out[i] = std::move(acc);
  }
  return out;
}

AveragedWeights phase_average(const std::vector<ClientState>& states, const Topology& topo,
                              Mailbox& mail, RoundMessageLog& log, bool average) {
  const std::size_t m = states.size();
  require(topo.size() == m, ErrorCode::DimensionMismatch, "topology and client count differ");

  // send w_i to every neighbor
  mail.begin_phase(Phase::Average);
  std::vector<std::shared_ptr<const WeightVector>> raw(m);
  for (std::size_t i = 0; i < m; ++i) {
    raw[i] = std::make_shared<const WeightVector>(states[i].weights);
    for (auto j : topo.neighbors(i)) {
      mail.post({i, j, mail.round(), Phase::Average, MessageClass::WeightsOut, raw[i]});
      log.add(MessageClass::WeightsOut, static_cast<std::uint64_t>(raw[i]->size()));
    }
  }
  AveragedWeights out;
  out.own.resize(m);
  out.neighbor_weights.resize(m);
  std::vector<std::vector<Message>> received(m);
  for (std::size_t i = 0; i < m; ++i) received[i] = mail.take(i);
  mail.end_phase();

  for (std::size_t i = 0; i < m; ++i) {
    if (!average) {
      out.own[i] = raw[i];
      for (const auto& msg : received[i])
        out.neighbor_weights[i].push_back(std::get<0>(msg.payload));
      continue;
    }
    WeightVector acc = *raw[i];
    for (const auto& msg : received[i]) acc += *std::get<0>(msg.payload);
    acc /= static_cast<double>(received[i].size() + 1);
    out.own[i] = std::make_shared<const WeightVector>(std::move(acc));
  }
  if (!average) return out;

  // send the average back
  mail.begin_phase(Phase::AverageBack);
  for (std::size_t i = 0; i < m; ++i) {
    for (auto j : topo.neighbors(i)) {
      mail.post({i, j, mail.round(), Phase::AverageBack, MessageClass::AvgWeightsBack, out.own[i]});
      log.add(MessageClass::AvgWeightsBack, static_cast<std::uint64_t>(out.own[i]->size()));
    }
  }
  for (std::size_t i = 0; i < m; ++i)
    for (const auto& msg : mail.take(i)) out.neighbor_weights[i].push_back(std::get<0>(msg.payload));
  mail.end_phase();
  return out;
}

std::vector<RowRange> batch_ranges(std::size_t rows, std::size_t batches) {
  require(batches >= 1, ErrorCode::InvalidArgument, "need at least one Jacobian batch");
  std::vector<RowRange> out;
  const std::size_t base = rows / batches, extra = rows % batches;
  std::size_t at = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t len = base + (b < extra ? 1 : 0);
    out.push_back({at, at + len});
    at += len;
  }
  return out;
}

std::vector<ClientStack> phase_jacobians(const ModelDims& dims,
                                         const std::vector<ClientState>& states,
                                         const Topology& topo, const AveragedWeights& weights,
                                         std::size_t batch, std::size_t batches, Mailbox& mail,
                                         RoundMessageLog& log, ThreadPool& pool) {
  const std::size_t m = states.size();

  // Local computation: J_{i,i} and one packet per neighbor.
  struct Outgoing {
    ClientStack own;
    std::vector<std::shared_ptr<const JacobianPacket>> packets;   // aligned with neighbors(i)
  };
  std::vector<Outgoing> work(m);
  pool.parallel_for(m, [&](std::size_t i) {
    const ClientState& s = states[i];
    const RowRange range = batch_ranges(s.data.size(), batches)[batch];
    const auto len = static_cast<Eigen::Index>(range.end - range.begin);
    const auto start = static_cast<Eigen::Index>(range.begin);
    const Matrix x = s.data.inputs.middleRows(start, len);
    const Matrix y = s.data.targets.middleRows(start, len);

    Outgoing& out = work[i];
    const auto& nbrs = topo.neighbors(i);
    const WeightVector& own_w = *weights.own[i];
    if (len > 0) {
      out.own.jacobian = MlpJacobian(dims, own_w, x, i);
      out.own.targets = y;
      out.own.evals = out.own.jacobian.outputs();
    }
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      if (len == 0) {
        out.packets.push_back(nullptr);
        continue;
      }
      auto pkt = std::make_shared<JacobianPacket>();
      pkt->jacobian = MlpJacobian(dims, *weights.neighbor_weights[i][k], x, i);
      pkt->targets = y;
      pkt->evals = pkt->jacobian.outputs();
      out.packets.push_back(std::move(pkt));
    }
  });

  mail.begin_phase(Phase::Jacobian);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& nbrs = topo.neighbors(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const auto& pkt = work[i].packets[k];
      if (!pkt) continue;
      const auto rows = static_cast<std::uint64_t>(pkt->targets.rows());
      const auto d2 = static_cast<std::uint64_t>(pkt->targets.cols());
      const auto d = static_cast<std::uint64_t>(pkt->jacobian.dims().param_count());
      log.add(MessageClass::Jacobians, rows * d2 * d);
      log.add(MessageClass::Labels, rows * d2);
      log.add(MessageClass::Evals, rows * d2);
      mail.post({i, nbrs[k], mail.round(), Phase::Jacobian, MessageClass::Jacobians, pkt});
    }
  }

  std::vector<ClientStack> stacks(m);
  for (std::size_t i = 0; i < m; ++i) {
    ClientStack st = std::move(work[i].own);
    for (const auto& msg : mail.take(i)) {
      const auto& pkt = *std::get<1>(msg.payload);
      st.jacobian.append(pkt.jacobian);
      auto stack_rows = [](Matrix& top, const Matrix& bottom) {
        if (top.size() == 0) {
          top = bottom;
          return;
        }
        Matrix joined(top.rows() + bottom.rows(), top.cols());
        joined << top, bottom;
        top.swap(joined);
      };
      stack_rows(st.targets, pkt.targets);
      stack_rows(st.evals, pkt.evals);
    }
    stacks[i] = std::move(st);
  }
  mail.end_phase();
  return stacks;
}

std::vector<ClientEvolution> phase_evolve(const std::vector<ClientStack>& stacks,
                                          const AveragedWeights& base, const NtkConfig& cfg,
                                          ThreadPool& pool) {
  std::vector<ClientEvolution> out(stacks.size());
  pool.parallel_for(stacks.size(), [&](std::size_t i) {
    const ClientStack& st = stacks[i];
    ClientEvolution& ev = out[i];
    ev.weights = *base.own[i];
    ev.stack_rows = st.jacobian.rows();
    if (ev.stack_rows == 0) return;
    try {
      EvolutionResult res = evolve(st.jacobian, st.targets, st.evals, ev.weights, cfg.eta, cfg.t_grid);
      const double norm = static_cast<double>(st.targets.size());
      ev.loss_before = (st.evals - st.targets).squaredNorm() / norm;
      ev.loss_after = res.loss_curve.at(res.chosen_t);
      ev.chosen_t = res.chosen_t;
      ev.weights = std::move(res.new_weights);
    } catch (const Error& e) {
      throw Error(e.code(), "client " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

RoundReport run_round(std::vector<ClientState>& states, const Topology& topo, const NtkConfig& cfg,
                      std::size_t round, ThreadPool& pool) {
  require(topo.size() == states.size(), ErrorCode::DimensionMismatch,
          "topology and client count differ");
  RoundReport report;
  report.log.bytes_per_scalar = cfg.bytes_per_scalar;
  Mailbox mail(states.size(), round);

  AveragedWeights current = phase_average(states, topo, mail, report.log, cfg.per_round_averaging);
  for (std::size_t b = 0; b < cfg.batches; ++b) {
    if (b > 0) {
      // Later sub-rounds linearize at the weights evolved in the previous
      // one; neighbors need those, but nothing is re-averaged.
      for (std::size_t i = 0; i < states.size(); ++i) states[i].weights = report.evolutions[i].weights;
      current = phase_average(states, topo, mail, report.log, false);
    }
    const auto stacks = phase_jacobians(cfg.dims, states, topo, current, b, cfg.batches, mail,
                                        report.log, pool);
    report.evolutions = phase_evolve(stacks, current, cfg, pool);
  }
  for (std::size_t i = 0; i < states.size(); ++i) states[i].weights = report.evolutions[i].weights;
  return report;
}

}  // namespace ntkdfl
