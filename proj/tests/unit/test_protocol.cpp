#include <doctest.h>

#include <random>

#include "ntkdfl/error.hpp"
#include "ntkdfl/protocol.hpp"
#include "oracles.hpp"

using namespace ntkdfl;

namespace {

Batch make_data(std::mt19937_64& gen, const ModelDims& d, long n) {
  Batch b;
  b.inputs = oracle::random_matrix(gen, n, static_cast<long>(d.input));
  b.targets = Matrix::Zero(n, static_cast<long>(d.output));
  for (long i = 0; i < n; ++i) {
    const int label = static_cast<int>(gen() % d.output);
    b.labels.push_back(label);
    b.targets(i, label) = 1.0;
  }
  return b;
}

std::vector<ClientState> make_clients(std::mt19937_64& gen, const ModelDims& d, std::size_t m, long n,
                                      bool shared = true) {
  std::vector<ClientState> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].id = i;
    out[i].weights = init_weights(5, d, shared ? InitScheme::Shared : InitScheme::PerClient, i);
    out[i].data = make_data(gen, d, n);
  }
  return out;
}

std::vector<WeightVector> weights_of(const std::vector<ClientState>& s) {
  std::vector<WeightVector> w;
  for (const auto& c : s) w.push_back(c.weights);
  return w;
}

Batch pooled(const std::vector<ClientState>& s) {
  Batch b;
  long rows = 0;
  for (const auto& c : s) rows += c.data.inputs.rows();
  b.inputs.resize(rows, s[0].data.inputs.cols());
  b.targets.resize(rows, s[0].data.targets.cols());
  long at = 0;
  for (const auto& c : s) {
    b.inputs.middleRows(at, c.data.inputs.rows()) = c.data.inputs;
    b.targets.middleRows(at, c.data.targets.rows()) = c.data.targets;
    b.labels.insert(b.labels.end(), c.data.labels.begin(), c.data.labels.end());
    at += c.data.inputs.rows();
  }
  return b;
}

}  // namespace

TEST_CASE("neighborhood averaging") {
  SUBCASE("two connected clients meet in the middle") {
    const std::vector<WeightVector> w{WeightVector::Zero(3), WeightVector::Constant(3, 2.0)};
    const auto avg = neighborhood_average(w, complete(2));
    CHECK(avg[0] == WeightVector::Ones(3));
    CHECK(avg[1] == WeightVector::Ones(3));
  }
  SUBCASE("complete graph gives the global mean") {
    std::mt19937_64 gen(2);
    std::vector<WeightVector> w;
    for (int i = 0; i < 6; ++i) w.push_back(oracle::random_vector(gen, 4));
    WeightVector mean = WeightVector::Zero(4);
    for (const auto& v : w) mean += v / 6.0;
    for (const auto& v : neighborhood_average(w, complete(6))) CHECK((v - mean).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("ring of four by hand") {
    std::vector<WeightVector> w;
    for (double v : {1.0, 2.0, 4.0, 8.0}) w.push_back(WeightVector::Constant(1, v));
    const auto avg = neighborhood_average(w, ring(4));
    CHECK(avg[0][0] == doctest::Approx((1.0 + 2.0 + 8.0) / 3.0));
    CHECK(avg[1][0] == doctest::Approx((2.0 + 1.0 + 4.0) / 3.0));
    CHECK(avg[2][0] == doctest::Approx((4.0 + 2.0 + 8.0) / 3.0));
    CHECK(avg[3][0] == doctest::Approx((8.0 + 4.0 + 1.0) / 3.0));
  }
  SUBCASE("isolated client keeps its weights") {
    const std::vector<WeightVector> w{WeightVector::Constant(2, 3.0), WeightVector::Constant(2, 5.0)};
    CHECK(neighborhood_average(w, isolated(2))[0] == w[0]);
  }
  SUBCASE("regular graphs conserve the sum") {
    std::mt19937_64 gen(8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<WeightVector> w;
      for (int i = 0; i < 30; ++i) w.push_back(oracle::random_vector(gen, 50));
      const auto avg = neighborhood_average(w, random_regular(30, 5, seed));
      WeightVector before = WeightVector::Zero(50), after = WeightVector::Zero(50);
      for (int i = 0; i < 30; ++i) {
        before += w[static_cast<std::size_t>(i)];
        after += avg[static_cast<std::size_t>(i)];
      }
      CHECK((before - after).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("mailbox enforces phase barriers") {
  Mailbox mail(2, 3);
  auto payload = std::make_shared<const WeightVector>(WeightVector::Zero(1));
  CHECK_THROWS_AS(mail.post({0, 1, 3, Phase::Average, MessageClass::WeightsOut, payload}), Error);
  mail.begin_phase(Phase::Average);
  CHECK_THROWS_AS(mail.post({0, 1, 2, Phase::Average, MessageClass::WeightsOut, payload}), Error);
  CHECK_THROWS_AS(mail.post({0, 1, 3, Phase::Jacobian, MessageClass::WeightsOut, payload}), Error);
  CHECK_THROWS_AS(mail.begin_phase(Phase::Jacobian), Error);
  mail.post({1, 0, 3, Phase::Average, MessageClass::WeightsOut, payload});
  mail.post({0, 1, 3, Phase::Average, MessageClass::WeightsOut, payload});
  CHECK(mail.take(0).size() == 1);
  CHECK_THROWS_AS(mail.end_phase(), Error);
  CHECK(mail.take(1).size() == 1);
  mail.end_phase();
}

TEST_CASE("phase_average accounting and ablation") {
  std::mt19937_64 gen(4);
  const ModelDims d{3, 2, 2};
  auto states = make_clients(gen, d, 4, 3, false);
  const Topology topo = ring(4);
  const auto p = static_cast<std::uint64_t>(d.param_count());

  SUBCASE("averaging on") {
    Mailbox mail(4, 1);
    RoundMessageLog log;
    const auto avg = phase_average(states, topo, mail, log, true);
    const auto want = neighborhood_average(weights_of(states), topo);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(*avg.own[i] == want[i]);
      for (std::size_t k = 0; k < 2; ++k) CHECK(*avg.neighbor_weights[i][k] == want[topo.neighbors(i)[k]]);
    }
    CHECK(log.count(MessageClass::WeightsOut) == 8 * p);
    CHECK(log.count(MessageClass::AvgWeightsBack) == 8 * p);
  }
  SUBCASE("averaging off uses the raw weights") {
    Mailbox mail(4, 1);
    RoundMessageLog log;
    const auto raw = phase_average(states, topo, mail, log, false);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(*raw.own[i] == states[i].weights);
      for (std::size_t k = 0; k < 2; ++k)
        CHECK(*raw.neighbor_weights[i][k] == states[topo.neighbors(i)[k]].weights);
    }
    CHECK(log.count(MessageClass::AvgWeightsBack) == 0);
  }
}

TEST_CASE("jacobian exchange") {
  std::mt19937_64 gen(6);
  ThreadPool pool(1);

  SUBCASE("ring(3) with d = 10, N = 4, two outputs sends 480 Jacobian scalars") {
    const ModelDims d{1, 2, 2};
    REQUIRE(d.param_count() == 10);
    auto states = make_clients(gen, d, 3, 4);
    Mailbox mail(3, 1);
    RoundMessageLog log;
    const auto avg = phase_average(states, ring(3), mail, log);
    const auto stacks = phase_jacobians(d, states, ring(3), avg, 0, 1, mail, log, pool);
    CHECK(log.count(MessageClass::Jacobians) == 480);
    CHECK(log.count(MessageClass::Labels) == 3 * 2 * 4 * 2);
    CHECK(log.count(MessageClass::Evals) == 3 * 2 * 4 * 2);
    for (const auto& s : stacks) CHECK(s.jacobian.rows() == 12);
  }

  SUBCASE("kappa = 5 with equal shares stacks 6N rows") {
    const ModelDims d{4, 3, 2};
    auto states = make_clients(gen, d, 12, 7);
    const Topology topo = random_regular(12, 5, 3);
    Mailbox mail(12, 1);
    RoundMessageLog log;
    const auto avg = phase_average(states, topo, mail, log);
    const auto stacks = phase_jacobians(d, states, topo, avg, 0, 1, mail, log, pool);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(stacks[i].jacobian.rows() == 42);
      // own rows first, then senders in ascending order
      const auto& owner = stacks[i].jacobian.row_owner();
      CHECK(owner.front() == i);
      std::vector<std::size_t> senders;
      for (std::size_t r = 7; r < owner.size(); r += 7) senders.push_back(owner[r]);
      CHECK(senders == topo.neighbors(i));
    }
  }

  SUBCASE("neighbor rows are the sender's data at the receiver's weights") {
    const ModelDims d{3, 4, 2};
    auto states = make_clients(gen, d, 3, 2, false);
    Mailbox mail(3, 1);
    RoundMessageLog log;
    const auto avg = phase_average(states, ring(3), mail, log);
    const auto stacks = phase_jacobians(d, states, ring(3), avg, 0, 1, mail, log, pool);
    // client 0 holds rows from client 1, linearized at client 0's average
    const Matrix want = forward(d, *avg.own[0], states[1].data.inputs);
    CHECK((stacks[0].evals.middleRows(2, 2) - want).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(stacks[0].targets.middleRows(2, 2) == states[1].data.targets);
    const JacobianStack dense = jacobian(d, *avg.own[0], states[1].data.inputs);
    CHECK((stacks[0].jacobian.slice_rows(2, 4).to_dense().values - dense.values).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("isolated client only stacks its own rows") {
    const ModelDims d{3, 2, 2};
    auto states = make_clients(gen, d, 3, 5);
    Mailbox mail(3, 1);
    RoundMessageLog log;
    const auto avg = phase_average(states, isolated(3), mail, log);
    const auto stacks = phase_jacobians(d, states, isolated(3), avg, 0, 1, mail, log, pool);
    for (const auto& s : stacks) CHECK(s.jacobian.rows() == 5);
    CHECK(log.total_scalars() == 0);
  }
}

TEST_CASE("batch ranges cover every row once") {
  for (std::size_t rows : {0u, 1u, 7u, 20u})
    for (std::size_t m : {1u, 2u, 3u, 8u}) {
      const auto r = batch_ranges(rows, m);
      REQUIRE(r.size() == m);
      std::size_t at = 0;
      for (const auto& b : r) {
        CHECK(b.begin == at);
        at = b.end;
      }
      CHECK(at == rows);
    }
  CHECK_THROWS_AS(batch_ranges(3, 0), Error);
}

TEST_CASE("run_round") {
  std::mt19937_64 gen(10);
  const ModelDims d{5, 6, 3};
  NtkConfig cfg;
  cfg.dims = d;
  cfg.eta = 0.5;
  cfg.t_grid = {1, 5, 20, 60};

  SUBCASE("complete graph with shared init ends identical and matches pooled evolution") {
    auto states = make_clients(gen, d, 4, 5);
    const WeightVector w0 = states[0].weights;
    ThreadPool pool(1);
    const auto rep = run_round(states, complete(4), cfg, 1, pool);
    for (std::size_t i = 1; i < 4; ++i) CHECK((states[i].weights - states[0].weights).cwiseAbs().maxCoeff() < 1e-9);

    const Batch all = pooled(states);
    const MlpJacobian j(d, w0, all.inputs);
    const auto single = evolve(j, all.targets, j.outputs(), w0, cfg.eta, cfg.t_grid);
    CHECK((states[0].weights - single.new_weights).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(rep.evolutions[2].chosen_t == single.chosen_t);
  }

  SUBCASE("single client equals local evolution") {
    auto states = make_clients(gen, d, 1, 6);
    const WeightVector w0 = states[0].weights;
    ThreadPool pool(1);
    run_round(states, isolated(1), cfg, 1, pool);
    const MlpJacobian j(d, w0, states[0].data.inputs);
    const auto local = evolve(j, states[0].data.targets, j.outputs(), w0, cfg.eta, cfg.t_grid);
    CHECK(states[0].weights == local.new_weights);
  }

  SUBCASE("stacked training loss does not increase at the chosen timestep") {
    auto states = make_clients(gen, d, 6, 5, false);
    ThreadPool pool(1);
    const auto rep = run_round(states, ring(6), cfg, 1, pool);
    for (const auto& ev : rep.evolutions) CHECK(ev.loss_after <= ev.loss_before + 1e-15);
  }

  SUBCASE("empty graph: pure local evolution and no traffic") {
    auto states = make_clients(gen, d, 3, 4, false);
    const auto before = weights_of(states);
    ThreadPool pool(1);
    const auto rep = run_round(states, isolated(3), cfg, 1, pool);
    CHECK(rep.log.total_scalars() == 0);
    for (std::size_t i = 0; i < 3; ++i) {
      const MlpJacobian j(d, before[i], states[i].data.inputs);
      CHECK(states[i].weights == evolve(j, states[i].data.targets, j.outputs(), before[i], cfg.eta, cfg.t_grid).new_weights);
    }
  }

  SUBCASE("ablation linearizes at the unaveraged weights") {
    auto states = make_clients(gen, d, 3, 4, false);
    const auto before = weights_of(states);
    cfg.per_round_averaging = false;
    ThreadPool pool(1);
    const auto rep = run_round(states, ring(3), cfg, 1, pool);
    CHECK(rep.log.count(MessageClass::AvgWeightsBack) == 0);
    // client 0's stack: its own rows then clients 1 and 2, all at before[0]
    Batch all = pooled(states);
    const MlpJacobian j(d, before[0], all.inputs);
    const auto want = evolve(j, all.targets, j.outputs(), before[0], cfg.eta, cfg.t_grid);
    CHECK((states[0].weights - want.new_weights).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("batched rounds touch every sample once and report the traffic") {
    auto states = make_clients(gen, d, 4, 9, false);
    cfg.batches = 2;
    ThreadPool pool(1);
    const auto rep = run_round(states, ring(4), cfg, 1, pool);
    const auto p = static_cast<std::uint64_t>(d.param_count());
    // 8 directed edges, 9 rows per client split 5 + 4
    CHECK(rep.log.count(MessageClass::Jacobians) == 8 * 9 * 3 * p);
    CHECK(rep.log.count(MessageClass::WeightsOut) == 2 * 8 * p);
    CHECK(rep.log.count(MessageClass::AvgWeightsBack) == 8 * p);
    CHECK(rep.evolutions[0].stack_rows == 3 * 4);
  }

  SUBCASE("bit-identical across worker counts") {
    auto a = make_clients(gen, d, 8, 6, false);
    auto b = a;
    const Topology topo = random_regular(8, 3, 2);
    ThreadPool one(1), four(4);
    for (std::size_t k = 1; k <= 2; ++k) {
      run_round(a, topo, cfg, k, one);
      run_round(b, topo, cfg, k, four);
    }
    for (std::size_t i = 0; i < 8; ++i) CHECK(a[i].weights == b[i].weights);
  }

  SUBCASE("numerical failures name the client") {
    auto states = make_clients(gen, d, 2, 3, false);
    states[1].weights[0] = std::nan("");
    ThreadPool pool(1);
    try {
      run_round(states, isolated(2), cfg, 1, pool);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("client 1") != std::string::npos);
    }
  }
}
