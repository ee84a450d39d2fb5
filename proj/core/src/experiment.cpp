#include "ntkdfl/experiment.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "ntkdfl/baselines.hpp"
#include "ntkdfl/error.hpp"
#include "ntkdfl/ntk.hpp"
#include "ntkdfl/protocol.hpp"
#include "ntkdfl/rng.hpp"
#include "ntkdfl/version.hpp"

namespace ntkdfl {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
}

RoundLog measure(std::size_t round, const ModelDims& dims, const std::vector<ClientState>& states,
                 const std::vector<std::size_t>& sizes, const Dataset& holdout,
                 std::vector<double>& client_acc, ThreadPool& pool) {
  const std::size_t m = states.size();
  std::vector<WeightVector> weights(m);
  for (std::size_t i = 0; i < m; ++i) weights[i] = states[i].weights;

  client_acc.assign(m, 0.0);
  pool.parallel_for(m, [&](std::size_t i) {
    client_acc[i] = evaluate_accuracy(dims, weights[i], holdout);
  });

  std::vector<std::size_t> everyone(m);
  for (std::size_t i = 0; i < m; ++i) everyone[i] = i;

  RoundLog row;
  row.round = round;
  row.agg_test_acc = evaluate_accuracy(dims, final_average(weights, sizes, everyone), holdout);
  const AccuracySummary s = summarize(client_acc);
  row.mean_client_acc = s.mean;
  row.std_client_acc = s.stddev;
  row.min_client_acc = s.min;
  row.max_client_acc = s.max;
  row.variance_v = m < 2 ? 0.0 : inter_model_variance(weights);
  return row;
}

}  // namespace

ExperimentData load_experiment_data(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  ExperimentData out;
  out.train = load_idx_dataset(d.resolve(d.train_images), d.resolve(d.train_labels),
                               {d.downsample, d.max_train});
  out.test = load_idx_dataset(d.resolve(d.test_images), d.resolve(d.test_labels),
                              {d.downsample, d.max_test});
  require(out.train.input_dim() == out.test.input_dim(), ErrorCode::DimensionMismatch,
          "train and test images differ in size");
  return out;
}

RunResult simulate(const RunConfig& cfg, std::uint64_t seed, const Dataset& train,
                   const Dataset& test, ThreadPool& pool, const TopologySink& sink) {
  cfg.validate();
  require(train.size() > 0, ErrorCode::EmptyInput, "training set is empty");

  RunResult res;
  res.seed = seed;
  res.dims = ModelDims{train.input_dim(), cfg.hidden, train.num_classes};
  const ModelDims& dims = res.dims;
  const std::size_t m = cfg.num_clients;

  const Partition part =
      cfg.heterogeneity.iid
          ? iid_partition(train.labels, m, derive_seed(seed, "partition"), train.num_classes)
          : dirichlet_partition(train.labels, m, cfg.heterogeneity.alpha,
                                derive_seed(seed, "partition"), train.num_classes);
  res.sizes = part.sizes();
  res.empty_clients = part.empty_clients;
  for (std::size_t i = 0; i < m; ++i)
    if (res.sizes[i] > 0) res.participants.push_back(i);

  auto [validation, holdout] = split_validation(test, cfg.validation_ratio, derive_seed(seed, "validation"));

  std::vector<ClientState> states(m);
  for (std::size_t i = 0; i < m; ++i) {
    states[i].id = i;
    states[i].weights = init_weights(seed, dims, cfg.init, i);
    states[i].data = make_batch(train, part.assignment[i]);
  }

  NtkConfig ntk;
  ntk.dims = dims;
  ntk.eta = cfg.eta;
  ntk.t_grid = cfg.t_grid;
  ntk.batches = cfg.jacobian_batches;
  ntk.per_round_averaging = cfg.per_round_averaging;
  ntk.bytes_per_scalar = cfg.bytes_per_scalar;

  std::vector<double> client_acc;
  res.rounds.push_back(measure(0, dims, states, res.sizes, holdout, client_acc, pool));

  for (std::size_t k = 1; k <= cfg.rounds; ++k) {
    const Topology topo = make_topology(cfg.topology, m, seed, k);
    if (sink) sink(k, topo);
    RoundMessageLog log;
    try {
      switch (cfg.algorithm) {
        case Algorithm::NtkDfl:
          log = run_round(states, topo, ntk, k, pool).log;
          break;
        case Algorithm::Dpsgd:
          log = dpsgd_round(states, topo, dims, cfg.sgd, seed, k, pool, cfg.bytes_per_scalar);
          break;
        case Algorithm::Dfedavg:
          log = dfedavg_round(states, topo, dims, cfg.sgd, false, seed, k, pool, cfg.bytes_per_scalar);
          break;
        case Algorithm::Dfedavgm:
          log = dfedavg_round(states, topo, dims, cfg.sgd, true, seed, k, pool, cfg.bytes_per_scalar);
          break;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "round " + std::to_string(k) + ": " + e.what());
    }
    RoundLog row = measure(k, dims, states, res.sizes, holdout, client_acc, pool);
    row.scalars_sent = log.total_scalars();
    row.bytes_sent = log.bytes_sent();
    res.rounds.push_back(row);
  }

  res.final_client_acc = client_acc;
  res.final_weights.reserve(m);
  for (auto& s : states) res.final_weights.push_back(std::move(s.weights));

  const auto selection_seed = derive_seed(seed, "selection");
  for (auto criterion : {SelectionCriterion::HighToLow, SelectionCriterion::Random,
                         SelectionCriterion::LowToHigh}) {
    res.selection.push_back(selection_order(dims, res.final_weights, res.sizes, validation, holdout,
                                            criterion, selection_seed, res.participants));
  }

  const auto& chosen = *std::find_if(res.selection.begin(), res.selection.end(), [&](const auto& s) {
    return s.criterion == cfg.selection_criterion;
  });
  const std::size_t take =
      cfg.opt_in == 0 ? chosen.ordering.size() : std::min(cfg.opt_in, chosen.ordering.size());
  res.opted_in.assign(chosen.ordering.begin(), chosen.ordering.begin() + static_cast<long>(take));
  res.selected_acc = take == 0 ? 0.0 : chosen.prefix_accuracies[take - 1];
  return res;
}

std::string manifest_json(const RunConfig& cfg, const RunResult& result) {
  using json = nlohmann::json;
  json doc;
  doc["config"] = json::parse(serialize_config(cfg));
  doc["seed"] = result.seed;
  doc["version"] = std::string(version());
  doc["revision"] = std::string(build_revision());
  doc["exponent_convention"] = std::string(kExponentConvention);
  doc["model"] = {{"input", result.dims.input},
                  {"hidden", result.dims.hidden},
                  {"output", result.dims.output},
                  {"parameters", result.dims.param_count()}};
  doc["client_sizes"] = result.sizes;
  doc["empty_clients"] = result.empty_clients;
  doc["opted_in"] = result.opted_in;
  json final_row;
  if (!result.rounds.empty()) {
    const RoundLog& last = result.rounds.back();
    final_row = {{"round", last.round},
                 {"agg_test_acc", last.agg_test_acc},
                 {"mean_client_acc", last.mean_client_acc},
                 {"selected_acc", result.selected_acc}};
  }
  doc["final"] = final_row;
  return doc.dump(2) + "\n";
}

std::vector<std::filesystem::path> run_experiment(const RunConfig& cfg, const RunOptions& options) {
  RunConfig effective = cfg;
  if (options.seed) effective.seeds = {*options.seed};
  if (options.output_dir) effective.output_dir = options.output_dir->string();
  effective.validate();

  const ExperimentData data = load_experiment_data(effective);
  ThreadPool pool(std::max<std::size_t>(1, options.workers));
  const std::filesystem::path base(effective.output_dir);

  std::vector<std::filesystem::path> dirs;
  for (std::uint64_t seed : effective.seeds) {
    const auto dir = effective.seeds.size() > 1 ? base / ("seed_" + std::to_string(seed)) : base;
    std::filesystem::create_directories(dir);

    TopologySink sink;
    if (effective.dump_edges) {
      sink = [&dir](std::size_t k, const Topology& topo) {
        write_text(dir / ("edges_round_" + std::to_string(k) + ".txt"), topo.edge_list());
      };
    }
    RunConfig per_seed = effective;
    per_seed.seeds = {seed};
    const RunResult res = simulate(per_seed, seed, data.train, data.test, pool, sink);

    write_text(dir / "metrics.csv", emit_metrics(res.rounds));
    write_text(dir / "selection.csv", emit_selection(res.selection));
    write_text(dir / "manifest.json", manifest_json(per_seed, res));
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace ntkdfl
