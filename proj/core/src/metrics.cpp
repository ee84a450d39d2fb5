#include "ntkdfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

namespace {

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

WeightVector final_average(std::span<const WeightVector> weights, std::span<const std::size_t> sizes,
                           std::span<const std::size_t> subset) {
  require(!subset.empty(), ErrorCode::EmptyInput, "final average over an empty subset");
  require(sizes.size() == weights.size(), ErrorCode::DimensionMismatch,
          "one size per client model is required");
  double total = 0.0;
  for (auto i : subset) {
    require(i < weights.size(), ErrorCode::InvalidArgument, "subset index out of range");
    total += static_cast<double>(sizes[i]);
  }
  WeightVector acc = WeightVector::Zero(weights[subset.front()].size());
  for (auto i : subset) {
    const double share = total > 0.0 ? static_cast<double>(sizes[i]) / total
                                     : 1.0 / static_cast<double>(subset.size());
    acc += share * weights[i];
  }
  return acc;
}

double evaluate_accuracy(const ModelDims& dims, const WeightVector& w, const Dataset& data) {
  require(data.size() > 0, ErrorCode::EmptyInput, "accuracy on an empty dataset");
  const Matrix out = forward(dims, w, data.images);
  std::size_t hits = 0;
  for (Eigen::Index n = 0; n < out.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < out.cols(); ++c)
      if (out(n, c) > out(n, best)) best = c;
    if (best == data.labels[static_cast<std::size_t>(n)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double inter_model_variance(std::span<const WeightVector> weights) {
  require(weights.size() >= 2, ErrorCode::InvalidArgument, "variance needs at least two clients");
  const auto d = weights.front().size();
  // deviations from the first model keep identical inputs at exactly zero
  const WeightVector& ref = weights.front();
  WeightVector shift = WeightVector::Zero(d);
  for (const auto& w : weights) {
    require(w.size() == d, ErrorCode::DimensionMismatch, "clients hold weight vectors of different length");
    shift += w - ref;
  }
  shift /= static_cast<double>(weights.size());
  WeightVector sq = WeightVector::Zero(d);
  for (const auto& w : weights) sq += (shift - (w - ref)).cwiseAbs2();
  return sq.cwiseSqrt().sum() / static_cast<double>(d);
}

std::string to_string(SelectionCriterion c) {
  switch (c) {
    case SelectionCriterion::HighToLow: return "high_to_low";
    case SelectionCriterion::Random: return "random";
    case SelectionCriterion::LowToHigh: return "low_to_high";
  }
  return "high_to_low";
}

SelectionCriterion selection_criterion_from_string(const std::string& s) {
  if (s == "high_to_low") return SelectionCriterion::HighToLow;
  if (s == "random") return SelectionCriterion::Random;
  if (s == "low_to_high") return SelectionCriterion::LowToHigh;
  fail(ErrorCode::InvalidArgument, "unknown selection criterion '" + s + "'");
}

SelectionOrder selection_order(const ModelDims& dims, std::span<const WeightVector> models,
                               std::span<const std::size_t> sizes, const Dataset& validation,
                               const Dataset& test, SelectionCriterion criterion,
                               std::uint64_t seed, std::span<const std::size_t> participants) {
  require(!models.empty(), ErrorCode::EmptyInput, "no client models to select from");
  require(validation.size() > 0, ErrorCode::EmptyInput, "empty validation set");

  SelectionOrder out;
  out.criterion = criterion;
  out.validation_accuracy.assign(models.size(), 0.0);

  std::vector<std::size_t> pool(participants.begin(), participants.end());
  if (pool.empty()) {
    pool.resize(models.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  for (auto i : pool) out.validation_accuracy[i] = evaluate_accuracy(dims, models[i], validation);

  out.ordering = pool;
  const auto& acc = out.validation_accuracy;
  switch (criterion) {
    case SelectionCriterion::HighToLow:
      std::stable_sort(out.ordering.begin(), out.ordering.end(),
                       [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
      break;
    case SelectionCriterion::LowToHigh:
      std::stable_sort(out.ordering.begin(), out.ordering.end(),
                       [&](std::size_t a, std::size_t b) { return acc[a] < acc[b]; });
      break;
    case SelectionCriterion::Random: {
      Engine eng = make_engine(derive_seed(seed, "selection"));
      shuffle(std::span<std::size_t>(out.ordering), eng);
      break;
    }
  }

  for (std::size_t k = 1; k <= out.ordering.size(); ++k) {
    const std::span<const std::size_t> prefix(out.ordering.data(), k);
    out.prefix_accuracies.push_back(
        evaluate_accuracy(dims, final_average(models, sizes, prefix), test));
  }
  return out;
}

std::optional<std::size_t> rounds_to_threshold(std::span<const double> history, double threshold) {
  for (std::size_t k = 0; k < history.size(); ++k)
    if (history[k] >= threshold) return k + 1;
  return std::nullopt;
}

AccuracySummary summarize(std::span<const double> values) {
  AccuracySummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / n);
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

std::string emit_metrics(std::span<const RoundLog> log) {
  std::string out =
      "round,agg_test_acc,mean_client_acc,std_client_acc,min_client_acc,max_client_acc,"
      "variance_V,scalars_sent,bytes_sent\n";
  for (const auto& r : log) {
    out += std::to_string(r.round);
    for (double v : {r.agg_test_acc, r.mean_client_acc, r.std_client_acc, r.min_client_acc,
                     r.max_client_acc, r.variance_v}) {
      out += ',';
      out += fmt_real(v);
    }
    out += ',' + std::to_string(r.scalars_sent) + ',' + std::to_string(r.bytes_sent) + '\n';
  }
  return out;
}

std::string emit_selection(std::span<const SelectionOrder> orders) {
  std::string out = "criterion,prefix_size,test_acc\n";
  for (const auto& o : orders)
    for (std::size_t k = 0; k < o.prefix_accuracies.size(); ++k)
      out += to_string(o.criterion) + ',' + std::to_string(k + 1) + ',' +
             fmt_real(o.prefix_accuracies[k]) + '\n';
  return out;
}

}  // namespace ntkdfl
