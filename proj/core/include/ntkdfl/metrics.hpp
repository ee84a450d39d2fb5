#pragma once

// Final model aggregation, client selection and run metrics.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntkdfl/data.hpp"
#include "ntkdfl/mlp.hpp"

namespace ntkdfl {

/// sum_{i in subset} N_i w_i / sum_{i in subset} N_i. If every selected size
/// is zero the plain mean is used.
WeightVector final_average(std::span<const WeightVector> weights, std::span<const std::size_t> sizes,
                           std::span<const std::size_t> subset);

/// Fraction of samples whose argmax prediction (lowest index on ties) equals
/// the label.
double evaluate_accuracy(const ModelDims& dims, const WeightVector& w, const Dataset& data);

/// (1/d) sum_j sqrt(sum_i (mean_j - w_ij)^2) with the unweighted mean.
double inter_model_variance(std::span<const WeightVector> weights);

enum class SelectionCriterion { HighToLow, Random, LowToHigh };

std::string to_string(SelectionCriterion c);
SelectionCriterion selection_criterion_from_string(const std::string& s);

struct SelectionOrder {
  SelectionCriterion criterion = SelectionCriterion::HighToLow;
  std::vector<std::size_t> ordering;          // client indices
  std::vector<double> validation_accuracy;    // per client index
  std::vector<double> prefix_accuracies;      // test accuracy after averaging the first k+1
};

/// Ranks `participants` (all clients when empty) by validation accuracy and
/// scores the running size-weighted average of each prefix on `test`.
/// Ties in validation accuracy keep the lower client index first.
SelectionOrder selection_order(const ModelDims& dims, std::span<const WeightVector> models,
                               std::span<const std::size_t> sizes, const Dataset& validation,
                               const Dataset& test, SelectionCriterion criterion,
                               std::uint64_t seed, std::span<const std::size_t> participants = {});

/// history[k] is the accuracy after round k + 1. Returns the first round
/// (1-based) reaching the threshold.
std::optional<std::size_t> rounds_to_threshold(std::span<const double> history, double threshold);

struct RoundLog {
  std::size_t round = 0;
  double agg_test_acc = 0.0;
  double mean_client_acc = 0.0;
  double std_client_acc = 0.0;
  double min_client_acc = 0.0;
  double max_client_acc = 0.0;
  double variance_v = 0.0;
  std::uint64_t scalars_sent = 0;
  std::uint64_t bytes_sent = 0;
};

/// Population statistics of per-client accuracies.
struct AccuracySummary {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

AccuracySummary summarize(std::span<const double> values);

/// CSV with header
/// round,agg_test_acc,mean_client_acc,std_client_acc,min_client_acc,max_client_acc,variance_V,scalars_sent,bytes_sent
/// Reals use 9 significant digits.
std::string emit_metrics(std::span<const RoundLog> log);

/// criterion,prefix_size,test_acc
std::string emit_selection(std::span<const SelectionOrder> orders);

}  // namespace ntkdfl
