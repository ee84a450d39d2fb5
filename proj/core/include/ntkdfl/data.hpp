#pragma once

// Dataset ingestion and client partitioning.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "ntkdfl/mlp.hpp"

namespace ntkdfl {

/// Decoded IDX tensor (u8 element type only).
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

constexpr std::uint32_t kIdxMagicLabels = 0x00000801;
constexpr std::uint32_t kIdxMagicImages = 0x00000803;

/// Parses a raw (uncompressed) IDX buffer. Throws BadMagic or TruncatedPayload.
IdxTensor read_idx(std::span<const std::uint8_t> bytes);

/// Inverse of read_idx; magic is chosen from the rank (1 or 3).
std::vector<std::uint8_t> write_idx(const IdxTensor& tensor);

/// Inflates a gzip stream. Input that does not start with 0x1f 0x8b is
/// returned unchanged.
std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

struct Dataset {
  Matrix images;             // N x input, in [0, 1]
  std::vector<int> labels;   // N, in [0, num_classes)
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(images.cols()); }

  Dataset subset(std::span<const std::size_t> indices) const;
};

struct LoadOptions {
  /// Average-pool factor applied to square images (1 = none, 2 = 28x28 -> 14x14).
  std::size_t downsample = 1;
  /// Keep only the first `limit` samples (0 = all).
  std::size_t limit = 0;
};

/// Loads an images/labels IDX pair (raw or gzip) and scales pixels by 1/255.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         const LoadOptions& options = {});

/// Builds a dataset from decoded tensors; exposed for tests.
Dataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels,
                         const LoadOptions& options = {});

Matrix one_hot(std::span<const int> labels, std::size_t num_classes);

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data);

struct Partition {
  std::vector<std::vector<std::size_t>> assignment;   // sample indices per client
  std::vector<Vector> proportions;                    // q_i per client, sums to 1
  std::vector<std::size_t> empty_clients;             // clients that received nothing

  std::size_t num_clients() const { return assignment.size(); }
  std::vector<std::size_t> sizes() const;
};

/// Label-skewed split: q_i ~ Dir(alpha 1_C) per client, then every class pool
/// is divided among clients in proportion to q_ic / sum_i q_ic with
/// largest-remainder rounding. Every sample lands with exactly one client.
Partition dirichlet_partition(std::span<const int> labels, std::size_t num_clients, double alpha,
                              std::uint64_t seed, std::size_t num_classes = 10);

/// Uniformly shuffled split into near-equal shares.
Partition iid_partition(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed,
                        std::size_t num_classes = 10);

/// Stratified split of a test set into (validation, holdout). Per-class counts
/// are within one of ratio * class_count and the validation total is
/// round(ratio * N).
std::pair<Dataset, Dataset> split_validation(const Dataset& test, double ratio, std::uint64_t seed);

}  // namespace ntkdfl
