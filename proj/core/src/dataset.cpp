#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ntkdfl/data.hpp"
#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.images.resize(static_cast<Eigen::Index>(indices.size()), images.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.images.row(static_cast<Eigen::Index>(r)) = images.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

Dataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels,
                         const LoadOptions& options) {
  require(images.dims.size() == 3, ErrorCode::InvalidArgument, "image file must be rank 3");
  require(labels.dims.size() == 1, ErrorCode::InvalidArgument, "label file must be rank 1");
  require(images.dims[0] == labels.dims[0], ErrorCode::DimensionMismatch,
          "image and label counts differ");

  const std::size_t rows = images.dims[1];
  const std::size_t cols = images.dims[2];
  const std::size_t pool = std::max<std::size_t>(options.downsample, 1);
  require(rows % pool == 0 && cols % pool == 0, ErrorCode::InvalidArgument,
          "downsample factor must divide the image size");
  std::size_t n = images.dims[0];
  if (options.limit != 0) n = std::min(n, options.limit);

  const std::size_t out_rows = rows / pool;
  const std::size_t out_cols = cols / pool;
  const double scale = 1.0 / (255.0 * static_cast<double>(pool * pool));

  Dataset out;
  out.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_rows * out_cols));
  out.labels.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::uint8_t* img = images.data.data() + s * rows * cols;
    for (std::size_t r = 0; r < out_rows; ++r) {
      for (std::size_t c = 0; c < out_cols; ++c) {
        unsigned acc = 0;
        for (std::size_t dr = 0; dr < pool; ++dr)
          for (std::size_t dc = 0; dc < pool; ++dc)
            acc += img[(r * pool + dr) * cols + c * pool + dc];
        out.images(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r * out_cols + c)) =
            acc * scale;
      }
    }
    out.labels[s] = labels.data[s];
    require(out.labels[s] < static_cast<int>(out.num_classes), ErrorCode::InvalidArgument,
            "label " + std::to_string(out.labels[s]) + " out of range");
  }
  return out;
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         const LoadOptions& options) {
  const auto img = read_idx(maybe_gunzip(read_file(images)));
  const auto lab = read_idx(maybe_gunzip(read_file(labels)));
  return dataset_from_idx(img, lab, options);
}

Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()),
                            static_cast<Eigen::Index>(num_classes));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    require(labels[n] >= 0 && static_cast<std::size_t>(labels[n]) < num_classes,
            ErrorCode::InvalidArgument, "label " + std::to_string(labels[n]) + " out of range");
    out(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset part = data.subset(indices);
  Batch b;
  b.targets = one_hot(part.labels, data.num_classes);
  b.inputs = std::move(part.images);
  b.labels = std::move(part.labels);
  return b;
}

Batch make_batch(const Dataset& data) {
  Batch b;
  b.inputs = data.images;
  b.targets = one_hot(data.labels, data.num_classes);
  b.labels = data.labels;
  return b;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& test, double ratio,
                                             std::uint64_t seed) {
  require(test.size() > 0, ErrorCode::EmptyInput, "cannot split an empty test set");
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::InvalidArgument,
          "validation ratio must lie in (0, 1)");

  std::vector<std::vector<std::size_t>> by_class(test.num_classes);
  for (std::size_t n = 0; n < test.size(); ++n)
    by_class[static_cast<std::size_t>(test.labels[n])].push_back(n);

  // floor per class, then hand the leftover to the largest fractional parts
  const std::size_t c_count = by_class.size();
  std::vector<std::size_t> take(c_count);
  std::vector<double> frac(c_count);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < c_count; ++c) {
    const double exact = ratio * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(exact));
    frac[c] = exact - static_cast<double>(take[c]);
    assigned += take[c];
  }
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(test.size())));
  std::vector<std::size_t> order(c_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < target && k < c_count; ++k) {
    if (frac[order[k]] > 0.0) {
      ++take[order[k]];
      ++assigned;
    }
  }

  Engine eng = make_engine(derive_seed(seed, "validation-split"));
  std::vector<std::size_t> val, hold;
  for (std::size_t c = 0; c < c_count; ++c) {
    auto& pool = by_class[c];
    shuffle(std::span<std::size_t>(pool), eng);
    val.insert(val.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take[c]));
    hold.insert(hold.end(), pool.begin() + static_cast<std::ptrdiff_t>(take[c]), pool.end());
  }
  std::sort(val.begin(), val.end());
  std::sort(hold.begin(), hold.end());
  return {test.subset(val), test.subset(hold)};
}

}  // namespace ntkdfl
