#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ntkdfl/data.hpp"
#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

namespace {

// Splits `total` items by nonnegative weights summing to 1; remainders go to
// the largest fractional parts, ties to the lower index.
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> counts(n);
  std::vector<double> frac(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    counts[i] = std::min(total, static_cast<std::size_t>(std::floor(exact)));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

std::vector<std::vector<std::size_t>> class_pools(std::span<const int> labels,
                                                  std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> pools(num_classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    require(labels[n] >= 0 && static_cast<std::size_t>(labels[n]) < num_classes,
            ErrorCode::InvalidArgument, "label out of range");
    pools[static_cast<std::size_t>(labels[n])].push_back(n);
  }
  return pools;
}

void finish(Partition& p, std::span<const int> labels, std::size_t num_classes) {
  p.empty_clients.clear();
  for (std::size_t i = 0; i < p.assignment.size(); ++i) {
    auto& idx = p.assignment[i];
    std::sort(idx.begin(), idx.end());
    if (idx.empty()) p.empty_clients.push_back(i);
  }
  if (p.proportions.empty()) {
    for (const auto& idx : p.assignment) {
      Vector q = Vector::Zero(static_cast<Eigen::Index>(num_classes));
      for (auto s : idx) q[labels[s]] += 1.0;
      if (!idx.empty()) q /= static_cast<double>(idx.size());
      else q.setConstant(1.0 / static_cast<double>(num_classes));
      p.proportions.push_back(q);
    }
  }
}

}  // namespace

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(assignment.size());
  for (const auto& a : assignment) out.push_back(a.size());
  return out;
}

Partition dirichlet_partition(std::span<const int> labels, std::size_t num_clients, double alpha,
                              std::uint64_t seed, std::size_t num_classes) {
  require(num_clients >= 1, ErrorCode::InvalidArgument, "need at least one client");
  require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::InvalidArgument, "alpha must be positive");
  auto pools = class_pools(labels, num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    require(!pools[c].empty(), ErrorCode::EmptyClass,
            "class " + std::to_string(c) + " has no samples");

  Engine eng = make_engine(derive_seed(seed, "dirichlet"));
  Partition p;
  p.assignment.resize(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) {
    Vector q(static_cast<Eigen::Index>(num_classes));
    for (std::size_t c = 0; c < num_classes; ++c) q[c] = gamma_sample(eng, alpha);
    const double total = q.sum();
    // every draw can underflow to zero for tiny alpha
    if (total > 0.0) q /= total;
    else q.setConstant(1.0 / static_cast<double>(num_classes));
    p.proportions.push_back(q);
  }

  Engine shuffle_eng = make_engine(derive_seed(seed, "dirichlet-pools"));
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& pool = pools[c];
    shuffle(std::span<std::size_t>(pool), shuffle_eng);
    std::vector<double> w(num_clients);
    double mass = 0.0;
    for (std::size_t i = 0; i < num_clients; ++i) mass += (w[i] = p.proportions[i][c]);
    for (auto& x : w) x = mass > 0.0 ? x / mass : 1.0 / static_cast<double>(num_clients);

    const auto counts = largest_remainder(pool.size(), w);
    std::size_t at = 0;
    for (std::size_t i = 0; i < num_clients; ++i) {
      p.assignment[i].insert(p.assignment[i].end(), pool.begin() + static_cast<std::ptrdiff_t>(at),
                             pool.begin() + static_cast<std::ptrdiff_t>(at + counts[i]));
      at += counts[i];
    }
  }
  finish(p, labels, num_classes);
  return p;
}

Partition iid_partition(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed,
                        std::size_t num_classes) {
  require(num_clients >= 1, ErrorCode::InvalidArgument, "need at least one client");
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), 0);
  Engine eng = make_engine(derive_seed(seed, "iid"));
  shuffle(std::span<std::size_t>(all), eng);

  Partition p;
  p.assignment.resize(num_clients);
  const std::size_t base = all.size() / num_clients;
  const std::size_t extra = all.size() % num_clients;
  std::size_t at = 0;
  for (std::size_t i = 0; i < num_clients; ++i) {
    const std::size_t take = base + (i < extra ? 1 : 0);
    p.assignment[i].assign(all.begin() + static_cast<std::ptrdiff_t>(at),
                           all.begin() + static_cast<std::ptrdiff_t>(at + take));
    at += take;
  }
  finish(p, labels, num_classes);
  return p;
}

}  // namespace ntkdfl
