#pragma once

// Per-round communication graphs over M clients.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ntkdfl {

enum class TopologyKind { Regular, Ring, ErdosRenyi, Complete, Custom };

class Topology {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  Topology() = default;
  /// Builds from an edge list; rejects self-loops and out-of-range nodes,
  /// collapses duplicates.
  Topology(std::size_t num_nodes, std::vector<Edge> edges, TopologyKind kind = TopologyKind::Custom);

  std::size_t size() const { return adjacency_.size(); }
  TopologyKind kind() const { return kind_; }

  /// Edges with first < second, sorted.
  const std::vector<Edge>& edges() const { return edges_; }

  /// Sorted neighbor list of node i.
  const std::vector<std::size_t>& neighbors(std::size_t i) const;
  std::size_t degree(std::size_t i) const { return neighbors(i).size(); }

  /// One "i j" pair per line.
  std::string edge_list() const;

 private:
  TopologyKind kind_ = TopologyKind::Custom;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Random simple kappa-regular graph (pairing model, restart on collision).
Topology random_regular(std::size_t num_nodes, std::size_t kappa, std::uint64_t seed);

Topology ring(std::size_t num_nodes);

/// G(M, p) with p = mean_degree / (M - 1).
Topology erdos_renyi(std::size_t num_nodes, double mean_degree, std::uint64_t seed);

Topology complete(std::size_t num_nodes);

/// Graph with no edges.
Topology isolated(std::size_t num_nodes);

struct TopologySpec {
  TopologyKind kind = TopologyKind::Regular;
  std::size_t kappa = 5;
  double mean_degree = 5.0;
  bool dynamic = true;

  void validate(std::size_t num_nodes) const;
  bool operator==(const TopologySpec&) const = default;
};

/// Seed of the graph used in round k: derive_seed(run_seed, "topology", k),
/// with k pinned to 0 for static schedules.
std::uint64_t round_topology_seed(std::uint64_t run_seed, std::size_t round, bool dynamic);

Topology make_topology(const TopologySpec& spec, std::size_t num_nodes, std::uint64_t run_seed,
                       std::size_t round);

std::string to_string(TopologyKind kind);

}  // namespace ntkdfl
