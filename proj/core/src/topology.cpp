#include "ntkdfl/topology.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "ntkdfl/error.hpp"
#include "ntkdfl/rng.hpp"

namespace ntkdfl {

Topology::Topology(std::size_t num_nodes, std::vector<Edge> edges, TopologyKind kind)
    : kind_(kind), adjacency_(num_nodes) {
  for (auto& [a, b] : edges) {
    require(a < num_nodes && b < num_nodes, ErrorCode::InvalidArgument, "edge endpoint out of range");
    require(a != b, ErrorCode::InvalidArgument, "self-loop in topology");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  for (const auto& [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

const std::vector<std::size_t>& Topology::neighbors(std::size_t i) const {
  require(i < adjacency_.size(), ErrorCode::InvalidArgument, "client index out of range");
  return adjacency_[i];
}

std::string Topology::edge_list() const {
  std::ostringstream os;
  for (const auto& [a, b] : edges_) os << a << ' ' << b << '\n';
  return os.str();
}

Topology random_regular(std::size_t num_nodes, std::size_t kappa, std::uint64_t seed) {
  require(kappa > 0 && kappa < num_nodes, ErrorCode::InfeasibleDegree,
          "kappa must satisfy 0 < kappa < M");
  require((num_nodes * kappa) % 2 == 0, ErrorCode::InfeasibleDegree, "M * kappa must be even");

  Engine eng = make_engine(derive_seed(seed, "regular"));
  std::vector<std::size_t> stubs(num_nodes * kappa);
  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (std::size_t s = 0; s < stubs.size(); ++s) stubs[s] = s / kappa;

    // Pair stubs one at a time; a bounded number of redraws per pair before a
    // full restart keeps dense cases (kappa close to M) tractable.
    std::set<Topology::Edge> edges;
    std::size_t live = stubs.size();
    bool ok = true;
    while (live > 0 && ok) {
      ok = false;
      for (int retry = 0; retry < 64; ++retry) {
        const std::size_t i = uniform_index(eng, live);
        std::size_t j = uniform_index(eng, live - 1);
        if (j >= i) ++j;
        std::size_t a = stubs[i], b = stubs[j];
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (!edges.emplace(a, b).second) continue;
        // remove the two stubs (higher index first)
        const std::size_t hi = std::max(i, j), lo = std::min(i, j);
        stubs[hi] = stubs[live - 1];
        stubs[lo] = stubs[live - 2];
        live -= 2;
        ok = true;
        break;
      }
    }
    if (ok) return Topology(num_nodes, {edges.begin(), edges.end()}, TopologyKind::Regular);
  }
  fail(ErrorCode::Numerical, "random_regular: no simple graph found");
}

Topology ring(std::size_t num_nodes) {
  require(num_nodes >= 3, ErrorCode::InvalidArgument, "ring needs at least 3 nodes");
  std::vector<Topology::Edge> edges;
  for (std::size_t i = 0; i < num_nodes; ++i) edges.emplace_back(i, (i + 1) % num_nodes);
  return Topology(num_nodes, std::move(edges), TopologyKind::Ring);
}

Topology erdos_renyi(std::size_t num_nodes, double mean_degree, std::uint64_t seed) {
  require(num_nodes >= 2, ErrorCode::InvalidArgument, "erdos_renyi needs at least 2 nodes");
  const double max_degree = static_cast<double>(num_nodes - 1);
  require(mean_degree > 0.0 && mean_degree <= max_degree, ErrorCode::InvalidArgument,
          "mean degree must lie in (0, M-1]");
  const double p = mean_degree / max_degree;
  Engine eng = make_engine(derive_seed(seed, "erdos-renyi"));
  std::vector<Topology::Edge> edges;
  for (std::size_t a = 0; a < num_nodes; ++a)
    for (std::size_t b = a + 1; b < num_nodes; ++b)
      if (uniform01(eng) < p) edges.emplace_back(a, b);
  return Topology(num_nodes, std::move(edges), TopologyKind::ErdosRenyi);
}

Topology complete(std::size_t num_nodes) {
  std::vector<Topology::Edge> edges;
  for (std::size_t a = 0; a < num_nodes; ++a)
    for (std::size_t b = a + 1; b < num_nodes; ++b) edges.emplace_back(a, b);
  return Topology(num_nodes, std::move(edges), TopologyKind::Complete);
}

Topology isolated(std::size_t num_nodes) { return Topology(num_nodes, {}, TopologyKind::Custom); }

void TopologySpec::validate(std::size_t num_nodes) const {
  switch (kind) {
    case TopologyKind::Regular:
      require(kappa > 0 && kappa < num_nodes, ErrorCode::InfeasibleDegree,
              "kappa must satisfy 0 < kappa < M");
      require((num_nodes * kappa) % 2 == 0, ErrorCode::InfeasibleDegree, "M * kappa must be even");
      break;
    case TopologyKind::Ring:
      require(num_nodes >= 3, ErrorCode::InvalidArgument, "ring needs at least 3 nodes");
      break;
    case TopologyKind::ErdosRenyi:
      require(num_nodes >= 2 && mean_degree > 0.0 &&
                  mean_degree <= static_cast<double>(num_nodes - 1),
              ErrorCode::InvalidArgument, "mean degree must lie in (0, M-1]");
      break;
    case TopologyKind::Complete:
    case TopologyKind::Custom:
      break;
  }
}

std::uint64_t round_topology_seed(std::uint64_t run_seed, std::size_t round, bool dynamic) {
  return derive_seed(run_seed, "topology", dynamic ? round : 0);
}

Topology make_topology(const TopologySpec& spec, std::size_t num_nodes, std::uint64_t run_seed,
                       std::size_t round) {
  const std::uint64_t seed = round_topology_seed(run_seed, round, spec.dynamic);
  switch (spec.kind) {
    case TopologyKind::Regular: return random_regular(num_nodes, spec.kappa, seed);
    case TopologyKind::Ring: return ring(num_nodes);
    case TopologyKind::ErdosRenyi: return erdos_renyi(num_nodes, spec.mean_degree, seed);
    case TopologyKind::Complete: return complete(num_nodes);
    case TopologyKind::Custom: return isolated(num_nodes);
  }
  return isolated(num_nodes);
}

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::Regular: return "regular";
    case TopologyKind::Ring: return "ring";
    case TopologyKind::ErdosRenyi: return "erdos_renyi";
    case TopologyKind::Complete: return "complete";
    case TopologyKind::Custom: return "custom";
  }
  return "custom";
}

}  // namespace ntkdfl
