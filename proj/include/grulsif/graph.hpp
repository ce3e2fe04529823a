#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grulsif/rng.hpp"

namespace grulsif {

struct Edge {
    int u;
    int v;
    double weight;
};

// Weighted undirected graph without self-loops. Immutable after
// construction; adjacency is kept sparse (edge list + neighbor lists),
// the solver only ever iterates neighborhoods.
class Graph {
public:
    Graph(int n_nodes, std::vector<Edge> edges,
          std::vector<int> cluster_of = {})
        : n_nodes_(n_nodes),
          edges_(std::move(edges)),
          cluster_of_(std::move(cluster_of)) {
        if (n_nodes_ <= 0) throw std::invalid_argument("graph: n_nodes must be positive");
        if (!cluster_of_.empty() &&
            static_cast<int>(cluster_of_.size()) != n_nodes_)
            throw std::invalid_argument("graph: cluster label count != n_nodes");
        degrees_ = Eigen::VectorXd::Zero(n_nodes_);
        neighbors_.resize(n_nodes_);
        std::set<std::pair<int, int>> seen;
        for (const auto& e : edges_) {
            if (e.u < 0 || e.u >= n_nodes_ || e.v < 0 || e.v >= n_nodes_)
                throw std::invalid_argument("graph: edge index out of range");
            if (e.u == e.v)
                throw std::invalid_argument("graph: self-loop at node " +
                                            std::to_string(e.u));
            if (e.weight <= 0.0)
                throw std::invalid_argument("graph: edge weight must be positive");
            auto key = std::minmax(e.u, e.v);
            if (!seen.insert(key).second)
                throw std::invalid_argument("graph: duplicate edge (" +
                                            std::to_string(e.u) + "," +
                                            std::to_string(e.v) + ")");
            degrees_[e.u] += e.weight;
            degrees_[e.v] += e.weight;
            neighbors_[e.u].push_back({e.v, e.weight});
            neighbors_[e.v].push_back({e.u, e.weight});
        }
    }

    int n_nodes() const { return n_nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Eigen::VectorXd& degrees() const { return degrees_; }
    double degree(int v) const { return degrees_[v]; }

    // (neighbor index, edge weight) pairs of node v.
    const std::vector<std::pair<int, double>>& neighbors(int v) const {
        return neighbors_[v];
    }

    bool has_clusters() const { return !cluster_of_.empty(); }
    const std::vector<int>& cluster_of() const { return cluster_of_; }

    int n_clusters() const {
        int m = 0;
        for (int c : cluster_of_) m = std::max(m, c + 1);
        return m;
    }

private:
    int n_nodes_;
    std::vector<Edge> edges_;
    std::vector<int> cluster_of_;
    Eigen::VectorXd degrees_;
    std::vector<std::vector<std::pair<int, double>>> neighbors_;
};

inline Graph build_graph(const std::vector<Edge>& edge_list, int n_nodes) {
    return Graph(n_nodes, edge_list);
}

// Combinatorial Laplacian diag(d) - W as a sparse symmetric matrix.
inline Eigen::SparseMatrix<double> laplacian(const Graph& g) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(g.edges().size() * 2 + g.n_nodes());
    for (int v = 0; v < g.n_nodes(); ++v)
        trip.emplace_back(v, v, g.degree(v));
    for (const auto& e : g.edges()) {
        trip.emplace_back(e.u, e.v, -e.weight);
        trip.emplace_back(e.v, e.u, -e.weight);
    }
    Eigen::SparseMatrix<double> lap(g.n_nodes(), g.n_nodes());
    lap.setFromTriplets(trip.begin(), trip.end());
    return lap;
}

inline double average_degree(const Graph& g) {
    return g.degrees().sum() / g.n_nodes();
}

// Stochastic block model with unit edge weights: intra-cluster pairs are
// linked with probability p_in, inter-cluster with p_out. Deterministic
// given the seed (pairs visited in lexicographic order).
inline Graph sbm_generate(const std::vector<int>& cluster_sizes, double p_in,
                          double p_out, std::uint64_t seed) {
    if (cluster_sizes.empty())
        throw std::invalid_argument("sbm_generate: empty cluster list");
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
        throw std::invalid_argument("sbm_generate: probabilities must be in [0,1]");
    std::vector<int> labels;
    for (std::size_t c = 0; c < cluster_sizes.size(); ++c) {
        if (cluster_sizes[c] <= 0)
            throw std::invalid_argument("sbm_generate: cluster sizes must be positive");
        labels.insert(labels.end(), cluster_sizes[c], static_cast<int>(c));
    }
    const int n = static_cast<int>(labels.size());
    Rng rng(derive_seed(seed, 0x5b3));
    std::vector<Edge> edges;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            const double p = (labels[u] == labels[v]) ? p_in : p_out;
            if (rng.uniform() < p) edges.push_back({u, v, 1.0});
        }
    return Graph(n, std::move(edges), std::move(labels));
}

}  // namespace grulsif
