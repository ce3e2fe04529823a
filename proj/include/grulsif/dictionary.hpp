#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "grulsif/kernels.hpp"
#include "grulsif/samples.hpp"

namespace grulsif {

struct DictionaryConfig {
    double mu0_node = 0.1;    // node-level coherence threshold
    double mu0_graph = 0.99;  // graph-level coherence threshold

    void validate() const {
        if (!(mu0_node > 0.0 && mu0_node < 1.0))
            throw std::invalid_argument("DictionaryConfig: mu0_node must be in (0,1)");
        if (!(mu0_graph > 0.0 && mu0_graph < 1.0))
            throw std::invalid_argument("DictionaryConfig: mu0_graph must be in (0,1)");
    }
};

namespace detail {

// Greedy coherence scan: admit a point iff its max kernel value against
// the current dictionary stays at or below mu0. The first point always
// seeds the dictionary. Order-dependent by construction.
inline void coherence_scan(const std::vector<Eigen::VectorXd>& points,
                           const GaussianKernel& kernel, double mu0,
                           std::vector<Eigen::VectorXd>& dict) {
    for (const auto& x : points) {
        if (dict.empty()) {
            dict.push_back(x);
            continue;
        }
        double mu = 0.0;
        for (const auto& c : dict) mu = std::max(mu, kernel(x, c));
        if (mu <= mu0) dict.push_back(x);
    }
}

}  // namespace detail

// Node-level dictionary: seeded with the first element of X_v, then scans
// the rest of X_v and all of X'_v in the given order.
inline std::vector<Eigen::VectorXd> build_node_dictionary(
    const std::vector<Eigen::VectorXd>& ref_obs,
    const std::vector<Eigen::VectorXd>& test_obs, double sigma_v,
    double mu0_node) {
    if (ref_obs.empty())
        throw std::invalid_argument("build_node_dictionary: empty reference sample");
    GaussianKernel kernel(sigma_v);
    std::vector<Eigen::VectorXd> dict;
    detail::coherence_scan(ref_obs, kernel, mu0_node, dict);
    detail::coherence_scan(test_obs, kernel, mu0_node, dict);
    return dict;
}

struct GlobalDictionary {
    Dictionary dictionary;
    std::vector<double> per_node_sigmas;  // reused by the sigma grid
};

// Two-stage construction: per-node coherence scans under each node's
// median-heuristic width, then a graph-level scan of the concatenated
// survivors under the median of the node widths. The global scan walks
// nodes 0..N-1 in order (insertion order within a node preserved) and is
// seeded by node 0's first survivor; the result is order-dependent, which
// the two-direction test exploits via swap_scan_order.
inline GlobalDictionary build_global_dictionary(
    const PairedNodeSamples& samples, const DictionaryConfig& cfg = {},
    bool swap_scan_order = false) {
    cfg.validate();
    samples.validate();
    const auto& first = swap_scan_order ? samples.test : samples.ref;
    const auto& second = swap_scan_order ? samples.ref : samples.test;

    std::vector<double> sigmas;
    std::vector<Eigen::VectorXd> pooled;
    sigmas.reserve(first.size());
    for (std::size_t v = 0; v < first.size(); ++v) {
        if (first[v].size() < 2)
            throw std::invalid_argument(
                "build_global_dictionary: node " + std::to_string(v) +
                " needs at least 2 reference observations");
        const double sigma_v = median_heuristic(first[v]);
        sigmas.push_back(sigma_v);
        auto node_dict =
            build_node_dictionary(first[v], second[v], sigma_v, cfg.mu0_node);
        pooled.insert(pooled.end(), node_dict.begin(), node_dict.end());
    }

    // Median of node widths; lower-middle element for even counts.
    std::vector<double> sorted = sigmas;
    std::sort(sorted.begin(), sorted.end());
    const double sigma = sorted[(sorted.size() - 1) / 2];

    GaussianKernel kernel(sigma);
    std::vector<Eigen::VectorXd> centers;
    detail::coherence_scan(pooled, kernel, cfg.mu0_graph, centers);
    return {Dictionary(std::move(centers), kernel), std::move(sigmas)};
}

}  // namespace grulsif
