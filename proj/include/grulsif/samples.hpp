#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace grulsif {

// Per-node observation sets: X_v drawn from p_v (reference) and X'_v
// drawn from p'_v (test), all vectors sharing one dimension d.
struct PairedNodeSamples {
    // ref[v] / test[v] hold node v's observations.
    std::vector<std::vector<Eigen::VectorXd>> ref;
    std::vector<std::vector<Eigen::VectorXd>> test;

    int n_nodes() const { return static_cast<int>(ref.size()); }

    int dim() const {
        for (const auto& xs : ref)
            if (!xs.empty()) return static_cast<int>(xs.front().size());
        for (const auto& xs : test)
            if (!xs.empty()) return static_cast<int>(xs.front().size());
        throw std::invalid_argument("PairedNodeSamples: no observations");
    }

    void validate() const {
        if (ref.size() != test.size())
            throw std::invalid_argument("PairedNodeSamples: ref/test node counts differ");
        const int d = dim();
        for (std::size_t v = 0; v < ref.size(); ++v) {
            if (ref[v].empty() || test[v].empty())
                throw std::invalid_argument(
                    "PairedNodeSamples: node " + std::to_string(v) +
                    " needs at least one observation in each sample");
            for (const auto& x : ref[v])
                if (x.size() != d)
                    throw std::invalid_argument(
                        "PairedNodeSamples: dimension mismatch at node " +
                        std::to_string(v));
            for (const auto& x : test[v])
                if (x.size() != d)
                    throw std::invalid_argument(
                        "PairedNodeSamples: dimension mismatch at node " +
                        std::to_string(v));
        }
    }

    // True when every node carries the same (n, n') pair, the requirement
    // for vector-level permutation testing.
    bool equal_counts() const {
        if (ref.empty()) return false;
        for (const auto& xs : ref)
            if (xs.size() != ref.front().size()) return false;
        for (const auto& xs : test)
            if (xs.size() != test.front().size()) return false;
        return true;
    }

    // Samples with the roles of X and X' exchanged.
    PairedNodeSamples swapped() const { return PairedNodeSamples{test, ref}; }
};

}  // namespace grulsif
