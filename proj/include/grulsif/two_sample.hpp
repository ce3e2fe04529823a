#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "grulsif/dictionary.hpp"
#include "grulsif/estimator.hpp"
#include "grulsif/graph.hpp"
#include "grulsif/model_selection.hpp"
#include "grulsif/rng.hpp"

namespace grulsif {

struct PermutationConfig {
    int n_perm = 1000;
    double pi_star = 0.05;
    std::uint64_t seed = 0;
    // Off by default: the exact p-value formula uses a strict inequality
    // with no +1 correction; the conservative variant is
    // (1 + #{perm >= observed}) / (n_perm + 1).
    bool conservative = false;

    void validate() const {
        if (n_perm < 1)
            throw std::invalid_argument("PermutationConfig: n_perm must be >= 1");
        if (!(pi_star > 0.0 && pi_star < 1.0))
            throw std::invalid_argument("PermutationConfig: pi_star must be in (0,1)");
    }
};

// One direction of the symmetric statistic: its dictionary (scan order
// matters) and the hyperparameters selected for it on the observed data.
struct DirectionSetup {
    Dictionary dictionary;
    Hyperparams hyperparams;
    SolverConfig solver;
};

struct TestReport {
    Eigen::VectorXd stat;        // s1* + s2* per node
    Eigen::MatrixXd perm_stats;  // n_perm x N
    Eigen::VectorXd p_values;
    std::vector<int> detected;   // {v : p_v < pi_star}
    double pi_star = 0.0;
    double sigma_d1 = 0.0, sigma_d2 = 0.0;
    Hyperparams hp_d1{0, 1, 1}, hp_d2{0, 1, 1};
    std::uint64_t seed = 0;
    int n_perm = 0;
};

// Whole-column permutation: observation j at every node moves together,
// preserving cross-node correlation. Requires equal counts at all nodes.
// Columns 0..n-1 index X, columns n..n+n'-1 index X'.
inline PairedNodeSamples graph_level_permutation(const PairedNodeSamples& samples,
                                                 const std::vector<int>& tau) {
    samples.validate();
    if (!samples.equal_counts())
        throw std::invalid_argument(
            "graph_level_permutation: all nodes must have equal observation counts");
    const int n = static_cast<int>(samples.ref.front().size());
    const int n_test = static_cast<int>(samples.test.front().size());
    if (static_cast<int>(tau.size()) != n + n_test)
        throw std::invalid_argument("graph_level_permutation: permutation size mismatch");
    const int n_nodes = samples.n_nodes();
    PairedNodeSamples out;
    out.ref.resize(n_nodes);
    out.test.resize(n_nodes);
    auto column = [&](int v, int j) -> const Eigen::VectorXd& {
        return j < n ? samples.ref[v][j] : samples.test[v][j - n];
    };
    for (int v = 0; v < n_nodes; ++v) {
        out.ref[v].reserve(n);
        out.test[v].reserve(n_test);
        for (int j = 0; j < n; ++j) out.ref[v].push_back(column(v, tau[j]));
        for (int j = n; j < n + n_test; ++j) out.test[v].push_back(column(v, tau[j]));
    }
    return out;
}

namespace detail {

// Per-node feature rows for all n+n' columns under one direction's
// dictionary; permutations only relabel rows, so this is computed once.
struct FeatureCache {
    std::vector<Eigen::MatrixXd> phi;  // phi[v] is (n+n') x L
    int n_ref;
    int n_test;

    FeatureCache(const PairedNodeSamples& samples, const Dictionary& dict)
        : n_ref(static_cast<int>(samples.ref.front().size())),
          n_test(static_cast<int>(samples.test.front().size())) {
        const int n_nodes = samples.n_nodes();
        const int L = dict.size();
        phi.reserve(n_nodes);
        for (int v = 0; v < n_nodes; ++v) {
            Eigen::MatrixXd m(n_ref + n_test, L);
            for (int j = 0; j < n_ref; ++j)
                m.row(j) = dict.feature_map(samples.ref[v][j]);
            for (int j = 0; j < n_test; ++j)
                m.row(n_ref + j) = dict.feature_map(samples.test[v][j]);
            phi.push_back(std::move(m));
        }
    }

    // Moments of the relabeled sample where ref_idx columns play X and
    // test_idx columns play X'.
    std::vector<NodeMoments> moments(const std::vector<int>& ref_idx,
                                     const std::vector<int>& test_idx) const {
        const int L = static_cast<int>(phi.front().cols());
        std::vector<NodeMoments> out;
        out.reserve(phi.size());
        for (const auto& m : phi) {
            NodeMoments nm{Eigen::MatrixXd::Zero(L, L),
                           Eigen::MatrixXd::Zero(L, L), Eigen::VectorXd::Zero(L)};
            for (int j : ref_idx) {
                const auto row = m.row(j);
                nm.H.noalias() += row.transpose() * row;
            }
            nm.H /= static_cast<double>(ref_idx.size());
            for (int j : test_idx) {
                const auto row = m.row(j);
                nm.H_test.noalias() += row.transpose() * row;
                nm.h_test += row.transpose();
            }
            nm.H_test /= static_cast<double>(test_idx.size());
            nm.h_test /= static_cast<double>(test_idx.size());
            out.push_back(std::move(nm));
        }
        return out;
    }
};

// Statistic from per-direction moments (direction 2 sees the sample roles
// exchanged): PE1 on training moments plus PE2 on training moments.
inline Eigen::VectorXd statistic_from_moments(
    const std::vector<NodeMoments>& m1, const std::vector<NodeMoments>& m2,
    const Graph& g, const DirectionSetup& d1, const DirectionSetup& d2) {
    SolverConfig s1 = d1.solver, s2 = d2.solver;
    s1.record_trace = s2.record_trace = false;
    const FitResult f1 = fit(m1, g, d1.hyperparams, s1);
    const FitResult f2 = fit(m2, g, d2.hyperparams, s2);
    Eigen::VectorXd stat(g.n_nodes());
    for (int v = 0; v < g.n_nodes(); ++v)
        stat[v] = pe_divergence(f1.theta.row(v), m1[v], d1.hyperparams.alpha) +
                  pe_divergence(f2.theta.row(v), m2[v], d2.hyperparams.alpha);
    return stat;
}

}  // namespace detail

// Symmetric per-node statistic: PE(X_v, X'_v) under direction 1's model
// plus PE(X'_v, X_v) under direction 2's, both on training moments.
inline Eigen::VectorXd symmetric_statistic(const PairedNodeSamples& samples,
                                           const Graph& g,
                                           const DirectionSetup& d1,
                                           const DirectionSetup& d2) {
    const auto m1 = compute_moments(samples, d1.dictionary);
    const auto m2 = compute_moments(samples.swapped(), d2.dictionary);
    return detail::statistic_from_moments(m1, m2, g, d1, d2);
}

// Collaborative permutation test. The direction setups (dictionaries and
// hyperparameters) were selected once on the observed data and stay
// frozen; each permutation replicate refits both directions from scratch
// with zero initialization. Replicate i draws its permutation from
// sub-seed (seed, i), independent of evaluation order.
inline TestReport permutation_test(const PairedNodeSamples& samples,
                                   const Graph& g, const PermutationConfig& cfg,
                                   const DirectionSetup& d1,
                                   const DirectionSetup& d2) {
    cfg.validate();
    samples.validate();
    if (!samples.equal_counts())
        throw std::invalid_argument(
            "permutation_test: all nodes must have equal observation counts");
    const int n_nodes = g.n_nodes();
    const int n = static_cast<int>(samples.ref.front().size());
    const int n_test = static_cast<int>(samples.test.front().size());

    const detail::FeatureCache cache1(samples, d1.dictionary);
    const detail::FeatureCache cache2(samples, d2.dictionary);

    std::vector<int> identity(n + n_test);
    std::iota(identity.begin(), identity.end(), 0);
    auto split = [&](const std::vector<int>& tau) {
        return std::pair{std::vector<int>(tau.begin(), tau.begin() + n),
                         std::vector<int>(tau.begin() + n, tau.end())};
    };

    TestReport report;
    report.pi_star = cfg.pi_star;
    report.seed = cfg.seed;
    report.n_perm = cfg.n_perm;
    report.sigma_d1 = d1.dictionary.sigma();
    report.sigma_d2 = d2.dictionary.sigma();
    report.hp_d1 = d1.hyperparams;
    report.hp_d2 = d2.hyperparams;

    {
        const auto [ref_idx, test_idx] = split(identity);
        report.stat = detail::statistic_from_moments(
            cache1.moments(ref_idx, test_idx), cache2.moments(test_idx, ref_idx),
            g, d1, d2);
    }

    report.perm_stats.resize(cfg.n_perm, n_nodes);
    for (int i = 0; i < cfg.n_perm; ++i) {
        std::vector<int> tau = identity;
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1));
        rng.shuffle(tau);
        const auto [ref_idx, test_idx] = split(tau);
        report.perm_stats.row(i) = detail::statistic_from_moments(
            cache1.moments(ref_idx, test_idx), cache2.moments(test_idx, ref_idx),
            g, d1, d2);
    }

    report.p_values.resize(n_nodes);
    for (int v = 0; v < n_nodes; ++v) {
        if (cfg.conservative) {
            int count = 0;
            for (int i = 0; i < cfg.n_perm; ++i)
                if (report.perm_stats(i, v) >= report.stat[v]) ++count;
            report.p_values[v] =
                static_cast<double>(1 + count) / (cfg.n_perm + 1);
        } else {
            int count = 0;
            for (int i = 0; i < cfg.n_perm; ++i)
                if (report.stat[v] < report.perm_stats(i, v)) ++count;
            report.p_values[v] = static_cast<double>(count) / cfg.n_perm;
        }
        if (report.p_values[v] < cfg.pi_star) report.detected.push_back(v);
    }
    return report;
}

// Alg. 2's preparation stage for one direction: build the dictionary with
// the direction's scan order, derive the default grids, and select
// hyperparameters by cross-validation on the observed data.
inline DirectionSetup prepare_direction(const PairedNodeSamples& samples,
                                        const Graph& g, double alpha,
                                        bool swap_scan_order,
                                        const DictionaryConfig& dict_cfg,
                                        std::uint64_t selection_seed,
                                        const SolverConfig& solver = {},
                                        int n_splits = 5) {
    const PairedNodeSamples& oriented_src = samples;  // dictionary scan handles order
    const auto built =
        build_global_dictionary(oriented_src, dict_cfg, swap_scan_order);
    SelectionConfig sel = default_grids(built.per_node_sigmas, g);
    sel.n_splits = n_splits;
    sel.seed = selection_seed;
    const PairedNodeSamples oriented =
        swap_scan_order ? samples.swapped() : samples;
    const SelectionResult chosen = select_hyperparameters(
        oriented, built.dictionary, g, alpha, sel, solver);
    return DirectionSetup{built.dictionary.with_sigma(chosen.sigma_star),
                          Hyperparams{alpha, chosen.lambda_star, chosen.gamma_star},
                          solver};
}

}  // namespace grulsif
