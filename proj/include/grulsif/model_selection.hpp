#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "grulsif/estimator.hpp"
#include "grulsif/graph.hpp"
#include "grulsif/rng.hpp"

namespace grulsif {

struct SelectionConfig {
    std::vector<double> sigma_grid;
    std::vector<double> lambda_grid;
    std::vector<double> gamma_grid;
    int n_splits = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (sigma_grid.empty() || lambda_grid.empty() || gamma_grid.empty())
            throw std::invalid_argument("SelectionConfig: empty grid");
        if (n_splits < 2)
            throw std::invalid_argument("SelectionConfig: n_splits must be >= 2");
        for (double s : sigma_grid)
            if (!(s > 0)) throw std::invalid_argument("SelectionConfig: sigma values must be positive");
        for (double l : lambda_grid)
            if (!(l > 0)) throw std::invalid_argument("SelectionConfig: lambda values must be positive");
        for (double g : gamma_grid)
            if (!(g > 0)) throw std::invalid_argument("SelectionConfig: gamma values must be positive");
    }
};

struct CvEntry {
    double sigma;
    double lambda;
    double gamma;
    double mean_heldout_loss;
    bool converged;
};

struct SelectionResult {
    double sigma_star;
    double lambda_star;
    double gamma_star;
    std::vector<CvEntry> cv_table;
};

namespace detail {

inline double sorted_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];  // lower middle for even counts
}

inline void push_unique(std::vector<double>& grid, double value) {
    for (double g : grid)
        if (g == value) return;
    grid.push_back(value);
}

}  // namespace detail

// Grids derived from the per-node median-heuristic widths and the average
// node degree. The sigma grid spans min/median/max of the node widths
// with midpoints (deduplicated); the lambda grid is scaled by 1/d_bar.
inline SelectionConfig default_grids(const std::vector<double>& per_node_sigmas,
                                     const Graph& g) {
    if (per_node_sigmas.empty())
        throw std::invalid_argument("default_grids: empty sigma vector");
    const double s_min = *std::min_element(per_node_sigmas.begin(), per_node_sigmas.end());
    const double s_max = *std::max_element(per_node_sigmas.begin(), per_node_sigmas.end());
    const double s_med = detail::sorted_median(per_node_sigmas);
    SelectionConfig cfg;
    for (double s : {s_min, 0.5 * (s_min + s_med), s_med, 0.5 * (s_max + s_med), s_max})
        detail::push_unique(cfg.sigma_grid, s);
    cfg.gamma_grid = {1e-5, 1e-3, 0.1, 1.0};
    double d_bar = average_degree(g);
    if (d_bar == 0.0) d_bar = 1.0;
    for (double l : {1e-3, 1e-2, 0.1, 1.0, 10.0}) cfg.lambda_grid.push_back(l / d_bar);
    return cfg;
}

struct SamplePair {
    PairedNodeSamples train;
    PairedNodeSamples test;
};

// Node-wise independent R-fold partition of both sample sets; fold r's
// test set takes the r-th part from X and X' of every node.
inline std::vector<SamplePair> paired_kfold_split(const PairedNodeSamples& samples,
                                                  int n_splits,
                                                  std::uint64_t seed) {
    samples.validate();
    if (n_splits < 2)
        throw std::invalid_argument("paired_kfold_split: n_splits must be >= 2");
    const int n_nodes = samples.n_nodes();
    for (int v = 0; v < n_nodes; ++v)
        if (samples.ref[v].size() < static_cast<std::size_t>(n_splits) ||
            samples.test[v].size() < static_cast<std::size_t>(n_splits))
            throw std::invalid_argument("paired_kfold_split: node " +
                                        std::to_string(v) +
                                        " has fewer observations than folds");

    // fold_of[set][v][i] = fold index of observation i
    auto assign = [&](std::size_t count, Rng& rng) {
        std::vector<int> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = static_cast<int>(i);
        rng.shuffle(idx);
        std::vector<int> fold(count);
        const std::size_t base = count / n_splits;
        const std::size_t extra = count % n_splits;
        std::size_t pos = 0;
        for (int r = 0; r < n_splits; ++r) {
            const std::size_t size = base + (static_cast<std::size_t>(r) < extra ? 1 : 0);
            for (std::size_t k = 0; k < size; ++k) fold[idx[pos++]] = r;
        }
        return fold;
    };

    std::vector<std::vector<int>> ref_fold(n_nodes), test_fold(n_nodes);
    for (int v = 0; v < n_nodes; ++v) {
        Rng rng_ref(derive_seed(seed, 2 * static_cast<std::uint64_t>(v)));
        Rng rng_test(derive_seed(seed, 2 * static_cast<std::uint64_t>(v) + 1));
        ref_fold[v] = assign(samples.ref[v].size(), rng_ref);
        test_fold[v] = assign(samples.test[v].size(), rng_test);
    }

    std::vector<SamplePair> out(n_splits);
    for (int r = 0; r < n_splits; ++r) {
        auto& pair = out[r];
        pair.train.ref.resize(n_nodes);
        pair.train.test.resize(n_nodes);
        pair.test.ref.resize(n_nodes);
        pair.test.test.resize(n_nodes);
        for (int v = 0; v < n_nodes; ++v) {
            for (std::size_t i = 0; i < samples.ref[v].size(); ++i)
                (ref_fold[v][i] == r ? pair.test.ref[v] : pair.train.ref[v])
                    .push_back(samples.ref[v][i]);
            for (std::size_t i = 0; i < samples.test[v].size(); ++i)
                (test_fold[v][i] == r ? pair.test.test[v] : pair.train.test[v])
                    .push_back(samples.test[v][i]);
        }
    }
    return out;
}

// R-fold cross-validated grid search minimizing the mean held-out loss
// (equivalently, maximizing the mean held-out Pearson divergence).
// Dictionary centers stay fixed; only the kernel width varies with sigma.
// Grid points whose fit failed to converge on any fold are excluded from
// the argmin but kept in the table.
inline SelectionResult select_hyperparameters(const PairedNodeSamples& samples,
                                              const Dictionary& dictionary,
                                              const Graph& g, double alpha,
                                              const SelectionConfig& cfg,
                                              const SolverConfig& solver = {}) {
    cfg.validate();
    const auto splits = paired_kfold_split(samples, cfg.n_splits, cfg.seed);
    const int n_nodes = g.n_nodes();

    SelectionResult result{0, 0, 0, {}};
    bool have_best = false;
    double best_loss = 0.0;

    for (double sigma : cfg.sigma_grid) {
        const Dictionary dict_s = dictionary.with_sigma(sigma);
        std::vector<std::vector<NodeMoments>> train_moments, test_moments;
        for (const auto& split : splits) {
            train_moments.push_back(compute_moments(split.train, dict_s));
            test_moments.push_back(compute_moments(split.test, dict_s));
        }
        // Consecutive grid points share a fold's warm start; the fitted
        // parameters move continuously in (gamma, lambda), so this only
        // shortens the descent, never changes the selected minimizer
        // beyond the solver tolerance.
        std::vector<Eigen::MatrixXd> warm(cfg.n_splits);
        for (double gamma : cfg.gamma_grid)
            for (double lambda : cfg.lambda_grid) {
                const Hyperparams hp{alpha, lambda, gamma};
                double total = 0.0;
                bool converged = true;
                for (int r = 0; r < cfg.n_splits; ++r) {
                    SolverConfig fold_solver = solver;
                    fold_solver.record_trace = false;
                    if (warm[r].size() > 0) fold_solver.theta0 = warm[r];
                    const FitResult fr = fit(train_moments[r], g, hp, fold_solver);
                    warm[r] = fr.theta;
                    converged = converged && fr.converged;
                    double fold_loss = 0.0;
                    for (int v = 0; v < n_nodes; ++v)
                        fold_loss += node_loss(fr.theta.row(v),
                                               test_moments[r][v], alpha);
                    total += fold_loss / n_nodes;
                }
                const double mean_loss = total / cfg.n_splits;
                result.cv_table.push_back({sigma, lambda, gamma, mean_loss, converged});
                if (!converged) continue;
                // Tie-break: smaller gamma, then smaller lambda, then sigma
                // grid order (earlier sigma wins via strict improvement only).
                const bool better =
                    !have_best || mean_loss < best_loss ||
                    (mean_loss == best_loss &&
                     (gamma < result.gamma_star ||
                      (gamma == result.gamma_star && lambda < result.lambda_star)));
                if (better) {
                    have_best = true;
                    best_loss = mean_loss;
                    result.sigma_star = sigma;
                    result.lambda_star = lambda;
                    result.gamma_star = gamma;
                }
            }
    }
    if (!have_best)
        throw std::runtime_error(
            "select_hyperparameters: no grid point converged");
    return result;
}

}  // namespace grulsif
