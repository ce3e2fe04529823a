#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "grulsif/estimator.hpp"
#include "grulsif/kernels.hpp"
#include "grulsif/model_selection.hpp"
#include "grulsif/rng.hpp"
#include "grulsif/two_sample.hpp"

namespace grulsif {

enum class BaselineKind { pool, rulsif, ulsif };

inline const char* to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::pool: return "pool";
        case BaselineKind::rulsif: return "rulsif";
        case BaselineKind::ulsif: return "ulsif";
    }
    return "?";
}

inline Graph edgeless_graph(int n_nodes) { return Graph(n_nodes, {}); }

// Pool: the GRULSIF solver on the edgeless graph with lambda fixed to 1.
// Shared dictionary, per-node solutions decouple.
inline FitResult pool_fit(const PairedNodeSamples& samples,
                          const Dictionary& dict, double gamma, double alpha,
                          const SolverConfig& solver = {}) {
    const Graph g = edgeless_graph(samples.n_nodes());
    return fit(samples, dict, g, Hyperparams{alpha, 1.0, gamma}, solver);
}

// Cap on per-node center counts for RULSIF/ULSIF, following the reference
// implementations (seeded subsample beyond it).
inline constexpr std::size_t kRulsifCenterCap = 100;

inline std::vector<Eigen::VectorXd> rulsif_centers(
    const std::vector<Eigen::VectorXd>& test_obs, std::uint64_t seed = 0) {
    if (test_obs.size() <= kRulsifCenterCap) return test_obs;
    std::vector<Eigen::VectorXd> centers = test_obs;
    Rng rng(derive_seed(seed, 0xce7));
    rng.shuffle(centers);
    centers.resize(kRulsifCenterCap);
    return centers;
}

struct RulsifModel {
    Dictionary dictionary;
    Eigen::VectorXd theta;

    double evaluate(const Eigen::VectorXd& x) const {
        return theta.dot(dictionary.feature_map(x));
    }
};

// Single-node closed form with plain ridge:
// theta = ((1-a)H + aH' + gamma I)^{-1} h'. ULSIF is the alpha = 0 case.
inline RulsifModel rulsif_node_fit(const std::vector<Eigen::VectorXd>& ref_obs,
                                   const std::vector<Eigen::VectorXd>& test_obs,
                                   double alpha, double sigma, double gamma_reg,
                                   std::uint64_t center_seed = 0) {
    if (!(gamma_reg > 0.0))
        throw std::invalid_argument("rulsif_node_fit: gamma_reg must be positive");
    Dictionary dict(rulsif_centers(test_obs, center_seed), GaussianKernel(sigma));
    const NodeMoments m = node_moments(ref_obs, test_obs, dict);
    Eigen::MatrixXd b = (1.0 - alpha) * m.H + alpha * m.H_test;
    b.diagonal().array() += gamma_reg;
    return {dict, Eigen::LLT<Eigen::MatrixXd>(b).solve(m.h_test)};
}

// Leave-one-out score for the single-node estimator: pair i removes x_i
// and x'_i, and the held-out loss is the single-pair node loss at the
// refitted parameters. The default path downdates a fixed factorization
// by two rank-one terms (Sherman-Morrison); exact_refit solves each
// deflated system from scratch.
inline double rulsif_loo_score(const std::vector<Eigen::VectorXd>& ref_obs,
                               const std::vector<Eigen::VectorXd>& test_obs,
                               double alpha, double sigma, double gamma_reg,
                               bool exact_refit = false,
                               std::uint64_t center_seed = 0) {
    const std::size_t n = ref_obs.size();
    const std::size_t np = test_obs.size();
    if (n < 2 || np < 2)
        throw std::invalid_argument("rulsif_loo_score: need at least 2 observations per set");
    Dictionary dict(rulsif_centers(test_obs, center_seed), GaussianKernel(sigma));
    const int L = dict.size();
    const std::size_t pairs = std::min(n, np);

    std::vector<Eigen::VectorXd> phi_ref, phi_test;
    phi_ref.reserve(n);
    phi_test.reserve(np);
    for (const auto& x : ref_obs) phi_ref.push_back(dict.feature_map(x));
    for (const auto& x : test_obs) phi_test.push_back(dict.feature_map(x));

    Eigen::MatrixXd h_sum = Eigen::MatrixXd::Zero(L, L);
    Eigen::MatrixXd hp_sum = Eigen::MatrixXd::Zero(L, L);
    Eigen::VectorXd hvec_sum = Eigen::VectorXd::Zero(L);
    for (const auto& p : phi_ref) h_sum.noalias() += p * p.transpose();
    for (const auto& p : phi_test) {
        hp_sum.noalias() += p * p.transpose();
        hvec_sum += p;
    }

    const double ca = (1.0 - alpha) / static_cast<double>(n - 1);
    const double cb = alpha / static_cast<double>(np - 1);
    double total = 0.0;

    if (exact_refit) {
        for (std::size_t i = 0; i < pairs; ++i) {
            Eigen::MatrixXd b =
                (1.0 - alpha) / (n - 1.0) *
                    (h_sum - phi_ref[i] * phi_ref[i].transpose()) +
                alpha / (np - 1.0) *
                    (hp_sum - phi_test[i] * phi_test[i].transpose());
            b.diagonal().array() += gamma_reg;
            const Eigen::VectorXd h_loo = (hvec_sum - phi_test[i]) / (np - 1.0);
            const Eigen::VectorXd theta = Eigen::LLT<Eigen::MatrixXd>(b).solve(h_loo);
            const double f_ref = theta.dot(phi_ref[i]);
            const double f_test = theta.dot(phi_test[i]);
            total += (1.0 - alpha) * 0.5 * f_ref * f_ref +
                     alpha * 0.5 * f_test * f_test - f_test;
        }
        return total / static_cast<double>(pairs);
    }

    // Base matrix already rescaled for one removal from each set; each
    // pair then subtracts its own two rank-one terms.
    Eigen::MatrixXd base = ca * h_sum + cb * hp_sum;
    base.diagonal().array() += gamma_reg;
    const Eigen::LLT<Eigen::MatrixXd> llt(base);

    for (std::size_t i = 0; i < pairs; ++i) {
        const Eigen::VectorXd& u = phi_ref[i];
        const Eigen::VectorXd& w = phi_test[i];
        const Eigen::VectorXd h_loo = (hvec_sum - w) / (np - 1.0);

        // (base - ca u u^T)^{-1} applied via Sherman-Morrison.
        const Eigen::VectorXd bu = llt.solve(u);
        const double du = 1.0 - ca * u.dot(bu);
        auto solve1 = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
            const Eigen::VectorXd by = llt.solve(y);
            return by + (ca * u.dot(by) / du) * bu;
        };
        // Second downdate by cb w w^T (skipped when alpha = 0).
        Eigen::VectorXd theta;
        if (cb == 0.0) {
            theta = solve1(h_loo);
        } else {
            const Eigen::VectorXd b1w = solve1(w);
            const double dw = 1.0 - cb * w.dot(b1w);
            const Eigen::VectorXd b1h = solve1(h_loo);
            theta = b1h + (cb * w.dot(b1h) / dw) * b1w;
        }
        const double f_ref = theta.dot(u);
        const double f_test = theta.dot(w);
        total += (1.0 - alpha) * 0.5 * f_ref * f_ref +
                 alpha * 0.5 * f_test * f_test - f_test;
    }
    return total / static_cast<double>(pairs);
}

struct BaselineGrids {
    std::vector<double> sigma_factors = {0.6, 0.8, 1.0, 1.2, 1.4};
    std::vector<double> gamma_grid = {1e-5, 1e-3, 0.1, 10.0};
};

struct BaselineChoice {
    double sigma;
    double gamma;
    double score;
};

// Per-node LOO grid search; sigma candidates scale the median heuristic
// of X'_v. Ties broken toward smaller gamma, then grid order of sigma.
inline BaselineChoice baseline_hyperparameters(
    const std::vector<Eigen::VectorXd>& ref_obs,
    const std::vector<Eigen::VectorXd>& test_obs, double alpha,
    const BaselineGrids& grids = {}, std::uint64_t center_seed = 0) {
    if (test_obs.size() < 2)
        throw std::invalid_argument("baseline_hyperparameters: need >= 2 test observations");
    const double sigma_med = median_heuristic(test_obs);
    bool have = false;
    BaselineChoice best{0, 0, 0};
    for (double factor : grids.sigma_factors) {
        const double sigma = factor * sigma_med;
        for (double gamma : grids.gamma_grid) {
            const double score = rulsif_loo_score(ref_obs, test_obs, alpha,
                                                  sigma, gamma, false, center_seed);
            if (!have || score < best.score ||
                (score == best.score && gamma < best.gamma)) {
                have = true;
                best = {sigma, gamma, score};
            }
        }
    }
    return best;
}

// Pool direction preparation: Alg. 4 on the edgeless graph with the
// lambda grid pinned to {1}.
inline DirectionSetup prepare_pool_direction(const PairedNodeSamples& samples,
                                             double alpha, bool swap_scan_order,
                                             const DictionaryConfig& dict_cfg,
                                             std::uint64_t selection_seed,
                                             const SolverConfig& solver = {},
                                             int n_splits = 5) {
    const Graph g = edgeless_graph(samples.n_nodes());
    const auto built = build_global_dictionary(samples, dict_cfg, swap_scan_order);
    SelectionConfig sel = default_grids(built.per_node_sigmas, g);
    sel.lambda_grid = {1.0};
    sel.n_splits = n_splits;
    sel.seed = selection_seed;
    const PairedNodeSamples oriented =
        swap_scan_order ? samples.swapped() : samples;
    const SelectionResult chosen =
        select_hyperparameters(oriented, built.dictionary, g, alpha, sel, solver);
    return DirectionSetup{built.dictionary.with_sigma(chosen.sigma_star),
                          Hyperparams{alpha, 1.0, chosen.gamma_star}, solver};
}

// Node-independent baseline test. Every node runs the shared permutation
// machinery as an N=1 sub-problem with per-node dictionaries and
// hyperparameters; the permutation stream depends only on (seed, n, n'),
// so all nodes and all methods see identical resampling.
inline TestReport baseline_permutation_test(const PairedNodeSamples& samples,
                                            BaselineKind kind,
                                            const PermutationConfig& cfg,
                                            const SolverConfig& solver = {},
                                            std::uint64_t center_seed = 0) {
    cfg.validate();
    samples.validate();
    if (kind == BaselineKind::pool)
        throw std::invalid_argument(
            "baseline_permutation_test: prepare pool directions and call permutation_test");
    const double alpha = kind == BaselineKind::ulsif ? 0.0 : 0.1;
    const int n_nodes = samples.n_nodes();

    TestReport report;
    report.pi_star = cfg.pi_star;
    report.seed = cfg.seed;
    report.n_perm = cfg.n_perm;
    report.stat.resize(n_nodes);
    report.p_values.resize(n_nodes);
    report.perm_stats.resize(cfg.n_perm, n_nodes);

    const Graph single = edgeless_graph(1);
    for (int v = 0; v < n_nodes; ++v) {
        PairedNodeSamples node{{samples.ref[v]}, {samples.test[v]}};
        const BaselineChoice c1 =
            baseline_hyperparameters(node.ref[0], node.test[0], alpha, {}, center_seed);
        const BaselineChoice c2 =
            baseline_hyperparameters(node.test[0], node.ref[0], alpha, {}, center_seed);
        const DirectionSetup d1{
            Dictionary(rulsif_centers(node.test[0], center_seed), GaussianKernel(c1.sigma)),
            Hyperparams{alpha, 1.0, c1.gamma}, solver};
        const DirectionSetup d2{
            Dictionary(rulsif_centers(node.ref[0], center_seed), GaussianKernel(c2.sigma)),
            Hyperparams{alpha, 1.0, c2.gamma}, solver};
        const TestReport node_report =
            permutation_test(node, single, cfg, d1, d2);
        report.stat[v] = node_report.stat[0];
        report.p_values[v] = node_report.p_values[0];
        report.perm_stats.col(v) = node_report.perm_stats.col(0);
        if (report.p_values[v] < cfg.pi_star) report.detected.push_back(v);
    }
    return report;
}

}  // namespace grulsif
