#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "grulsif/baselines.hpp"
#include "grulsif/graph.hpp"
#include "grulsif/rng.hpp"
#include "grulsif/samples.hpp"
#include "grulsif/two_sample.hpp"

namespace grulsif {

struct ScenarioData {
    PairedNodeSamples samples;
    std::set<int> true_set;  // nodes where p_v != p'_v
};

namespace detail {

// Unit-variance bivariate normal with cross-covariance rho, sampled via
// the Cholesky factor of [[1, rho], [rho, 1]].
inline Eigen::VectorXd bivariate_normal(Rng& rng, double mean_x, double mean_y,
                                        double rho) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    Eigen::VectorXd x(2);
    x[0] = mean_x + z1;
    x[1] = mean_y + rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
    return x;
}

}  // namespace detail

// Scenario I (1-D): X_v ~ Normal(0,1) everywhere. X'_v ~ Uniform(-1,1)
// on cluster 0, Normal(1,1) on cluster 1, Normal(0,1) elsewhere.
// Note: Uniform(-1,1) matches Normal(0,1) in mean only (variance 1/3).
// under_null keeps every node at the base law, for calibration runs.
// RNG streams split per (node, sample set) from the seed.
inline ScenarioData generate_scenario_I(const Graph& g, int n,
                                        std::uint64_t seed,
                                        bool under_null = false) {
    if (!g.has_clusters())
        throw std::invalid_argument("generate_scenario_I: graph has no cluster labels");
    if (g.n_clusters() < 2)
        throw std::invalid_argument("generate_scenario_I: needs at least 2 clusters");
    if (n < 1) throw std::invalid_argument("generate_scenario_I: n must be >= 1");

    ScenarioData out;
    out.samples.ref.resize(g.n_nodes());
    out.samples.test.resize(g.n_nodes());
    for (int v = 0; v < g.n_nodes(); ++v) {
        const int cluster = g.cluster_of()[v];
        Rng rng_ref(derive_seed(seed, 2 * static_cast<std::uint64_t>(v)));
        Rng rng_test(derive_seed(seed, 2 * static_cast<std::uint64_t>(v) + 1));
        auto& ref = out.samples.ref[v];
        auto& test = out.samples.test[v];
        for (int i = 0; i < n; ++i)
            ref.push_back(Eigen::VectorXd::Constant(1, rng_ref.normal()));
        const bool perturbed = !under_null && (cluster == 0 || cluster == 1);
        for (int i = 0; i < n; ++i) {
            double x;
            if (perturbed && cluster == 0)
                x = rng_test.uniform(-1.0, 1.0);
            else if (perturbed && cluster == 1)
                x = rng_test.normal(1.0, 1.0);
            else
                x = rng_test.normal();
            test.push_back(Eigen::VectorXd::Constant(1, x));
        }
        if (perturbed) out.true_set.insert(v);
    }
    return out;
}

// Scenario II (2-D, 4 clusters): base cross-covariances per cluster are
// (-4/5, -4/5, +4/5, 0); two clusters are drawn uniformly at random
// without replacement and only those receive their X' perturbation
// (cluster 0: rho -> +4/5, 1: rho -> 0, 2: rho -> 0, 3: mean -> (1,1)).
inline ScenarioData generate_scenario_II(const Graph& g, int n,
                                         std::uint64_t seed) {
    if (!g.has_clusters() || g.n_clusters() != 4)
        throw std::invalid_argument("generate_scenario_II: needs exactly 4 clusters");
    if (n < 1) throw std::invalid_argument("generate_scenario_II: n must be >= 1");

    constexpr double base_rho[4] = {-0.8, -0.8, 0.8, 0.0};
    constexpr double pert_rho[4] = {0.8, 0.0, 0.0, 0.0};

    Rng cluster_rng(derive_seed(seed, 0xc1u));
    const int first = static_cast<int>(cluster_rng.below(4));
    int second = static_cast<int>(cluster_rng.below(3));
    if (second >= first) ++second;
    const std::set<int> selected{first, second};

    ScenarioData out;
    out.samples.ref.resize(g.n_nodes());
    out.samples.test.resize(g.n_nodes());
    for (int v = 0; v < g.n_nodes(); ++v) {
        const int c = g.cluster_of()[v];
        const bool perturbed = selected.count(c) > 0;
        Rng rng_ref(derive_seed(seed, 2 * static_cast<std::uint64_t>(v)));
        Rng rng_test(derive_seed(seed, 2 * static_cast<std::uint64_t>(v) + 1));
        for (int i = 0; i < n; ++i)
            out.samples.ref[v].push_back(
                detail::bivariate_normal(rng_ref, 0.0, 0.0, base_rho[c]));
        const double rho = perturbed ? pert_rho[c] : base_rho[c];
        const double mean = (perturbed && c == 3) ? 1.0 : 0.0;
        for (int i = 0; i < n; ++i)
            out.samples.test[v].push_back(
                detail::bivariate_normal(rng_test, mean, mean, rho));
        if (perturbed) out.true_set.insert(v);
    }
    return out;
}

struct DetectionMetrics {
    double recall;
    double precision;
    double f1;
};

inline DetectionMetrics detection_metrics(const std::set<int>& true_set,
                                          const std::set<int>& predicted_set) {
    std::size_t hits = 0;
    for (int v : predicted_set)
        if (true_set.count(v)) ++hits;
    DetectionMetrics m{};
    if (true_set.empty() && predicted_set.empty()) return {1.0, 1.0, 1.0};
    m.recall = true_set.empty()
                   ? 1.0
                   : static_cast<double>(hits) / true_set.size();
    m.precision = predicted_set.empty()
                      ? 0.0
                      : static_cast<double>(hits) / predicted_set.size();
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

struct ExperimentConfig {
    char scenario = 'I';  // 'I' or '2' for Scenario II
    int n = 50;
    int repetitions = 10;
    int n_perm = 1000;
    double alpha = 0.1;
    std::vector<double> pi_levels = {0.01, 0.05};
    std::uint64_t seed = 0;
    std::vector<int> cluster_sizes = {20, 20, 20, 20};
    double p_in = 0.5;
    double p_out = 0.01;
    SolverConfig solver{};
    DictionaryConfig dict_cfg{};
    int n_splits = 5;
};

struct AggregateRow {
    std::string experiment;
    std::string method;
    int n;
    double pi_star;
    double recall_mean, recall_std;
    double precision_mean, precision_std;
    double f1_mean, f1_std;
};

struct Method {
    bool is_baseline = false;       // rulsif/ulsif path
    bool pool = false;              // edgeless-graph GRULSIF
    BaselineKind baseline = BaselineKind::rulsif;
    std::string name = "grulsif";
};

inline Method parse_method(const std::string& name) {
    if (name == "grulsif") return {false, false, BaselineKind::rulsif, name};
    if (name == "pool") return {false, true, BaselineKind::rulsif, name};
    if (name == "rulsif") return {true, false, BaselineKind::rulsif, name};
    if (name == "ulsif") return {true, false, BaselineKind::ulsif, name};
    throw std::invalid_argument("unknown method: " + name);
}

// One full test run of the configured method on given data; the returned
// report carries p-values for thresholding at any level.
inline TestReport run_method(const Method& method, const PairedNodeSamples& samples,
                             const Graph& g, const ExperimentConfig& cfg,
                             std::uint64_t rep_seed) {
    PermutationConfig pc;
    pc.n_perm = cfg.n_perm;
    pc.pi_star = cfg.pi_levels.empty() ? 0.05 : cfg.pi_levels.back();
    pc.seed = derive_seed(rep_seed, 0x9e);
    if (method.is_baseline) {
        PermutationConfig node_pc = pc;
        return baseline_permutation_test(samples, method.baseline, node_pc,
                                         cfg.solver);
    }
    const std::uint64_t sel_seed = derive_seed(rep_seed, 0x5e);
    if (method.pool) {
        const Graph off = edgeless_graph(samples.n_nodes());
        const DirectionSetup d1 = prepare_pool_direction(
            samples, cfg.alpha, false, cfg.dict_cfg, sel_seed, cfg.solver, cfg.n_splits);
        const DirectionSetup d2 = prepare_pool_direction(
            samples, cfg.alpha, true, cfg.dict_cfg, sel_seed + 1, cfg.solver, cfg.n_splits);
        return permutation_test(samples, off, pc, d1, d2);
    }
    const DirectionSetup d1 = prepare_direction(
        samples, g, cfg.alpha, false, cfg.dict_cfg, sel_seed, cfg.solver, cfg.n_splits);
    const DirectionSetup d2 = prepare_direction(
        samples, g, cfg.alpha, true, cfg.dict_cfg, sel_seed + 1, cfg.solver, cfg.n_splits);
    return permutation_test(samples, g, pc, d1, d2);
}

// Repeated generate -> select -> test -> score pipeline; one aggregate
// row per significance level, as in the reported experiment tables.
inline std::vector<AggregateRow> run_experiment(const ExperimentConfig& cfg,
                                                const Method& method) {
    std::vector<std::vector<DetectionMetrics>> metrics(cfg.pi_levels.size());
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
        const Graph g = sbm_generate(cfg.cluster_sizes, cfg.p_in, cfg.p_out,
                                     derive_seed(rep_seed, 0x91));
        const ScenarioData data =
            cfg.scenario == 'I'
                ? generate_scenario_I(g, cfg.n, derive_seed(rep_seed, 0xda))
                : generate_scenario_II(g, cfg.n, derive_seed(rep_seed, 0xda));
        const TestReport report = run_method(method, data.samples, g, cfg, rep_seed);
        for (std::size_t k = 0; k < cfg.pi_levels.size(); ++k) {
            std::set<int> detected;
            for (int v = 0; v < report.p_values.size(); ++v)
                if (report.p_values[v] < cfg.pi_levels[k]) detected.insert(v);
            metrics[k].push_back(detection_metrics(data.true_set, detected));
        }
    }

    auto mean_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        double var = 0.0;
        if (xs.size() > 1) {
            for (double x : xs) var += (x - mean) * (x - mean);
            var /= (xs.size() - 1);
        }
        return std::pair{mean, std::sqrt(var)};
    };

    std::vector<AggregateRow> rows;
    for (std::size_t k = 0; k < cfg.pi_levels.size(); ++k) {
        std::vector<double> r, p, f;
        for (const auto& m : metrics[k]) {
            r.push_back(m.recall);
            p.push_back(m.precision);
            f.push_back(m.f1);
        }
        const auto [rm, rs] = mean_std(r);
        const auto [pm, ps] = mean_std(p);
        const auto [fm, fs] = mean_std(f);
        rows.push_back({std::string("scenario_") + cfg.scenario, method.name,
                        cfg.n, cfg.pi_levels[k], rm, rs, pm, ps, fm, fs});
    }
    return rows;
}

}  // namespace grulsif
