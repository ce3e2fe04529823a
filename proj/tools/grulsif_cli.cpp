// Command-line front end: data ingestion, fitting, hyperparameter
// selection, two-sample testing, and experiment orchestration.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "grulsif/baselines.hpp"
#include "grulsif/dictionary.hpp"
#include "grulsif/estimator.hpp"
#include "grulsif/io.hpp"
#include "grulsif/model_selection.hpp"
#include "grulsif/scenarios.hpp"
#include "grulsif/two_sample.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
    std::string graph_path;
    std::string observations_path;
    std::string out_dir = ".";
    int n_nodes = 0;
    std::string method = "grulsif";
    double alpha = 0.1;
    double pi_star = 0.05;
    int n_perm = 1000;
    double tol = 1e-4;
    int max_cycles = 5000;
    std::uint64_t seed = 0;
    int n_splits = 5;
    double mu0_node = 0.1;
    double mu0_graph = 0.99;
    std::vector<double> sigma_grid, lambda_grid, gamma_grid;
    // fit/test with fixed hyperparameters (skips selection when all set)
    double fixed_sigma = 0, fixed_lambda = 0, fixed_gamma = 0;
    // experiment knobs
    std::string scenario = "I";
    int n_obs = 50;
    int repetitions = 10;
    bool full_scale = false;
};

grulsif::SolverConfig solver_config(const Options& opt) {
    grulsif::SolverConfig cfg;
    cfg.tol = opt.tol;
    cfg.max_cycles = opt.max_cycles;
    return cfg;
}

grulsif::DictionaryConfig dict_config(const Options& opt) {
    return {opt.mu0_node, opt.mu0_graph};
}

nlohmann::json base_manifest(const Options& opt, const std::string& command) {
    return {{"tool", "grulsif"},
            {"version", kVersion},
            {"command", command},
            {"seed", opt.seed},
            {"alpha", opt.alpha},
            {"tol", opt.tol},
            {"max_cycles", opt.max_cycles},
            {"mu0_node", opt.mu0_node},
            {"mu0_graph", opt.mu0_graph}};
}

void write_manifest(const Options& opt, nlohmann::json manifest) {
    std::ofstream out(std::filesystem::path(opt.out_dir) / "run_manifest.json");
    out << manifest.dump(2) << "\n";
}

grulsif::SelectionConfig selection_config(const Options& opt,
                                          const std::vector<double>& sigmas,
                                          const grulsif::Graph& g) {
    grulsif::SelectionConfig sel = grulsif::default_grids(sigmas, g);
    if (!opt.sigma_grid.empty()) sel.sigma_grid = opt.sigma_grid;
    if (!opt.lambda_grid.empty()) sel.lambda_grid = opt.lambda_grid;
    if (!opt.gamma_grid.empty()) sel.gamma_grid = opt.gamma_grid;
    sel.n_splits = opt.n_splits;
    sel.seed = grulsif::derive_seed(opt.seed, 0x5e1ec7);
    return sel;
}

int cmd_fit(const Options& opt) {
    const auto g = grulsif::io::read_graph_csv(opt.graph_path, opt.n_nodes);
    const auto samples =
        grulsif::io::read_observations_csv(opt.observations_path, opt.n_nodes);
    const auto built = grulsif::build_global_dictionary(samples, dict_config(opt));

    double sigma = opt.fixed_sigma, lambda = opt.fixed_lambda, gamma = opt.fixed_gamma;
    nlohmann::json selection_info;
    if (!(sigma > 0 && lambda > 0 && gamma > 0)) {
        const auto sel = selection_config(opt, built.per_node_sigmas, g);
        const auto chosen = grulsif::select_hyperparameters(
            samples, built.dictionary, g, opt.alpha, sel, solver_config(opt));
        sigma = chosen.sigma_star;
        lambda = chosen.lambda_star;
        gamma = chosen.gamma_star;
        grulsif::io::write_cv_table_csv(
            (std::filesystem::path(opt.out_dir) / "cv_table.csv").string(), chosen);
        selection_info = {{"n_splits", sel.n_splits}, {"seed", sel.seed}};
    }

    const auto dict = built.dictionary.with_sigma(sigma);
    const grulsif::Hyperparams hp{opt.alpha, lambda, gamma};
    const auto result = grulsif::fit(samples, dict, g, hp, solver_config(opt));

    const grulsif::ModelParams model{result.theta, dict, hp};
    const auto out = std::filesystem::path(opt.out_dir);
    grulsif::io::save_model_json((out / "model.json").string(), model);
    grulsif::io::write_dictionary_csv((out / "dictionary.csv").string(), dict);

    auto manifest = base_manifest(opt, "fit");
    manifest["graph"] = opt.graph_path;
    manifest["observations"] = opt.observations_path;
    manifest["sigma"] = sigma;
    manifest["lambda"] = lambda;
    manifest["gamma"] = gamma;
    manifest["cycles"] = result.cycles;
    manifest["converged"] = result.converged;
    manifest["selection"] = selection_info;
    write_manifest(opt, manifest);
    if (!result.converged)
        std::cerr << "warning: solver hit max_cycles without converging\n";
    return 0;
}

int cmd_select(const Options& opt) {
    const auto g = grulsif::io::read_graph_csv(opt.graph_path, opt.n_nodes);
    const auto samples =
        grulsif::io::read_observations_csv(opt.observations_path, opt.n_nodes);
    const auto built = grulsif::build_global_dictionary(samples, dict_config(opt));
    const auto sel = selection_config(opt, built.per_node_sigmas, g);
    const auto chosen = grulsif::select_hyperparameters(
        samples, built.dictionary, g, opt.alpha, sel, solver_config(opt));

    const auto out = std::filesystem::path(opt.out_dir);
    grulsif::io::write_cv_table_csv((out / "cv_table.csv").string(), chosen);
    auto manifest = base_manifest(opt, "select");
    manifest["graph"] = opt.graph_path;
    manifest["observations"] = opt.observations_path;
    manifest["sigma_star"] = chosen.sigma_star;
    manifest["lambda_star"] = chosen.lambda_star;
    manifest["gamma_star"] = chosen.gamma_star;
    manifest["n_splits"] = sel.n_splits;
    write_manifest(opt, manifest);
    std::cout << "sigma=" << chosen.sigma_star << " lambda=" << chosen.lambda_star
              << " gamma=" << chosen.gamma_star << "\n";
    return 0;
}

int cmd_test(const Options& opt) {
    const auto g = grulsif::io::read_graph_csv(opt.graph_path, opt.n_nodes);
    const auto samples =
        grulsif::io::read_observations_csv(opt.observations_path, opt.n_nodes);
    if (!samples.equal_counts())
        throw std::invalid_argument(
            "test: all nodes must have equal ref and test observation counts");

    grulsif::ExperimentConfig cfg;
    cfg.alpha = opt.alpha;
    cfg.n_perm = opt.n_perm;
    cfg.pi_levels = {opt.pi_star};
    cfg.solver = solver_config(opt);
    cfg.dict_cfg = dict_config(opt);
    cfg.n_splits = opt.n_splits;
    const auto method = grulsif::parse_method(opt.method);
    const auto report = grulsif::run_method(method, samples, g, cfg,
                                            grulsif::derive_seed(opt.seed, 0x7e57));

    const auto out = std::filesystem::path(opt.out_dir);
    grulsif::io::write_report_json((out / "report.json").string(), report, opt.method);
    grulsif::io::write_report_csv((out / "report.csv").string(), report, opt.method);
    auto manifest = base_manifest(opt, "test");
    manifest["graph"] = opt.graph_path;
    manifest["observations"] = opt.observations_path;
    manifest["method"] = opt.method;
    manifest["pi_star"] = opt.pi_star;
    manifest["n_perm"] = opt.n_perm;
    write_manifest(opt, manifest);
    std::cout << "detected " << report.detected.size() << " of " << g.n_nodes()
              << " nodes\n";
    return 0;
}

int cmd_experiment(const Options& opt) {
    grulsif::ExperimentConfig cfg;
    cfg.scenario = opt.scenario == "II" ? '2' : 'I';
    cfg.n = opt.n_obs;
    cfg.repetitions = opt.full_scale ? 50 : opt.repetitions;
    cfg.n_perm = opt.full_scale ? 1000 : opt.n_perm;
    cfg.alpha = opt.alpha;
    cfg.seed = opt.seed;
    cfg.solver = solver_config(opt);
    cfg.dict_cfg = dict_config(opt);
    cfg.n_splits = opt.n_splits;
    const auto method = grulsif::parse_method(opt.method);
    const auto rows = grulsif::run_experiment(cfg, method);

    const auto out = std::filesystem::path(opt.out_dir);
    grulsif::io::write_aggregate_csv((out / "aggregate.csv").string(), rows);
    auto manifest = base_manifest(opt, "experiment");
    manifest["scenario"] = opt.scenario;
    manifest["n"] = cfg.n;
    manifest["repetitions"] = cfg.repetitions;
    manifest["n_perm"] = cfg.n_perm;
    manifest["method"] = opt.method;
    write_manifest(opt, manifest);
    for (const auto& r : rows)
        std::cout << r.experiment << " " << r.method << " pi*=" << r.pi_star
                  << " F1=" << r.f1_mean << " (" << r.f1_std << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collaborative graph-regularized likelihood-ratio estimation "
                 "and two-sample testing"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "Read options from a config file");
    app.require_subcommand(1);

    Options opt;
    app.add_option("--graph", opt.graph_path, "Edge-list CSV (u,v[,weight])");
    app.add_option("--nodes", opt.n_nodes, "Number of graph nodes");
    app.add_option("--observations", opt.observations_path,
                   "Observations CSV (node_id,sample_set,dim_*)");
    app.add_option("--out", opt.out_dir, "Output directory");
    app.add_option("--method", opt.method, "grulsif | pool | rulsif | ulsif");
    app.add_option("--alpha", opt.alpha, "Relative ratio parameter in [0,1)");
    app.add_option("--pi-star", opt.pi_star, "Significance level");
    app.add_option("--n-perm", opt.n_perm, "Number of permutations");
    app.add_option("--tol", opt.tol, "Solver stopping tolerance");
    app.add_option("--max-cycles", opt.max_cycles, "Solver cycle cap");
    app.add_option("--seed", opt.seed, "Root seed for all randomness");
    app.add_option("--n-splits", opt.n_splits, "Cross-validation folds");
    app.add_option("--mu0-node", opt.mu0_node, "Node-level coherence threshold");
    app.add_option("--mu0-graph", opt.mu0_graph, "Graph-level coherence threshold");
    app.add_option("--sigma-grid", opt.sigma_grid, "Override sigma grid");
    app.add_option("--lambda-grid", opt.lambda_grid, "Override lambda grid");
    app.add_option("--gamma-grid", opt.gamma_grid, "Override gamma grid");
    app.add_option("--sigma", opt.fixed_sigma, "Fixed kernel width (skips selection)");
    app.add_option("--lambda", opt.fixed_lambda, "Fixed graph penalty");
    app.add_option("--gamma", opt.fixed_gamma, "Fixed ridge penalty");

    auto* fit = app.add_subcommand("fit", "Fit the estimator and save the model");
    auto* select = app.add_subcommand("select", "Cross-validated hyperparameter search");
    auto* test = app.add_subcommand("test", "Collaborative permutation two-sample test");
    auto* experiment = app.add_subcommand("experiment", "Synthetic scenario benchmark");
    experiment->add_option("--scenario", opt.scenario, "I or II");
    experiment->add_option("--n", opt.n_obs, "Observations per node per sample");
    experiment->add_option("--reps", opt.repetitions, "Repetitions");
    experiment->add_flag("--full", opt.full_scale,
                         "Paper-scale run (50 repetitions, 1000 permutations)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::filesystem::create_directories(opt.out_dir);
        if (fit->parsed()) return cmd_fit(opt);
        if (select->parsed()) return cmd_select(opt);
        if (test->parsed()) return cmd_test(opt);
        if (experiment->parsed()) return cmd_experiment(opt);
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << nlohmann::json{{"error", "validation"}, {"message", e.what()}}
                  << "\n";
        return 2;
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        const bool numerical = msg.find("factorization") != std::string::npos ||
                               msg.find("converge") != std::string::npos;
        std::cerr << nlohmann::json{{"error", numerical ? "numerical" : "validation"},
                                    {"message", msg}}
                  << "\n";
        return numerical ? 3 : 2;
    }
}
