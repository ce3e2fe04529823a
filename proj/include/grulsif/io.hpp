#pragma once

#include <Eigen/Core>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grulsif/estimator.hpp"
#include "grulsif/graph.hpp"
#include "grulsif/model_selection.hpp"
#include "grulsif/samples.hpp"
#include "grulsif/scenarios.hpp"
#include "grulsif/two_sample.hpp"

namespace grulsif::io {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_double(const std::string& s, const std::string& what,
                           int row) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("row " + std::to_string(row) + ": bad " +
                                 what + " value '" + s + "'");
    }
}

inline int parse_int(const std::string& s, const std::string& what, int row) {
    const double v = parse_double(s, what, row);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw std::runtime_error("row " + std::to_string(row) + ": " + what +
                                 " must be an integer, got '" + s + "'");
    return i;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    return out;
}

}  // namespace detail

// Edge-list CSV with header `u,v,weight`; the weight column is optional
// and defaults to 1.0.
inline Graph read_graph_csv(const std::string& path, int n_nodes) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": empty graph file");
    std::vector<Edge> edges;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = detail::split_csv(line);
        if (fields.size() < 2 || fields.size() > 3)
            throw std::runtime_error(path + " row " + std::to_string(row) +
                                     ": expected u,v[,weight]");
        Edge e;
        e.u = detail::parse_int(fields[0], "u", row);
        e.v = detail::parse_int(fields[1], "v", row);
        e.weight = fields.size() == 3 ? detail::parse_double(fields[2], "weight", row)
                                      : 1.0;
        edges.push_back(e);
    }
    return Graph(n_nodes, std::move(edges));
}

inline void write_graph_csv(const std::string& path, const Graph& g) {
    auto out = detail::open_output(path);
    out << "u,v,weight\n";
    for (const auto& e : g.edges())
        out << e.u << "," << e.v << "," << e.weight << "\n";
}

// Observations CSV with header `node_id,sample_set,dim_0..dim_{d-1}`,
// sample_set in {ref, test}. Row order within a node is preserved.
inline PairedNodeSamples read_observations_csv(const std::string& path,
                                               int n_nodes) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": empty observations file");
    const auto header = detail::split_csv(line);
    if (header.size() < 3 || header[0] != "node_id" || header[1] != "sample_set")
        throw std::runtime_error(path + ": header must start with node_id,sample_set,dim_0");
    const int dim = static_cast<int>(header.size()) - 2;

    PairedNodeSamples samples;
    samples.ref.resize(n_nodes);
    samples.test.resize(n_nodes);
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = detail::split_csv(line);
        if (static_cast<int>(fields.size()) != dim + 2)
            throw std::runtime_error(path + " row " + std::to_string(row) +
                                     ": expected " + std::to_string(dim) +
                                     " dimensions, got " +
                                     std::to_string(fields.size() - 2));
        const int node = detail::parse_int(fields[0], "node_id", row);
        if (node < 0 || node >= n_nodes)
            throw std::runtime_error(path + " row " + std::to_string(row) +
                                     ": unknown node_id " + fields[0]);
        Eigen::VectorXd x(dim);
        for (int d = 0; d < dim; ++d)
            x[d] = detail::parse_double(fields[2 + d], "dim_" + std::to_string(d), row);
        if (fields[1] == "ref")
            samples.ref[node].push_back(std::move(x));
        else if (fields[1] == "test")
            samples.test[node].push_back(std::move(x));
        else
            throw std::runtime_error(path + " row " + std::to_string(row) +
                                     ": sample_set must be ref or test, got '" +
                                     fields[1] + "'");
    }
    samples.validate();
    return samples;
}

inline void write_observations_csv(const std::string& path,
                                   const PairedNodeSamples& samples) {
    auto out = detail::open_output(path);
    out.precision(17);
    const int dim = samples.dim();
    out << "node_id,sample_set";
    for (int d = 0; d < dim; ++d) out << ",dim_" << d;
    out << "\n";
    for (int v = 0; v < samples.n_nodes(); ++v) {
        for (const auto& x : samples.ref[v]) {
            out << v << ",ref";
            for (int d = 0; d < dim; ++d) out << "," << x[d];
            out << "\n";
        }
        for (const auto& x : samples.test[v]) {
            out << v << ",test";
            for (int d = 0; d < dim; ++d) out << "," << x[d];
            out << "\n";
        }
    }
}

// Model serialization: one versioned flat JSON record holding the
// dictionary (centers and width), hyperparameters, and the N x L
// parameter array.
inline void save_model_json(const std::string& path, const ModelParams& model) {
    nlohmann::json j;
    j["format"] = "grulsif-model";
    j["version"] = 1;
    j["sigma"] = model.dictionary.sigma();
    j["alpha"] = model.hyperparams.alpha;
    j["lambda"] = model.hyperparams.lambda;
    j["gamma"] = model.hyperparams.gamma;
    auto& centers = j["centers"] = nlohmann::json::array();
    for (const auto& c : model.dictionary.centers()) {
        std::vector<double> row(c.data(), c.data() + c.size());
        centers.push_back(row);
    }
    auto& theta = j["theta"] = nlohmann::json::array();
    for (int v = 0; v < model.theta.rows(); ++v) {
        std::vector<double> row(model.theta.cols());
        for (int l = 0; l < model.theta.cols(); ++l) row[l] = model.theta(v, l);
        theta.push_back(row);
    }
    auto out = detail::open_output(path);
    out << j.dump(2) << "\n";
}

inline ModelParams load_model_json(const std::string& path) {
    auto in = detail::open_input(path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "grulsif-model" || j.value("version", 0) != 1)
        throw std::runtime_error(path + ": not a version-1 model file");
    std::vector<Eigen::VectorXd> centers;
    for (const auto& row : j.at("centers")) {
        Eigen::VectorXd c(row.size());
        for (std::size_t d = 0; d < row.size(); ++d) c[d] = row[d];
        centers.push_back(std::move(c));
    }
    Dictionary dict(std::move(centers), GaussianKernel(j.at("sigma")));
    const auto& theta_rows = j.at("theta");
    Eigen::MatrixXd theta(theta_rows.size(), dict.size());
    for (std::size_t v = 0; v < theta_rows.size(); ++v)
        for (int l = 0; l < dict.size(); ++l) theta(v, l) = theta_rows[v][l];
    return ModelParams{std::move(theta), std::move(dict),
                       Hyperparams{j.at("alpha"), j.at("lambda"), j.at("gamma")}};
}

// Dictionary dump: center coordinates as CSV plus a sidecar JSON with
// the kernel width.
inline void write_dictionary_csv(const std::string& path, const Dictionary& dict) {
    auto out = detail::open_output(path);
    out.precision(17);
    out << "center_index";
    for (int d = 0; d < dict.dim(); ++d) out << ",dim_" << d;
    out << "\n";
    for (int l = 0; l < dict.size(); ++l) {
        out << l;
        for (int d = 0; d < dict.dim(); ++d) out << "," << dict.centers()[l][d];
        out << "\n";
    }
    auto side = detail::open_output(path + ".meta.json");
    side << nlohmann::json{{"sigma", dict.sigma()}}.dump(2) << "\n";
}

inline nlohmann::json report_to_json(const TestReport& report,
                                     const std::string& method) {
    nlohmann::json j;
    j["method"] = method;
    j["pi_star"] = report.pi_star;
    j["n_perm"] = report.n_perm;
    j["seed"] = report.seed;
    j["direction_1"] = {{"sigma", report.sigma_d1},
                        {"alpha", report.hp_d1.alpha},
                        {"lambda", report.hp_d1.lambda},
                        {"gamma", report.hp_d1.gamma}};
    j["direction_2"] = {{"sigma", report.sigma_d2},
                        {"alpha", report.hp_d2.alpha},
                        {"lambda", report.hp_d2.lambda},
                        {"gamma", report.hp_d2.gamma}};
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (int v = 0; v < report.stat.size(); ++v)
        nodes.push_back({{"node_id", v},
                         {"statistic", report.stat[v]},
                         {"p_value", report.p_values[v]},
                         {"detected", report.p_values[v] < report.pi_star}});
    return j;
}

inline void write_report_json(const std::string& path, const TestReport& report,
                              const std::string& method) {
    auto out = detail::open_output(path);
    out << report_to_json(report, method).dump(2) << "\n";
}

inline void write_report_csv(const std::string& path, const TestReport& report,
                             const std::string& method) {
    auto out = detail::open_output(path);
    out.precision(17);
    out << "node_id,method,statistic,p_value,detected\n";
    for (int v = 0; v < report.stat.size(); ++v)
        out << v << "," << method << "," << report.stat[v] << ","
            << report.p_values[v] << ","
            << (report.p_values[v] < report.pi_star ? 1 : 0) << "\n";
}

inline void write_cv_table_csv(const std::string& path,
                               const SelectionResult& result) {
    auto out = detail::open_output(path);
    out.precision(17);
    out << "sigma,lambda,gamma,mean_heldout_loss,converged\n";
    for (const auto& e : result.cv_table)
        out << e.sigma << "," << e.lambda << "," << e.gamma << ","
            << e.mean_heldout_loss << "," << (e.converged ? 1 : 0) << "\n";
}

inline void write_aggregate_csv(const std::string& path,
                                const std::vector<AggregateRow>& rows) {
    auto out = detail::open_output(path);
    out.precision(6);
    out << "experiment,method,n,pi_star,recall_mean,recall_std,"
           "precision_mean,precision_std,f1_mean,f1_std\n";
    for (const auto& r : rows)
        out << r.experiment << "," << r.method << "," << r.n << "," << r.pi_star
            << "," << r.recall_mean << "," << r.recall_std << ","
            << r.precision_mean << "," << r.precision_std << "," << r.f1_mean
            << "," << r.f1_std << "\n";
}

}  // namespace grulsif::io
