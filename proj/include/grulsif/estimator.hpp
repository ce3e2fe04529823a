#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "grulsif/dictionary.hpp"
#include "grulsif/graph.hpp"
#include "grulsif/kernels.hpp"
#include "grulsif/samples.hpp"

namespace grulsif {

struct Hyperparams {
    double alpha;   // relative likelihood-ratio parameter, in [0,1)
    double lambda;  // graph penalty weight
    double gamma;   // ridge weight (scaled by lambda in the objective)

    void validate() const {
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw std::invalid_argument("Hyperparams: alpha must be in [0,1)");
        if (!(lambda > 0.0))
            throw std::invalid_argument("Hyperparams: lambda must be positive");
        if (!(gamma > 0.0))
            throw std::invalid_argument("Hyperparams: gamma must be positive");
    }
};

// Empirical second moments of the feature map over X_v and X'_v, and the
// first moment over X'_v.
struct NodeMoments {
    Eigen::MatrixXd H;        // mean of phi phi^T over X_v
    Eigen::MatrixXd H_test;   // mean of phi phi^T over X'_v
    Eigen::VectorXd h_test;   // mean of phi over X'_v
};

inline NodeMoments node_moments(const std::vector<Eigen::VectorXd>& ref_obs,
                                const std::vector<Eigen::VectorXd>& test_obs,
                                const Dictionary& dict) {
    const int L = dict.size();
    NodeMoments m{Eigen::MatrixXd::Zero(L, L), Eigen::MatrixXd::Zero(L, L),
                  Eigen::VectorXd::Zero(L)};
    for (const auto& x : ref_obs) {
        const Eigen::VectorXd phi = dict.feature_map(x);
        m.H.noalias() += phi * phi.transpose();
    }
    m.H /= static_cast<double>(ref_obs.size());
    for (const auto& x : test_obs) {
        const Eigen::VectorXd phi = dict.feature_map(x);
        m.H_test.noalias() += phi * phi.transpose();
        m.h_test += phi;
    }
    m.H_test /= static_cast<double>(test_obs.size());
    m.h_test /= static_cast<double>(test_obs.size());
    return m;
}

inline std::vector<NodeMoments> compute_moments(const PairedNodeSamples& samples,
                                                const Dictionary& dict) {
    samples.validate();
    if (samples.dim() != dict.dim())
        throw std::invalid_argument("compute_moments: dictionary/sample dimension mismatch");
    std::vector<NodeMoments> out;
    out.reserve(samples.n_nodes());
    for (int v = 0; v < samples.n_nodes(); ++v)
        out.push_back(node_moments(samples.ref[v], samples.test[v], dict));
    return out;
}

// l_v(theta) = (1-a) theta'H theta / 2 + a theta'H' theta / 2 - h'.theta
inline double node_loss(const Eigen::VectorXd& theta_v, const NodeMoments& m,
                        double alpha) {
    return (1.0 - alpha) * 0.5 * theta_v.dot(m.H * theta_v) +
           alpha * 0.5 * theta_v.dot(m.H_test * theta_v) -
           m.h_test.dot(theta_v);
}

// Estimated Pearson divergence at node v given the fitted block and the
// moments of the evaluation samples (which may be held-out data).
inline double pe_divergence(const Eigen::VectorXd& theta_v,
                            const NodeMoments& m, double alpha) {
    return -node_loss(theta_v, m, alpha) - 0.5;
}

// Fitted model: one length-L parameter block per node (row v of theta),
// plus the dictionary and hyperparameters that produced it.
struct ModelParams {
    Eigen::MatrixXd theta;  // N x L
    Dictionary dictionary;
    Hyperparams hyperparams;

    double evaluate(int v, const Eigen::VectorXd& x) const {
        if (v < 0 || v >= theta.rows())
            throw std::invalid_argument("evaluate: node index out of range");
        return theta.row(v).dot(dictionary.feature_map(x));
    }
};

// Full penalized objective, evaluated through neighbor sums; the
// Kronecker-product matrix is never materialized.
inline double objective(const Eigen::MatrixXd& theta,
                        const std::vector<NodeMoments>& moments,
                        const Graph& g, const Hyperparams& hp) {
    const int n = g.n_nodes();
    double loss = 0.0;
    for (int v = 0; v < n; ++v)
        loss += node_loss(theta.row(v), moments[v], hp.alpha);
    double graph_term = 0.0;
    for (const auto& e : g.edges())
        graph_term += e.weight * (theta.row(e.u) - theta.row(e.v)).squaredNorm();
    return loss / n +
           0.5 * hp.lambda * (graph_term + hp.gamma * theta.squaredNorm());
}

// Analytic gradient block at node v (used by the update and checkable
// against finite differences of objective()).
inline Eigen::VectorXd gradient_block(const Eigen::MatrixXd& theta,
                                      const std::vector<NodeMoments>& moments,
                                      const Graph& g, const Hyperparams& hp,
                                      int v) {
    const int n = g.n_nodes();
    const auto& m = moments[v];
    const Eigen::VectorXd tv = theta.row(v);
    Eigen::VectorXd grad =
        ((1.0 - hp.alpha) * (m.H * tv) + hp.alpha * (m.H_test * tv) - m.h_test) / n;
    Eigen::VectorXd nb = Eigen::VectorXd::Zero(theta.cols());
    for (const auto& [u, w] : g.neighbors(v)) nb += w * theta.row(u);
    grad += hp.lambda * (g.degree(v) * tv - nb) + hp.lambda * hp.gamma * tv;
    return grad;
}

namespace detail {

inline double largest_eigenvalue_sym(const Eigen::MatrixXd& m,
                                     int dense_limit = 512,
                                     double tol = 1e-8, int max_iters = 1000) {
    if (m.rows() <= dense_limit) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    }
    // Power iteration for large blocks; m is PSD here so the dominant
    // eigenvalue equals the spectral radius.
    Eigen::VectorXd x = Eigen::VectorXd::Ones(m.rows()).normalized();
    double lambda = 0.0;
    for (int i = 0; i < max_iters; ++i) {
        Eigen::VectorXd y = m * x;
        const double next = y.norm();
        if (next == 0.0) return 0.0;
        y /= next;
        if (std::abs(next - lambda) <= tol * std::abs(next)) return next;
        lambda = next;
        x = y;
    }
    return lambda;
}

}  // namespace detail

// Block learning rate eta_v = lambda_max([(1-a)H_v + aH'_v]/N + lambda d_v I).
inline double learning_rate(const NodeMoments& m, double alpha, double lambda,
                            double d_v, int n_nodes) {
    if (!m.H.allFinite() || !m.H_test.allFinite())
        throw std::invalid_argument("learning_rate: non-finite moments");
    const Eigen::MatrixXd blend =
        ((1.0 - alpha) * m.H + alpha * m.H_test) / n_nodes;
    return detail::largest_eigenvalue_sym(blend) + lambda * d_v;
}

inline std::vector<double> learning_rates(const std::vector<NodeMoments>& moments,
                                          const Graph& g, const Hyperparams& hp) {
    std::vector<double> rates(moments.size());
    for (std::size_t v = 0; v < moments.size(); ++v)
        rates[v] = learning_rate(moments[v], hp.alpha, hp.lambda, g.degree(v),
                                 g.n_nodes());
    return rates;
}

// One cycle of cyclic block coordinate gradient descent. Nodes are
// visited in ascending index order; neighbor blocks with u < v read the
// value already updated within this cycle.
inline void cbcgd_cycle(Eigen::MatrixXd& theta,
                        const std::vector<NodeMoments>& moments,
                        const Graph& g, const Hyperparams& hp,
                        const std::vector<double>& rates) {
    const int n = g.n_nodes();
    for (int v = 0; v < n; ++v) {
        const auto& m = moments[v];
        const Eigen::VectorXd tv = theta.row(v);
        Eigen::VectorXd node_grad =
            ((1.0 - hp.alpha) * (m.H * tv) + hp.alpha * (m.H_test * tv) -
             m.h_test) / n;
        Eigen::VectorXd nb = Eigen::VectorXd::Zero(theta.cols());
        for (const auto& [u, w] : g.neighbors(v)) nb += w * theta.row(u);
        const Eigen::VectorXd graph_grad = hp.lambda * (g.degree(v) * tv - nb);
        theta.row(v) =
            (rates[v] * tv - node_grad - graph_grad) / (rates[v] + hp.lambda * hp.gamma);
    }
}

struct SolverConfig {
    double tol = 1e-4;    // relative parameter-change stopping threshold
    int max_cycles = 5000;
    Eigen::MatrixXd theta0;  // empty => zeros
    // Stopping only needs the parameter change; inner loops (CV folds,
    // permutation replicates) disable the per-cycle objective evaluation.
    bool record_trace = true;

    void validate() const {
        if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be positive");
        if (max_cycles < 1)
            throw std::invalid_argument("SolverConfig: max_cycles must be >= 1");
    }
};

struct FitResult {
    Eigen::MatrixXd theta;
    int cycles = 0;
    std::vector<double> objective_trace;  // Phi(Theta^(0)), then one value per cycle
    bool converged = false;
};

inline FitResult fit(const std::vector<NodeMoments>& moments, const Graph& g,
                     const Hyperparams& hp, const SolverConfig& cfg = {}) {
    hp.validate();
    cfg.validate();
    const int n = g.n_nodes();
    const int L = static_cast<int>(moments.front().h_test.size());
    Eigen::MatrixXd theta = cfg.theta0.size() > 0
                                ? cfg.theta0
                                : Eigen::MatrixXd::Zero(n, L);
    if (theta.rows() != n || theta.cols() != L)
        throw std::invalid_argument("fit: theta0 shape mismatch");
    const auto rates = learning_rates(moments, g, hp);

    // Precomputed per-node quadratic blocks; each cycle then costs one
    // matvec per node instead of two.
    std::vector<Eigen::MatrixXd> blend;
    blend.reserve(moments.size());
    for (const auto& m : moments)
        blend.push_back((1.0 - hp.alpha) * m.H + hp.alpha * m.H_test);

    auto blended_objective = [&](const Eigen::MatrixXd& th) {
        double loss = 0.0;
        for (int v = 0; v < n; ++v) {
            const Eigen::VectorXd tv = th.row(v);
            loss += 0.5 * tv.dot(blend[v] * tv) - moments[v].h_test.dot(tv);
        }
        double graph_term = 0.0;
        for (const auto& e : g.edges())
            graph_term += e.weight * (th.row(e.u) - th.row(e.v)).squaredNorm();
        return loss / n +
               0.5 * hp.lambda * (graph_term + hp.gamma * th.squaredNorm());
    };

    FitResult result;
    if (cfg.record_trace)
        result.objective_trace.push_back(blended_objective(theta));
    Eigen::MatrixXd prev = theta;
    for (int cycle = 1; cycle <= cfg.max_cycles; ++cycle) {
        prev = theta;
        for (int v = 0; v < n; ++v) {
            const Eigen::VectorXd tv = theta.row(v);
            Eigen::VectorXd num = rates[v] * tv - (blend[v] * tv - moments[v].h_test) / n;
            Eigen::VectorXd nb = Eigen::VectorXd::Zero(L);
            for (const auto& [u, w] : g.neighbors(v)) nb += w * theta.row(u);
            num -= hp.lambda * (g.degree(v) * tv - nb);
            theta.row(v) = num / (rates[v] + hp.lambda * hp.gamma);
        }
        result.cycles = cycle;
        if (cfg.record_trace)
            result.objective_trace.push_back(blended_objective(theta));
        const double prev_norm = prev.norm();
        const double change = (theta - prev).norm();
        // Zero-denominator convention: a zero iterate counts as converged
        // only if the new iterate is also zero.
        if (prev_norm == 0.0 ? change == 0.0 : change / prev_norm <= cfg.tol) {
            result.converged = true;
            break;
        }
    }
    result.theta = std::move(theta);
    return result;
}

inline FitResult fit(const PairedNodeSamples& samples, const Dictionary& dict,
                     const Graph& g, const Hyperparams& hp,
                     const SolverConfig& cfg = {}) {
    return fit(compute_moments(samples, dict), g, hp, cfg);
}

inline constexpr int kDenseSolveGuard = 5000;  // max N*L for dense paths

// Dense SPD solve of the stationarity system; the reference oracle for fit.
inline Eigen::MatrixXd closed_form_solve(const std::vector<NodeMoments>& moments,
                                         const Graph& g, const Hyperparams& hp) {
    hp.validate();
    const int n = g.n_nodes();
    const int L = static_cast<int>(moments.front().h_test.size());
    if (n * L > kDenseSolveGuard)
        throw std::invalid_argument("closed_form_solve: N*L exceeds dense guard");
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n * L, n * L);
    Eigen::VectorXd rhs(n * L);
    for (int v = 0; v < n; ++v) {
        a.block(v * L, v * L, L, L) =
            ((1.0 - hp.alpha) * moments[v].H + hp.alpha * moments[v].H_test) / n;
        a.block(v * L, v * L, L, L).diagonal().array() +=
            hp.lambda * (g.degree(v) + hp.gamma);
        rhs.segment(v * L, L) = moments[v].h_test / n;
    }
    for (const auto& e : g.edges()) {
        a.block(e.u * L, e.v * L, L, L).diagonal().array() -= hp.lambda * e.weight;
        a.block(e.v * L, e.u * L, L, L).diagonal().array() -= hp.lambda * e.weight;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("closed_form_solve: factorization failed");
    const Eigen::VectorXd sol = llt.solve(rhs);
    Eigen::MatrixXd theta(n, L);
    for (int v = 0; v < n; ++v) theta.row(v) = sol.segment(v * L, L);
    return theta;
}

inline Eigen::MatrixXd closed_form_solve(const PairedNodeSamples& samples,
                                         const Dictionary& dict, const Graph& g,
                                         const Hyperparams& hp) {
    return closed_form_solve(compute_moments(samples, dict), g, hp);
}

struct IterationBound {
    int i_max = 0;           // bound with C_min as printed
    int i_max_shifted = 0;   // variant with C_min + lambda*gamma, from the
                             // underlying general result
    double lipschitz = 0.0;        // C
    double block_lipschitz_min = 0.0;  // C_min
    double initial_gap = 0.0;      // Phi(Theta0) - Phi(Theta*)
};

// Worst-case CBCGD cycle count to bring the objective within epsilon of
// its minimum. Dense-guard only: needs the exact minimizer and a full
// NL x NL eigensolve.
inline IterationBound iteration_bound(const std::vector<NodeMoments>& moments,
                                      const Graph& g, const Hyperparams& hp,
                                      const Eigen::MatrixXd& theta0,
                                      double epsilon) {
    if (!(epsilon > 0.0))
        throw std::invalid_argument("iteration_bound: epsilon must be positive");
    const int n = g.n_nodes();
    const int L = static_cast<int>(moments.front().h_test.size());
    if (n * L > kDenseSolveGuard)
        throw std::invalid_argument("iteration_bound: N*L exceeds dense guard");

    const Eigen::MatrixXd theta_star = closed_form_solve(moments, g, hp);
    IterationBound out;
    out.initial_gap = objective(theta0, moments, g, hp) -
                      objective(theta_star, moments, g, hp);
    if (out.initial_gap <= epsilon) return out;

    // C = lambda_max of the smooth part's Hessian (graph term without the ridge).
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n * L, n * L);
    for (int v = 0; v < n; ++v) {
        q.block(v * L, v * L, L, L) =
            ((1.0 - hp.alpha) * moments[v].H + hp.alpha * moments[v].H_test) / n;
        q.block(v * L, v * L, L, L).diagonal().array() += hp.lambda * g.degree(v);
    }
    for (const auto& e : g.edges()) {
        q.block(e.u * L, e.v * L, L, L).diagonal().array() -= hp.lambda * e.weight;
        q.block(e.v * L, e.u * L, L, L).diagonal().array() -= hp.lambda * e.weight;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q, Eigen::EigenvaluesOnly);
    out.lipschitz = es.eigenvalues().maxCoeff();

    const auto rates = learning_rates(moments, g, hp);
    out.block_lipschitz_min = *std::min_element(rates.begin(), rates.end());

    const double mu = hp.lambda * hp.gamma;
    const double log_gap = std::log(out.initial_gap / epsilon);
    const double log_dim = std::log(3.0 * n * L);
    const double num = 16.0 * out.lipschitz * out.lipschitz * log_dim * log_dim;
    const double denom = mu * (out.block_lipschitz_min + mu);
    out.i_max = static_cast<int>(std::ceil((denom + num) / denom * log_gap));
    const double denom_shifted = mu * (out.block_lipschitz_min + mu + mu);
    out.i_max_shifted =
        static_cast<int>(std::ceil((denom_shifted + num) / denom_shifted * log_gap));
    return out;
}

// Count of sample points where the fitted ratio leaves [0, 1/alpha], the
// range of the true relative ratio. Diagnostic only; estimates are not clipped.
inline int ratio_bound_violations(const ModelParams& model,
                                  const PairedNodeSamples& samples) {
    const double upper = model.hyperparams.alpha > 0.0
                             ? 1.0 / model.hyperparams.alpha
                             : std::numeric_limits<double>::infinity();
    int count = 0;
    for (int v = 0; v < samples.n_nodes(); ++v) {
        for (const auto& x : samples.ref[v]) {
            const double f = model.evaluate(v, x);
            if (f < 0.0 || f > upper) ++count;
        }
        for (const auto& x : samples.test[v]) {
            const double f = model.evaluate(v, x);
            if (f < 0.0 || f > upper) ++count;
        }
    }
    return count;
}

}  // namespace grulsif
