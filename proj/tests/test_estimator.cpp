#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "grulsif/estimator.hpp"
#include "test_util.hpp"

using namespace grulsif;

namespace {

// Dense stationarity matrix A, mirroring the system solved by
// closed_form_solve but assembled independently from laplacian().
Eigen::MatrixXd dense_system(const std::vector<NodeMoments>& moments,
                             const Graph& g, const Hyperparams& hp) {
    const int n = g.n_nodes();
    const int L = static_cast<int>(moments.front().h_test.size());
    Eigen::MatrixXd lap = Eigen::MatrixXd(laplacian(g));
    lap.diagonal().array() += hp.gamma;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n * L, n * L);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            a.block(u * L, v * L, L, L) =
                hp.lambda * lap(u, v) * Eigen::MatrixXd::Identity(L, L);
    for (int v = 0; v < n; ++v)
        a.block(v * L, v * L, L, L) +=
            ((1.0 - hp.alpha) * moments[v].H + hp.alpha * moments[v].H_test) / n;
    return a;
}

Eigen::VectorXd stack(const Eigen::MatrixXd& theta) {
    const int n = static_cast<int>(theta.rows());
    const int L = static_cast<int>(theta.cols());
    Eigen::VectorXd s(n * L);
    for (int v = 0; v < n; ++v) s.segment(v * L, L) = theta.row(v);
    return s;
}

// Moments for which theta = ones gives f identically 1: a single center
// with every sample sitting on it.
NodeMoments unit_ratio_moments() {
    return {Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1),
            Eigen::VectorXd::Ones(1)};
}

}  // namespace

TEST_CASE("Hyperparams validation") {
    CHECK_NOTHROW((Hyperparams{0.0, 1.0, 1.0}).validate());
    CHECK_THROWS_AS((Hyperparams{1.0, 1.0, 1.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((Hyperparams{-0.1, 1.0, 1.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((Hyperparams{0.1, 0.0, 1.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((Hyperparams{0.1, 1.0, 0.0}).validate(), std::invalid_argument);
}

TEST_CASE("node_moments matches direct accumulation") {
    Rng rng(31);
    const auto ref = testutil::random_points(rng, 12, 2);
    const auto test = testutil::random_points(rng, 9, 2);
    const Dictionary dict(testutil::random_points(rng, 4, 2), GaussianKernel(0.7));
    const NodeMoments m = node_moments(ref, test, dict);

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(4, 4);
    Eigen::MatrixXd hp = Eigen::MatrixXd::Zero(4, 4);
    Eigen::VectorXd hv = Eigen::VectorXd::Zero(4);
    for (const auto& x : ref) {
        const Eigen::VectorXd phi = dict.feature_map(x);
        h += phi * phi.transpose();
    }
    for (const auto& x : test) {
        const Eigen::VectorXd phi = dict.feature_map(x);
        hp += phi * phi.transpose();
        hv += phi;
    }
    CHECK((m.H - h / 12).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.H_test - hp / 9).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.h_test - hv / 9).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.H - m.H.transpose()).norm() == 0.0);
}

TEST_CASE("node_loss special values") {
    Rng rng(32);
    const NodeMoments m = testutil::random_moments(rng, 1, 3).front();

    CHECK(node_loss(Eigen::VectorXd::Zero(3), m, 0.1) == 0.0);
    CHECK(node_loss(Eigen::VectorXd::Ones(1), unit_ratio_moments(), 0.37) == -0.5);

    SECTION("matches sample-level evaluation") {
        const auto ref = testutil::random_points(rng, 15, 2);
        const auto test = testutil::random_points(rng, 10, 2);
        const Dictionary dict(testutil::random_points(rng, 5, 2),
                              GaussianKernel(1.1));
        const NodeMoments mm = node_moments(ref, test, dict);
        const Eigen::VectorXd theta = testutil::random_vector(rng, 5);
        const double alpha = 0.1;

        double expect = 0.0;
        for (const auto& x : ref) {
            const double f = theta.dot(dict.feature_map(x));
            expect += (1.0 - alpha) * 0.5 * f * f / 15;
        }
        for (const auto& x : test) {
            const double f = theta.dot(dict.feature_map(x));
            expect += (alpha * 0.5 * f * f - f) / 10;
        }
        CHECK_THAT(node_loss(theta, mm, alpha),
                   Catch::Matchers::WithinAbs(expect, 1e-12));
    }
}

TEST_CASE("pe_divergence special values") {
    CHECK(pe_divergence(Eigen::VectorXd::Ones(1), unit_ratio_moments(), 0.1) == 0.0);
    Rng rng(33);
    const NodeMoments m = testutil::random_moments(rng, 1, 3).front();
    CHECK(pe_divergence(Eigen::VectorXd::Zero(3), m, 0.1) == -0.5);
}

TEST_CASE("objective matches dense Kronecker oracle") {
    Rng rng(34);
    const int n = 6, L = 8;
    const Graph g = testutil::random_graph(rng, n);
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.7, 0.3};
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::MatrixXd theta = testutil::random_matrix(rng, n, L);
        double loss = 0.0;
        for (int v = 0; v < n; ++v)
            loss += node_loss(theta.row(v), moments[v], hp.alpha);
        const double expected =
            loss / n +
            0.5 * hp.lambda * testutil::kron_quadratic_form(theta, g, hp.gamma);
        const double got = objective(theta, moments, g, hp);
        CHECK(std::abs(got - expected) / std::abs(expected) < 1e-10);
    }
}

TEST_CASE("gradient_block matches central finite differences") {
    Rng rng(35);
    int failures = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 2 + static_cast<int>(rng.below(5));
        const int L = 1 + static_cast<int>(rng.below(4));
        const Graph g = testutil::random_graph(rng, n, 0.5);
        const auto moments = testutil::random_moments(rng, n, L);
        const Hyperparams hp{0.05 + 0.4 * rng.uniform(), 0.1 + rng.uniform(),
                             0.05 + rng.uniform()};
        const Eigen::MatrixXd theta = testutil::random_matrix(rng, n, L);
        const int v = static_cast<int>(rng.below(n));

        const Eigen::VectorXd grad = gradient_block(theta, moments, g, hp, v);
        Eigen::VectorXd fd(L);
        const double h = 1e-5;
        for (int l = 0; l < L; ++l) {
            Eigen::MatrixXd tp = theta, tm = theta;
            tp(v, l) += h;
            tm(v, l) -= h;
            fd[l] = (objective(tp, moments, g, hp) -
                     objective(tm, moments, g, hp)) / (2 * h);
        }
        if ((grad - fd).norm() / std::max(fd.norm(), 1e-12) >= 1e-5) ++failures;
    }
    CHECK(failures == 0);
}

TEST_CASE("learning_rate closed cases and dense oracle") {
    const int n = 4;
    SECTION("identity moments, lambda ~ 0") {
        const NodeMoments m{Eigen::MatrixXd::Identity(3, 3),
                            Eigen::MatrixXd::Identity(3, 3),
                            Eigen::VectorXd::Zero(3)};
        CHECK_THAT(learning_rate(m, 0.1, 1e-300, 2.0, n),
                   Catch::Matchers::WithinAbs(1.0 / n, 1e-12));
    }
    SECTION("zero moments reduce to lambda d_v") {
        const NodeMoments m{Eigen::MatrixXd::Zero(3, 3),
                            Eigen::MatrixXd::Zero(3, 3),
                            Eigen::VectorXd::Zero(3)};
        CHECK(learning_rate(m, 0.1, 0.7, 3.0, n) == 0.7 * 3.0);
    }
    SECTION("random moments vs explicit eigensolve") {
        Rng rng(36);
        for (int rep = 0; rep < 10; ++rep) {
            const NodeMoments m = testutil::random_moments(rng, 1, 5).front();
            const double alpha = 0.25, lambda = 0.4, d_v = 1.7;
            const Eigen::MatrixXd blend =
                ((1.0 - alpha) * m.H + alpha * m.H_test) / n;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                blend, Eigen::EigenvaluesOnly);
            const double expected = es.eigenvalues().maxCoeff() + lambda * d_v;
            CHECK(std::abs(learning_rate(m, alpha, lambda, d_v, n) - expected) /
                      expected < 1e-6);
        }
    }
}

TEST_CASE("cbcgd_cycle from zero on the edgeless graph") {
    Rng rng(37);
    const int n = 5, L = 3;
    const Graph g = build_graph({}, n);
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.5, 0.2};
    const auto rates = learning_rates(moments, g, hp);
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, L);
    cbcgd_cycle(theta, moments, g, hp, rates);
    for (int v = 0; v < n; ++v) {
        const Eigen::VectorXd expected =
            moments[v].h_test / (n * (rates[v] + hp.lambda * hp.gamma));
        CHECK((theta.row(v).transpose() - expected).norm() < 1e-14);
    }
}

TEST_CASE("cbcgd_cycle matches a literal transcription with old/new bookkeeping") {
    Rng rng(38);
    const int n = 6, L = 3;
    const Graph g = testutil::random_graph(rng, n, 0.6);
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.6, 0.3};
    const auto rates = learning_rates(moments, g, hp);
    Eigen::MatrixXd theta = testutil::random_matrix(rng, n, L);

    // Reference: explicit old/new copies updated in node order, neighbors
    // with u < v taken from the new matrix.
    const Eigen::MatrixXd old = theta;
    Eigen::MatrixXd expected = old;
    for (int v = 0; v < n; ++v) {
        const auto& m = moments[v];
        const Eigen::VectorXd tv = old.row(v);
        Eigen::VectorXd num = rates[v] * tv;
        num -= ((1.0 - hp.alpha) * (m.H * tv) + hp.alpha * (m.H_test * tv) -
                m.h_test) / n;
        Eigen::VectorXd nb = Eigen::VectorXd::Zero(L);
        for (const auto& [u, w] : g.neighbors(v)) {
            const Eigen::RowVectorXd src =
                u < v ? Eigen::RowVectorXd(expected.row(u))
                      : Eigen::RowVectorXd(old.row(u));
            nb += w * src.transpose();
        }
        num -= hp.lambda * (g.degree(v) * tv - nb);
        expected.row(v) = num / (rates[v] + hp.lambda * hp.gamma);
    }

    cbcgd_cycle(theta, moments, g, hp, rates);
    CHECK((theta - expected).norm() < 1e-13);
}

TEST_CASE("fit keeps the zero fixed point when h' vanishes") {
    Rng rng(39);
    const int n = 4, L = 3;
    const Graph g = testutil::random_graph(rng, n);
    auto moments = testutil::random_moments(rng, n, L);
    for (auto& m : moments) m.h_test.setZero();
    const FitResult r = fit(moments, g, Hyperparams{0.1, 0.5, 0.2});
    CHECK(r.converged);
    CHECK(r.theta.norm() == 0.0);
    CHECK(r.cycles == 1);
}

TEST_CASE("fit agrees with closed_form_solve at tight tolerance") {
    Rng rng(40);
    SolverConfig solver;
    solver.tol = 1e-10;
    solver.max_cycles = 200000;
    int bad = 0;
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 2 + static_cast<int>(rng.below(6));
        const int L = 1 + static_cast<int>(rng.below(4));
        const Graph g = testutil::random_graph(rng, n, 0.5);
        const auto moments = testutil::random_moments(rng, n, L);
        const Hyperparams hp{0.1, 0.2 + rng.uniform(), 0.1 + rng.uniform()};
        const FitResult r = fit(moments, g, hp, solver);
        const Eigen::MatrixXd star = closed_form_solve(moments, g, hp);
        REQUIRE(r.converged);
        if ((r.theta - star).norm() / star.norm() >= 1e-6) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("objective trace is non-increasing") {
    Rng rng(41);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 3 + static_cast<int>(rng.below(5));
        const int L = 1 + static_cast<int>(rng.below(4));
        const Graph g = testutil::random_graph(rng, n, 0.5);
        const auto moments = testutil::random_moments(rng, n, L);
        const Hyperparams hp{0.1, 0.5, 0.2};
        SolverConfig solver;
        solver.theta0 = testutil::random_matrix(rng, n, L);
        const FitResult r = fit(moments, g, hp, solver);
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
            CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] + 1e-12);
    }
}

TEST_CASE("closed_form_solve scalar case and residual") {
    SECTION("N=1, L=1, unit moments") {
        // ((1-a) + a + lambda gamma) theta = h'  with lambda=gamma=1:
        // theta = 1 / (1 + 1) = 0.5
        const std::vector<NodeMoments> m{unit_ratio_moments()};
        const Graph g(1, {});
        const Eigen::MatrixXd theta =
            closed_form_solve(m, g, Hyperparams{0.3, 1.0, 1.0});
        CHECK_THAT(theta(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-14));
    }

    SECTION("stationarity residual is tiny and system is positive definite") {
        Rng rng(42);
        for (int rep = 0; rep < 20; ++rep) {
            const int n = 2 + static_cast<int>(rng.below(5));
            const int L = 1 + static_cast<int>(rng.below(4));
            const Graph g = testutil::random_graph(rng, n, 0.5);
            const auto moments = testutil::random_moments(rng, n, L);
            const Hyperparams hp{0.15, 0.4, 0.3};

            const Eigen::MatrixXd a = dense_system(moments, g, hp);
            Eigen::VectorXd rhs(n * L);
            for (int v = 0; v < n; ++v)
                rhs.segment(v * L, L) = moments[v].h_test / n;

            const Eigen::MatrixXd theta = closed_form_solve(moments, g, hp);
            CHECK((a * stack(theta) - rhs).norm() < 1e-10);

            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                a, Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >=
                  hp.lambda * hp.gamma - 1e-10);
        }
    }

    SECTION("dense guard enforced") {
        Rng rng(43);
        const auto moments = testutil::random_moments(rng, 2, 3000);
        CHECK_THROWS_AS(closed_form_solve(moments, Graph(2, {}),
                                          Hyperparams{0.1, 1.0, 1.0}),
                        std::invalid_argument);
    }
}

TEST_CASE("closed_form_solve output minimizes the objective") {
    Rng rng(44);
    const int n = 4, L = 3;
    const Graph g = testutil::random_graph(rng, n);
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.5, 0.2};
    const Eigen::MatrixXd star = closed_form_solve(moments, g, hp);
    const double at_star = objective(star, moments, g, hp);
    for (int dir = 0; dir < 100; ++dir) {
        Eigen::MatrixXd d = testutil::random_matrix(rng, n, L);
        d /= d.norm();
        CHECK(objective(star + 1e-3 * d, moments, g, hp) >= at_star);
    }
}

TEST_CASE("iteration_bound basics and coverage") {
    Rng rng(45);
    const int n = 4, L = 4;
    const Graph g = testutil::random_graph(rng, n, 0.5, true);
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.5, 0.2};
    const Eigen::MatrixXd theta0 = Eigen::MatrixXd::Zero(n, L);

    CHECK_THROWS_AS(iteration_bound(moments, g, hp, theta0, 0.0),
                    std::invalid_argument);

    const double epsilon = 1e-6;
    const IterationBound b = iteration_bound(moments, g, hp, theta0, epsilon);
    CHECK(b.initial_gap > 0.0);
    CHECK(b.lipschitz > 0.0);
    CHECK(b.block_lipschitz_min > 0.0);
    CHECK(b.i_max >= 1);
    // The shifted variant has a larger strong-convexity product, so it
    // can only be tighter.
    CHECK(b.i_max_shifted <= b.i_max);

    SECTION("already-converged start gives zero bound") {
        const Eigen::MatrixXd star = closed_form_solve(moments, g, hp);
        CHECK(iteration_bound(moments, g, hp, star, 1e-3).i_max == 0);
    }

    SECTION("solver reaches epsilon within i_max cycles") {
        const Eigen::MatrixXd star = closed_form_solve(moments, g, hp);
        const double opt = objective(star, moments, g, hp);
        SolverConfig solver;
        solver.tol = 1e-14;
        solver.max_cycles = b.i_max;
        const FitResult r = fit(moments, g, hp, solver);
        CHECK(r.objective_trace.back() - opt <= epsilon);
    }
}

TEST_CASE("graph shutoff reduces fit to independent node solves") {
    Rng rng(46);
    const int n = 5, L = 3;
    const auto moments = testutil::random_moments(rng, n, L);
    const Hyperparams hp{0.1, 0.5, 0.3};
    SolverConfig solver;
    solver.tol = 1e-12;
    solver.max_cycles = 100000;
    const FitResult joint = fit(moments, Graph(n, {}), hp, solver);
    REQUIRE(joint.converged);
    for (int v = 0; v < n; ++v) {
        // Single-node problem with the same per-node operator: the block
        // loss keeps its 1/n scale because the moments are divided by the
        // number of nodes of the enclosing problem.
        Eigen::MatrixXd b =
            ((1.0 - hp.alpha) * moments[v].H + hp.alpha * moments[v].H_test) / n;
        b.diagonal().array() += hp.lambda * hp.gamma;
        const Eigen::VectorXd solo =
            Eigen::LLT<Eigen::MatrixXd>(b).solve(Eigen::VectorXd(moments[v].h_test / n));
        CHECK((joint.theta.row(v).transpose() - solo).norm() / solo.norm() < 1e-8);
    }
}

TEST_CASE("ModelParams::evaluate matches the feature-map dot product") {
    Rng rng(47);
    const Dictionary dict(testutil::random_points(rng, 4, 2), GaussianKernel(1.0));
    const Eigen::MatrixXd theta = testutil::random_matrix(rng, 3, 4);
    const ModelParams model{theta, dict, Hyperparams{0.1, 1.0, 1.0}};
    const Eigen::VectorXd x = testutil::random_vector(rng, 2);
    CHECK(model.evaluate(1, x) == theta.row(1).dot(dict.feature_map(x)));
    CHECK_THROWS_AS(model.evaluate(5, x), std::invalid_argument);
}

TEST_CASE("ratio_bound_violations counts out-of-range evaluations") {
    // One center at 0, theta = -1: f < 0 at every point.
    const Dictionary dict({Eigen::VectorXd::Zero(1)}, GaussianKernel(1.0));
    const ModelParams model{-Eigen::MatrixXd::Ones(1, 1), dict,
                            Hyperparams{0.1, 1.0, 1.0}};
    PairedNodeSamples s;
    s.ref.push_back({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)});
    s.test.push_back({Eigen::VectorXd::Zero(1)});
    CHECK(ratio_bound_violations(model, s) == 3);

    const ModelParams ok{Eigen::MatrixXd::Ones(1, 1), dict,
                         Hyperparams{0.1, 1.0, 1.0}};
    CHECK(ratio_bound_violations(ok, s) == 0);
}
