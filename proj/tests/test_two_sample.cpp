#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "grulsif/two_sample.hpp"
#include "test_util.hpp"

using namespace grulsif;

namespace {

// Both directions over a shared dictionary with fixed hyperparameters,
// bypassing model selection for speed and determinism.
std::pair<DirectionSetup, DirectionSetup> fixed_setups(
    const PairedNodeSamples& samples, double alpha = 0.1) {
    const auto d1 = build_global_dictionary(samples, {}, false);
    const auto d2 = build_global_dictionary(samples, {}, true);
    SolverConfig solver;
    solver.max_cycles = 20000;
    return {DirectionSetup{d1.dictionary, Hyperparams{alpha, 0.1, 0.1}, solver},
            DirectionSetup{d2.dictionary, Hyperparams{alpha, 0.1, 0.1}, solver}};
}

}  // namespace

TEST_CASE("graph_level_permutation") {
    Rng rng(61);
    const int n_nodes = 3, n = 4, n_test = 5;
    PairedNodeSamples s;
    s.ref.resize(n_nodes);
    s.test.resize(n_nodes);
    for (int v = 0; v < n_nodes; ++v) {
        s.ref[v] = testutil::random_points(rng, n, 1);
        s.test[v] = testutil::random_points(rng, n_test, 1);
    }

    SECTION("identity leaves the samples unchanged") {
        std::vector<int> tau(n + n_test);
        std::iota(tau.begin(), tau.end(), 0);
        const auto out = graph_level_permutation(s, tau);
        for (int v = 0; v < n_nodes; ++v) {
            for (int j = 0; j < n; ++j) CHECK(out.ref[v][j] == s.ref[v][j]);
            for (int j = 0; j < n_test; ++j) CHECK(out.test[v][j] == s.test[v][j]);
        }
    }

    SECTION("a transposition swaps whole columns at every node") {
        std::vector<int> tau(n + n_test);
        std::iota(tau.begin(), tau.end(), 0);
        std::swap(tau[1], tau[n]);  // X column 1 <-> X' column 0
        const auto out = graph_level_permutation(s, tau);
        for (int v = 0; v < n_nodes; ++v) {
            CHECK(out.ref[v][1] == s.test[v][0]);
            CHECK(out.test[v][0] == s.ref[v][1]);
            CHECK(out.ref[v][0] == s.ref[v][0]);
        }
    }

    SECTION("any permutation preserves the multiset of columns") {
        std::vector<int> tau(n + n_test);
        std::iota(tau.begin(), tau.end(), 0);
        Rng prng(5);
        prng.shuffle(tau);
        const auto out = graph_level_permutation(s, tau);
        for (int v = 0; v < n_nodes; ++v) {
            std::multiset<double> before, after;
            for (const auto& x : s.ref[v]) before.insert(x[0]);
            for (const auto& x : s.test[v]) before.insert(x[0]);
            for (const auto& x : out.ref[v]) after.insert(x[0]);
            for (const auto& x : out.test[v]) after.insert(x[0]);
            CHECK(before == after);
        }
    }

    SECTION("size and count mismatches rejected") {
        CHECK_THROWS_AS(graph_level_permutation(s, std::vector<int>(3, 0)),
                        std::invalid_argument);
        PairedNodeSamples uneven = s;
        uneven.ref[1].pop_back();
        std::vector<int> tau(n + n_test);
        std::iota(tau.begin(), tau.end(), 0);
        CHECK_THROWS_AS(graph_level_permutation(uneven, tau),
                        std::invalid_argument);
    }
}

TEST_CASE("FeatureCache reproduces compute_moments under relabeling") {
    Rng rng(62);
    const auto s = testutil::random_samples(rng, 3, 6, 1);
    const auto built = build_global_dictionary(s);
    const detail::FeatureCache cache(s, built.dictionary);

    std::vector<int> tau(12);
    std::iota(tau.begin(), tau.end(), 0);
    Rng prng(9);
    prng.shuffle(tau);
    const std::vector<int> ref_idx(tau.begin(), tau.begin() + 6);
    const std::vector<int> test_idx(tau.begin() + 6, tau.end());

    const auto fast = cache.moments(ref_idx, test_idx);
    const auto slow =
        compute_moments(graph_level_permutation(s, tau), built.dictionary);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t v = 0; v < fast.size(); ++v) {
        CHECK((fast[v].H - slow[v].H).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((fast[v].H_test - slow[v].H_test).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((fast[v].h_test - slow[v].h_test).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("symmetric statistic is near zero when both samples share a law") {
    const auto s = testutil::normal_pair(3, 200, 0.0, 0.0);
    const Graph g(1, {});
    const auto [d1, d2] = fixed_setups(s);
    const Eigen::VectorXd stat = symmetric_statistic(s, g, d1, d2);
    CHECK(std::abs(stat[0]) < 0.05);
}

TEST_CASE("symmetric statistic separates distant normals") {
    const auto null_s = testutil::normal_pair(4, 200, 0.0, 0.0);
    const auto alt_s = testutil::normal_pair(4, 200, 0.0, 5.0);
    const Graph g(1, {});
    const auto [n1, n2] = fixed_setups(null_s);
    const auto [a1, a2] = fixed_setups(alt_s);
    const double null_stat = symmetric_statistic(null_s, g, n1, n2)[0];
    const double alt_stat = symmetric_statistic(alt_s, g, a1, a2)[0];
    CHECK(alt_stat > null_stat + 0.5);
}

TEST_CASE("identical nodes on a complete graph share one statistic value") {
    const auto base = testutil::normal_pair(7, 30, 0.0, 1.0);
    PairedNodeSamples s;
    for (int v = 0; v < 4; ++v) {
        s.ref.push_back(base.ref[0]);
        s.test.push_back(base.test[0]);
    }
    std::vector<Edge> edges;
    for (int u = 0; u < 4; ++u)
        for (int v = u + 1; v < 4; ++v) edges.push_back({u, v, 1.0});
    const Graph g(4, std::move(edges));
    auto [d1, d2] = fixed_setups(s);
    d1.solver.tol = d2.solver.tol = 1e-12;
    d1.solver.max_cycles = d2.solver.max_cycles = 500000;
    const Eigen::VectorXd stat = symmetric_statistic(s, g, d1, d2);
    for (int v = 1; v < 4; ++v)
        CHECK_THAT(stat[v], Catch::Matchers::WithinAbs(stat[0], 1e-8));
}

TEST_CASE("permutation_test p-value formulas") {
    const auto s = testutil::normal_pair(8, 20, 0.0, 0.5);
    const Graph g(1, {});
    const auto [d1, d2] = fixed_setups(s);

    SECTION("strict formula with one permutation") {
        PermutationConfig cfg;
        cfg.n_perm = 1;
        cfg.seed = 2;
        const TestReport r = permutation_test(s, g, cfg, d1, d2);
        CHECK((r.p_values[0] == 0.0 || r.p_values[0] == 1.0));
        const double expected = r.stat[0] < r.perm_stats(0, 0) ? 1.0 : 0.0;
        CHECK(r.p_values[0] == expected);
    }

    SECTION("strict count over many permutations") {
        PermutationConfig cfg;
        cfg.n_perm = 50;
        cfg.seed = 2;
        const TestReport r = permutation_test(s, g, cfg, d1, d2);
        int count = 0;
        for (int i = 0; i < 50; ++i)
            if (r.stat[0] < r.perm_stats(i, 0)) ++count;
        CHECK(r.p_values[0] == count / 50.0);
        CHECK(r.p_values[0] >= 0.0);
        CHECK(r.p_values[0] <= 1.0);
    }

    SECTION("conservative variant adds the +1 correction") {
        PermutationConfig cfg;
        cfg.n_perm = 50;
        cfg.seed = 2;
        cfg.conservative = true;
        const TestReport r = permutation_test(s, g, cfg, d1, d2);
        int count = 0;
        for (int i = 0; i < 50; ++i)
            if (r.perm_stats(i, 0) >= r.stat[0]) ++count;
        CHECK(r.p_values[0] == (1.0 + count) / 51.0);
        CHECK(r.p_values[0] > 0.0);
    }
}

TEST_CASE("equal permuted statistics give strict p-value zero") {
    // Every column identical: any relabeling reproduces the same moments,
    // so perm stats equal the observed one exactly and the strict
    // inequality never counts.
    PairedNodeSamples s;
    s.ref.emplace_back(6, Eigen::VectorXd::Constant(1, 0.5));
    s.test.emplace_back(6, Eigen::VectorXd::Constant(1, 0.5));
    // Dictionary built by hand; the coherence scan needs distinct points.
    const Dictionary dict({Eigen::VectorXd::Constant(1, -1.0),
                           Eigen::VectorXd::Constant(1, 1.0)},
                          GaussianKernel(1.0));
    const DirectionSetup d{dict, Hyperparams{0.1, 0.1, 0.1}, {}};
    PermutationConfig cfg;
    cfg.n_perm = 20;
    const Graph g(1, {});
    const TestReport r = permutation_test(s, g, cfg, d, d);
    CHECK(r.p_values[0] == 0.0);
    cfg.conservative = true;
    const TestReport rc = permutation_test(s, g, cfg, d, d);
    CHECK(rc.p_values[0] == 1.0);
}

TEST_CASE("permutation_test is deterministic and seed-sensitive") {
    const auto s = testutil::normal_pair(9, 25, 0.0, 1.0);
    const Graph g(1, {});
    const auto [d1, d2] = fixed_setups(s);
    PermutationConfig cfg;
    cfg.n_perm = 30;
    cfg.seed = 5;
    const TestReport a = permutation_test(s, g, cfg, d1, d2);
    const TestReport b = permutation_test(s, g, cfg, d1, d2);
    CHECK(a.stat == b.stat);
    CHECK(a.perm_stats == b.perm_stats);
    CHECK(a.p_values == b.p_values);

    cfg.seed = 6;
    const TestReport c = permutation_test(s, g, cfg, d1, d2);
    CHECK(a.stat == c.stat);  // observed statistic ignores the seed
    CHECK(a.perm_stats != c.perm_stats);
}

TEST_CASE("detected set matches the threshold rule") {
    const auto alt = testutil::normal_pair(10, 60, 0.0, 3.0);
    const Graph g(1, {});
    const auto [d1, d2] = fixed_setups(alt);
    PermutationConfig cfg;
    cfg.n_perm = 100;
    cfg.pi_star = 0.05;
    const TestReport r = permutation_test(alt, g, cfg, d1, d2);
    const bool should_detect = r.p_values[0] < 0.05;
    CHECK((r.detected == std::vector<int>{0}) == should_detect);
    // A 3-sigma mean shift with n = 60 should be unmistakable.
    CHECK(should_detect);
}

TEST_CASE("prepare_direction freezes a full setup from the data") {
    Rng rng(64);
    PairedNodeSamples s;
    for (int v = 0; v < 3; ++v) {
        s.ref.push_back(testutil::random_points(rng, 20, 1));
        s.test.push_back(testutil::random_points(rng, 20, 1));
    }
    const Graph g = build_graph({{0, 1, 1}, {1, 2, 1}}, 3);
    const DirectionSetup d1 = prepare_direction(s, g, 0.1, false, {}, 17);
    CHECK(d1.dictionary.size() >= 1);
    CHECK(d1.hyperparams.alpha == 0.1);
    CHECK(d1.hyperparams.lambda > 0.0);
    CHECK(d1.hyperparams.gamma > 0.0);

    const DirectionSetup again = prepare_direction(s, g, 0.1, false, {}, 17);
    CHECK(d1.dictionary.sigma() == again.dictionary.sigma());
    CHECK(d1.hyperparams.lambda == again.hyperparams.lambda);
    CHECK(d1.hyperparams.gamma == again.hyperparams.gamma);
}

TEST_CASE("PermutationConfig validation") {
    PermutationConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.n_perm = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.n_perm = 10;
    cfg.pi_star = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
