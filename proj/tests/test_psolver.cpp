#include <onelap/oracle.hpp>
#include <onelap/psolver.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace onelap;

namespace {

ProblemSpec spec_1d(int n, double gamma, double (*fn)(double)) {
    ProblemSpec s;
    s.grid = build_grid(-1.0, 1.0, n);
    s.f.resize(s.grid.node_count());
    for (int i = 0; i < n; ++i) s.f[i] = fn(s.grid.node_x(i));
    s.gamma = gamma;
    return s;
}

double f_one(double) { return 1.0; }
double f_chi(double x) { return (x >= -0.5 && x < 0.5) ? 1.0 : 0.0; }

}  // namespace

TEST_CASE("config and problem validation") {
    PSolveConfig cfg;
    cfg.p = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = PSolveConfig{};
    cfg.tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = PSolveConfig{};
    cfg.damping = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    ProblemSpec s = spec_1d(17, 1.0, f_one);
    s.gamma = 1.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = spec_1d(17, 1.0, f_one);
    s.f[3] = -1e-9;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("zero datum yields the zero solution") {
    const ProblemSpec s = spec_1d(65, 1.0, [](double) { return 0.0; });
    const PSolution sol = solve_p_problem(s, PSolveConfig{});
    REQUIRE(sol.converged);
    CHECK(norm_linf(sol.u) <= 1e-8);
}

TEST_CASE("solutions are nonnegative with zero boundary values") {
    const ProblemSpec s = spec_1d(129, 0.5, f_chi);
    PSolveConfig cfg;
    cfg.p = 1.3;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    const Grid& g = s.grid;
    CHECK(sol.u[0] == 0.0);
    CHECK(sol.u[g.n[0] - 1] == 0.0);
    for (double v : sol.u) REQUIRE(v >= 0.0);
}

TEST_CASE("accepted residuals decrease strictly") {
    const ProblemSpec s = spec_1d(257, 1.0, f_one);
    PSolveConfig cfg;
    cfg.p = 1.2;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    REQUIRE(sol.residual_history.size() >= 2);
    for (std::size_t k = 1; k < sol.residual_history.size(); ++k)
        REQUIRE(sol.residual_history[k] < sol.residual_history[k - 1]);
}

TEST_CASE("the iteration dissipates the regularized energy") {
    const ProblemSpec s = spec_1d(257, 1.0, f_chi);
    for (double p : {2.0, 1.5, 1.2}) {
        PSolveConfig cfg;
        cfg.p = p;
        const PSolution sol = solve_p_problem(s, cfg);
        REQUIRE(sol.converged);
        REQUIRE(sol.energy_history.size() >= 2);
        CHECK(sol.energy_history.back() < sol.energy_history.front());
    }
}

TEST_CASE("p = 2 with smooth datum matches the direct linear solve") {
    // at p = 2 and gamma shifted away (large u via big f), the operator
    // is the Laplacian: check -u'' = f/(u+eps)^gamma by finite differences
    const ProblemSpec s = spec_1d(513, 1.0, f_one);
    PSolveConfig cfg;
    cfg.p = 2.0;
    cfg.tol = 1e-12;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    const Grid& g = s.grid;
    const double h = g.h[0];
    double worst = 0.0;
    for (int i = 1; i + 1 < g.n[0]; ++i) {
        const double lap = (sol.u[i - 1] - 2 * sol.u[i] + sol.u[i + 1]) / (h * h);
        const double rhs = s.f[i] / std::pow(sol.u[i] + cfg.eps, s.gamma);
        worst = std::max(worst, std::abs(-lap - rhs));
    }
    CHECK(worst <= 1e-6 * (1.0 + norm_linf(sol.u)));
}

TEST_CASE("initialization independence") {
    const ProblemSpec s = spec_1d(257, 0.5, f_chi);
    PSolveConfig cfg;
    cfg.p = 1.5;
    const PSolution a = solve_p_problem(s, cfg);
    NodeField high(s.grid.node_count(), 2.0);
    const PSolution b = solve_p_problem(s, cfg, &high);
    PSolveConfig cfg2 = cfg;
    cfg2.init_value = 0.05;
    const PSolution c = solve_p_problem(s, cfg2);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    REQUIRE(c.converged);
    for (std::size_t k = 0; k < a.u.size(); ++k) {
        REQUIRE(std::abs(a.u[k] - b.u[k]) <= 10 * cfg.tol);
        REQUIRE(std::abs(a.u[k] - c.u[k]) <= 10 * cfg.tol);
    }
}

TEST_CASE("comparison principle under datum ordering") {
    std::mt19937 rng(314159);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const Grid g = build_grid(-1.0, 1.0, 257);
    for (int trial = 0; trial < 6; ++trial) {
        NodeField f1(g.node_count()), f2(g.node_count());
        for (int i = 0; i < g.n[0]; ++i) {
            const double x = g.node_x(i);
            f1[i] = (1.0 + std::sin(3 * x + trial)) * U(rng);
            f2[i] = f1[i] + 0.4 * (1.0 + std::cos(2 * x)) * U(rng);
        }
        ProblemSpec s1{g, f1, trial % 2 ? 1.0 : 0.25, ""};
        ProblemSpec s2{g, f2, s1.gamma, ""};
        PSolveConfig cfg;
        cfg.p = trial % 2 ? 1.2 : 1.5;
        const PSolution a = solve_p_problem(s1, cfg);
        const PSolution b = solve_p_problem(s2, cfg);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        for (std::size_t k = 0; k < a.u.size(); ++k)
            REQUIRE(a.u[k] <= b.u[k] + 10 * cfg.tol);
    }
}

TEST_CASE("warm start from the solution converges immediately") {
    const ProblemSpec s = spec_1d(257, 1.0, f_one);
    PSolveConfig cfg;
    cfg.p = 1.5;
    const PSolution a = solve_p_problem(s, cfg);
    REQUIRE(a.converged);
    const PSolution b = solve_p_problem(s, cfg, &a.u);
    REQUIRE(b.converged);
    CHECK(b.iterations <= 1);
}

TEST_CASE("flux extraction is consistent with the residual") {
    // at a converged solution, -div z = f/(u+eps)^gamma up to tolerance
    const ProblemSpec s = spec_1d(513, 1.0, f_chi);
    PSolveConfig cfg;
    cfg.p = 1.3;
    cfg.tol = 1e-10;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    const Grid& g = s.grid;
    const NodeField dv = divergence(sol.z, g);
    double worst = 0.0;
    for (int i = 1; i + 1 < g.n[0]; ++i)
        worst = std::max(worst, std::abs(-dv[i] - s.f[i] / (sol.u[i] + cfg.eps)));
    CHECK(worst <= 1e-6);

    // and extract_flux reproduces it from (u, p, delta)
    const FaceField z2 = extract_flux(sol.u, cfg.p, cfg.effective_delta(g), g);
    for (std::size_t k = 0; k < z2.comp[0].size(); ++k)
        CHECK(z2.comp[0][k] == Catch::Approx(sol.z.comp[0][k]).margin(1e-14));
}

TEST_CASE("energy identity bounds the Dirichlet form") {
    for (double gamma : {1.0, 0.5}) {
        const ProblemSpec s = spec_1d(257, gamma, f_chi);
        PSolveConfig cfg;
        cfg.p = 1.2;
        const PSolution sol = solve_p_problem(s, cfg);
        REQUIRE(sol.converged);
        const auto [lhs, rhs] = bv_estimate_check(sol, s, cfg);
        CHECK(lhs <= rhs + 1e-6);
        CHECK(lhs > 0.0);
    }
}

TEST_CASE("2D solve: symmetry and interior positivity") {
    const Grid g = build_grid(-1.0, 1.0, 33, -1.0, 1.0, 33);
    NodeField f(g.node_count(), 1.0);
    ProblemSpec s{g, f, 1.0, ""};
    PSolveConfig cfg;
    cfg.p = 1.5;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    const int n = g.n[0];
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            REQUIRE(sol.u[g.node_index(i, j)] >= 0.0);
            // x <-> y swap symmetry of the datum and the domain
            REQUIRE(sol.u[g.node_index(i, j)]
                    == Catch::Approx(sol.u[g.node_index(j, i)]).margin(1e-8));
        }
    const int mid = n / 2;
    CHECK(sol.u[g.node_index(mid, mid)] == Catch::Approx(norm_linf(sol.u)));
    CHECK(sol.u[g.node_index(0, mid)] == 0.0);
}

TEST_CASE("oracle cross-check: small p approaches a flat top with ramps") {
    // at p = 1.05 the profile over the indicator datum is the 1/2 plateau
    // plus linear run-outs across the dead zones (where the flux is
    // constant); the plateau height is the sharp part of the comparison
    const ProblemSpec s = spec_1d(1025, 1.0, f_chi);
    PSolveConfig cfg;
    cfg.p = 1.05;
    const PSolution sol = solve_p_problem(s, cfg);
    REQUIRE(sol.converged);
    const Grid& g = s.grid;
    const auto ref = sample_pair(example1_pairs()[1], g);  // the 1/2 chi profile
    NodeField d(sol.u.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = sol.u[k] - ref.u[k];
    // the two run-outs carry about 1/8 of mass each
    CHECK(norm_l1(d, g) <= 0.35);
    // plateau height at the center within a few percent of 1/2
    CHECK(sol.u[g.node_count() / 2] == Catch::Approx(0.5).margin(0.02));
}
