#include "qh/pde.hpp"

#include "qh/riccati.hpp"

#include <doctest.h>

#include <cmath>

using namespace qh;

namespace {

PdeGridSpec small_spec() {
    PdeGridSpec spec;
    spec.m_s = 100;
    spec.m_y = 50;
    spec.n_time = 60;
    return spec;
}

}  // namespace

TEST_SUITE_BEGIN("pde");

TEST_CASE("mesh endpoints and concentration") {
    PdeGridSpec spec;
    const PdeMesh mesh = build_grid(100.0, spec);
    CHECK(mesh.s(0) == 0.0);
    CHECK(mesh.s(spec.m_s - 1) == 800.0);
    CHECK(mesh.y(0) == 0.0);
    CHECK(mesh.y(spec.m_y - 1) == 5.0);
    for (int i = 1; i < spec.m_s; ++i) CHECK(mesh.s(i) > mesh.s(i - 1));
    for (int j = 1; j < spec.m_y; ++j) CHECK(mesh.y(j) > mesh.y(j - 1));

    // spacing near the strike is at least 5x finer than near the far field
    double near_k = 1e300, far = 0.0;
    for (int i = 1; i < spec.m_s; ++i) {
        const double h = mesh.s(i) - mesh.s(i - 1);
        if (mesh.s(i - 1) <= 100.0 && 100.0 <= mesh.s(i)) near_k = h;
        far = std::max(far, h);
    }
    CHECK(far / near_k >= 5.0);
}

TEST_CASE("too-coarse grids are rejected") {
    PdeGridSpec spec;
    spec.m_s = 8;
    CHECK_THROWS_AS(build_grid(100.0, spec), std::invalid_argument);
}

TEST_CASE("coefficient pair keeps kappa_t theta_t = kappa theta") {
    const HestonParams p = HestonParams::reference(1);
    for (const PdeMode mode : {PdeMode::Mvh, PdeMode::Lrm}) {
        const PdeCoeffs c = make_pde_coeffs(p, mode);
        for (int k = 0; k <= 10; ++k) {
            const double t = k / 10.0;
            CHECK(c.kappa_t(t) * c.theta_t(t) ==
                  doctest::Approx(p.kappa(0) * p.theta(0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("interpolation is exact at nodes and for linear data") {
    const HestonParams p = HestonParams::reference(1);
    PdeSolution sol;
    sol.mesh = build_grid(p.strike, small_spec());
    sol.spec = small_spec();
    sol.params = p;
    sol.maturity = 1.0;
    const int my = static_cast<int>(sol.mesh.y.size());
    const int ms = static_cast<int>(sol.mesh.s.size());
    MatrixXd lin(my, ms);
    for (int j = 0; j < my; ++j)
        for (int i = 0; i < ms; ++i) lin(j, i) = 2.0 + 3.0 * sol.mesh.s(i) - 0.7 * sol.mesh.y(j);
    sol.slices.push_back(lin);
    sol.slice_tau.push_back(1.0);
    sol.slice_step.push_back(0);

    const PdeQuery node = interpolate(sol, 0, sol.mesh.y(7), sol.mesh.s(13));
    CHECK(node.f == doctest::Approx(lin(7, 13)).epsilon(1e-14));
    CHECK(!node.clamped);

    const PdeQuery mid = interpolate(sol, 0, 0.33 * sol.mesh.y(7) + 0.67 * sol.mesh.y(8),
                                     0.5 * (sol.mesh.s(13) + sol.mesh.s(14)));
    const double expect = 2.0 + 3.0 * 0.5 * (sol.mesh.s(13) + sol.mesh.s(14)) -
                          0.7 * (0.33 * sol.mesh.y(7) + 0.67 * sol.mesh.y(8));
    CHECK(mid.f == doctest::Approx(expect).epsilon(1e-12));
    CHECK(mid.f_s == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(mid.f_y == doctest::Approx(-0.7).epsilon(1e-9));

    const PdeQuery out = interpolate(sol, 0, -1.0, 900.0);
    CHECK(out.clamped);
}

TEST_CASE("marched slices respect the imposed boundary conditions") {
    const HestonParams p = HestonParams::reference(1);
    const PdeSolution sol = solve_pde(p, PdeMode::Lrm, small_spec());
    const int my = static_cast<int>(sol.mesh.y.size());
    REQUIRE(sol.slices.size() == static_cast<size_t>(small_spec().n_time + 1));
    for (size_t k = 1; k < sol.slices.size(); ++k) {
        const MatrixXd& f = sol.slices[k];
        CHECK(f.col(0).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((f.row(my - 1).transpose() - sol.mesh.s).cwiseAbs().maxCoeff() <= 1e-10);
    }
    // one-sided derivative at the far-field boundary reproduces the Neumann datum
    const int last = static_cast<int>(sol.slices.size()) - 1;
    const PdeQuery q = interpolate(sol, last, 0.025, 800.0);
    CHECK(q.f_s == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("price slice is nondecreasing in s and dominates the payoff at y = 0") {
    const HestonParams p = HestonParams::reference(1);
    const PdeSolution sol = solve_pde(p, PdeMode::Lrm, small_spec());
    const MatrixXd& f = sol.slices.back();
    const int my = static_cast<int>(sol.mesh.y.size());
    const int ms = static_cast<int>(sol.mesh.s.size());
    for (int j = 0; j < my; ++j)
        for (int i = 1; i < ms; ++i) CHECK(f(j, i) >= f(j, i - 1) - 1e-9);
    for (int i = 0; i < ms; ++i)
        CHECK(f(0, i) >= std::max(sol.mesh.s(i) - p.strike, 0.0) - 1e-8);
}

TEST_CASE("modes coincide bitwise when the variance loading is zeroed") {
    const HestonParams p = HestonParams::reference(1);
    const auto zero_curve = [](double) { return 0.0; };
    const PdeSolution a = solve_pde(p, PdeMode::Mvh, small_spec(), zero_curve);
    const PdeSolution b = solve_pde(p, PdeMode::Lrm, small_spec(), zero_curve);
    REQUIRE(a.slices.size() == b.slices.size());
    for (size_t k = 0; k < a.slices.size(); ++k) CHECK(a.slices[k] == b.slices[k]);
}

TEST_CASE("medium grid already prices near the continuous-time value") {
    const HestonParams p = HestonParams::reference(1);
    PdeGridSpec spec;
    spec.m_s = 120;
    spec.m_y = 60;
    spec.n_time = 80;
    const PdeSolution mvh = solve_pde(p, PdeMode::Mvh, spec);
    const PdeSolution lrm = solve_pde(p, PdeMode::Lrm, spec);
    // frozen characteristic-function oracle values
    CHECK(std::abs(mvh.price_at(0.025, 100.0) - 6.85261) < 0.05);
    CHECK(std::abs(lrm.price_at(0.025, 100.0) - 6.85267) < 0.05);
}

TEST_CASE("benchmark strategies: correction vanishes at the start, rho = 0 is pure delta") {
    HestonParams p = HestonParams::reference(1);
    PdeGridSpec spec = small_spec();
    const int N = 6;
    spec.n_time = 60;  // multiple of N
    const PdeSolution sol = solve_pde(p, PdeMode::Mvh, spec);
    const PathBatch paths = simulate(p, N, 128, 91, Measure::P);
    const HedgeRun ck = benchmark_strategies(sol, paths, PdeMode::Mvh);
    const HedgeRun hps_on_ck = benchmark_strategies(sol, paths, PdeMode::Lrm);
    // V_0 = f at every path start, so the correction term vanishes at n = 0
    CHECK((ck.xi[0] - hps_on_ck.xi[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ck.value.col(0).isConstant(ck.price(0, 0)));

    // wealth recursion is the pure trading gain
    for (int n = 0; n < N; ++n) {
        const VectorXd inc = ck.value.col(n + 1) - ck.value.col(n);
        const VectorXd gain =
            (ck.xi[n].array() * (paths.s_tilde[n + 1] - paths.s_tilde[n]).array())
                .rowwise()
                .sum()
                .matrix();
        CHECK((inc - gain).cwiseAbs().maxCoeff() < 1e-12);
    }

    HestonParams p0 = p;
    p0.rho(0) = 0.0;
    const PdeSolution sol0 = solve_pde(p0, PdeMode::Lrm, spec);
    const PathBatch paths0 = simulate(p0, N, 64, 92, Measure::P);
    const HedgeRun hps = benchmark_strategies(sol0, paths0, PdeMode::Lrm);
    // with rho = 0 the ratio must equal the interpolated delta
    MatrixXd dfy, dfs;
    const int k = sol0.slice_at_tau(sol0.maturity);
    for (long b = 0; b < 8; ++b) {
        const PdeQuery q = interpolate(sol0, k, paths0.y_sq[0](b, 0), paths0.s_tilde[0](b, 0));
        CHECK(hps.xi[0](b, 0) == doctest::Approx(q.f_s).epsilon(1e-10));
    }
}

TEST_CASE("path times must sit on stored slices") {
    const HestonParams p = HestonParams::reference(1);
    PdeGridSpec spec = small_spec();
    spec.n_time = 50;  // not a multiple of 7
    const PdeSolution sol = solve_pde(p, PdeMode::Lrm, spec);
    const PathBatch paths = simulate(p, 7, 4, 93, Measure::P);
    CHECK_THROWS_AS(benchmark_strategies(sol, paths, PdeMode::Lrm), std::invalid_argument);
}

TEST_SUITE_END();
