#include "qh/mc_pricer.hpp"

#include "qh/riccati.hpp"
#include "qh/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace qh;

TEST_SUITE_BEGIN("mc");

TEST_CASE("relative-error report") {
    McEstimate mc;
    mc.price = 6.837;
    const RelErrReport r = mc_vs_deep_report(mc, 6.830);
    CHECK(r.rel_err_pct == doctest::Approx(100.0 * 0.007 / 6.837).epsilon(1e-9));
    CHECK(mc_vs_deep_report(mc, 6.837).rel_err_pct == 0.0);
    McEstimate zero;
    zero.price = 0.0;
    CHECK_THROWS_AS(mc_vs_deep_report(zero, 1.0), std::invalid_argument);
}

TEST_CASE("price is monotone in the strike under common random numbers") {
    HestonParams p = HestonParams::reference(1);
    McConfig cfg;
    cfg.batch = 5000;
    cfg.n_steps = 20;
    cfg.seed = 11;
    const McEstimate atm = mc_price(p, Measure::Qlr, cfg);
    p.strike = 110.0;
    const McEstimate otm = mc_price(p, Measure::Qlr, cfg);
    CHECK(atm.price > otm.price);
}

TEST_CASE("estimates are deterministic in the seed") {
    const HestonParams p = HestonParams::reference(1);
    McConfig cfg;
    cfg.batch = 2000;
    cfg.n_steps = 10;
    cfg.seed = 12;
    const McEstimate a = mc_price(p, Measure::Qmv, cfg);
    const McEstimate b = mc_price(p, Measure::Qmv, cfg);
    CHECK(a.price == b.price);
    CHECK(a.std_err == b.std_err);
}

TEST_CASE("terminal spot is a martingale under both pricing measures") {
    const HestonParams p = HestonParams::reference(2);
    SimConfig sim;
    sim.batch = 20000;
    sim.n_steps = 25;
    sim.seed = 13;
    sim.measure = Measure::Qmv;
    const RiccatiCurves curves(p);
    const MatrixXd kt = curves.kappa_tilde_table(sim.n_steps);
    sim.kappa_tilde = &kt;
    for (const Measure measure : {Measure::Qmv, Measure::Qlr}) {
        sim.measure = measure;
        const TerminalBatch tb = simulate_terminal(p, sim);
        for (int j = 0; j < 2; ++j) {
            const double mean = tb.s_tilde.col(j).mean();
            const double se = std::sqrt((tb.s_tilde.col(j).array() - mean).square().sum() /
                                        (sim.batch - 1.0)) /
                              std::sqrt(static_cast<double>(sim.batch));
            CHECK(std::abs(mean - 100.0) < 4.0 * se);
        }
    }
}

TEST_CASE("direct Qlr sampling agrees with P sampling weighted by the density") {
    const HestonParams p = HestonParams::reference(1);
    const int N = 40;
    const long B = 10000;

    McConfig cfg;
    cfg.batch = B;
    cfg.n_steps = N;
    cfg.seed = 14;
    const McEstimate direct = mc_price(p, Measure::Qlr, cfg);

    // density along P paths: exp(-int phi dW - 1/2 int |phi|^2 dt)
    SimConfig sim;
    sim.batch = B;
    sim.n_steps = N;
    sim.seed = 15;
    sim.measure = Measure::P;
    const PathBatch paths = simulate(p, sim);
    VectorXd log_density = VectorXd::Zero(B);
    for (int n = 0; n < N; ++n) {
        const MatrixXd phi =
            (paths.y_sq[n].array().sqrt().rowwise() * p.mu_bar.transpose().array()).matrix();
        log_density -= (phi.array() * paths.dw[n].array()).rowwise().sum().matrix();
        log_density -= 0.5 * paths.dt * phi.rowwise().squaredNorm();
    }
    const VectorXd h = discounted_claim(paths, p);
    const VectorXd weighted = h.array() * log_density.array().exp();
    const double price_w = weighted.mean();
    const double se_w = std::sqrt((weighted.array() - price_w).square().sum() / (B - 1.0)) /
                        std::sqrt(static_cast<double>(B));
    CHECK(std::abs(direct.price - price_w) < 4.0 * (direct.std_err + se_w));
}

TEST_CASE("antithetic estimate agrees and does not hurt the error") {
    const HestonParams p = HestonParams::reference(1);
    McConfig plain;
    plain.batch = 20000;
    plain.n_steps = 20;
    plain.seed = 16;
    McConfig anti = plain;
    anti.antithetic = true;
    const McEstimate a = mc_price(p, Measure::Qlr, plain);
    const McEstimate b = mc_price(p, Measure::Qlr, anti);
    CHECK(std::abs(a.price - b.price) < 4.0 * (a.std_err + b.std_err));
    CHECK(b.std_err < 1.5 * a.std_err);
}

TEST_SUITE_END();
