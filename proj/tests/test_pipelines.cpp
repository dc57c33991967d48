#include "qh/lrm.hpp"
#include "qh/mvh.hpp"

#include "qh/riccati.hpp"
#include "qh/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace qh;

namespace {

BsdeRunResult random_state(const HestonParams& p, int n_steps, std::uint64_t key, double y0) {
    BsdeRunResult st;
    st.n_steps = n_steps;
    st.control_dim = 2 * p.m;
    st.y0 = y0;
    st.z0 = VectorXd::Zero(2 * p.m);
    st.feat_shift = DeepBsdeSolver::default_feat_shift(p);
    st.feat_scale = DeepBsdeSolver::default_feat_scale(p);
    Rng rng({key});
    for (int n = 1; n < n_steps; ++n)
        st.nets.push_back(Mlp::glorot({2 * p.m, 6, 2 * p.m, 2}, rng));
    // shrink the random controls to keep the quadratic driver tame
    for (auto& net : st.nets)
        for (auto& w : net.w) w *= 0.05;
    return st;
}

double mean_se(const VectorXd& v, double& se) {
    const double mean = v.mean();
    se = std::sqrt((v.array() - mean).square().sum() / (v.size() - 1.0)) /
         std::sqrt(static_cast<double>(v.size()));
    return mean;
}

}  // namespace

TEST_SUITE_BEGIN("pipelines");

TEST_CASE("hand-evaluated mean-variance hedge ratio") {
    // s = 100, y = 0.2 (sigma_t = 0.2), phi = 0.02, lambda1/L = 0, gap = 1, eta1 = 4
    // => xi = ( (1/0.2) 0.02 * 1 + (1/0.2) 4 ) / 100 = 0.201
    HestonParams p = HestonParams::reference(1);
    const MatrixXd s = MatrixXd::Constant(1, 1, 100.0);
    const MatrixXd y_sq = MatrixXd::Constant(1, 1, 0.04);
    const MatrixXd lam1 = MatrixXd::Zero(1, 1);
    const VectorXd l = VectorXd::Ones(1);
    const MatrixXd eta1 = MatrixXd::Constant(1, 1, 4.0);
    const VectorXd gap = VectorXd::Ones(1);
    const MatrixXd xi = mvh_hedge_ratio(p, s, y_sq, lam1, l, eta1, gap);
    CHECK(xi(0, 0) == doctest::Approx(0.201).epsilon(1e-12));
}

TEST_CASE("hedge ratio vanishes when both terms vanish") {
    HestonParams p = HestonParams::reference(2);
    const MatrixXd s = MatrixXd::Constant(3, 2, 100.0);
    const MatrixXd y_sq = MatrixXd::Constant(3, 2, 0.025);
    const MatrixXd lam1 = (-(y_sq.array().sqrt().rowwise() *
                             p.mu_bar.transpose().array())).matrix();  // lambda1/L = -phi
    const VectorXd l = VectorXd::Ones(3);
    const MatrixXd eta1 = MatrixXd::Zero(3, 2);
    const VectorXd gap = VectorXd::Ones(3);
    const MatrixXd xi = mvh_hedge_ratio(p, s, y_sq, lam1, l, eta1, gap);
    CHECK(xi.cwiseAbs().maxCoeff() < 1e-15);

    // eta1 = 0 and gap = 0 as in the spec example
    const MatrixXd xi2 =
        mvh_hedge_ratio(p, s, y_sq, MatrixXd::Zero(3, 2), l, eta1, VectorXd::Zero(3));
    CHECK(xi2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-evaluated local-risk hedge ratio (scalar inversion)") {
    HestonParams p = HestonParams::reference(1);
    const MatrixXd xi =
        lrm_hedge_ratio(p, MatrixXd::Constant(1, 1, 100.0), MatrixXd::Constant(1, 1, 0.04),
                        MatrixXd::Constant(1, 1, 4.0));
    CHECK(xi(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("lrm inversion against the defining relation eta1 = diag(s) sigma^T xi") {
    HestonParams p = HestonParams::reference(3);
    p.A << 1.0, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.2;
    Rng rng({55});
    MatrixXd s(4, 3), y_sq(4, 3), eta1(4, 3);
    for (long r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) {
            s(r, c) = 80.0 + 40.0 * rng.next_uniform();
            y_sq(r, c) = 0.01 + 0.05 * rng.next_uniform();
            eta1(r, c) = 2.0 * rng.next_uniform() - 1.0;
        }
    const MatrixXd xi = lrm_hedge_ratio(p, s, y_sq, eta1);
    for (long r = 0; r < 4; ++r) {
        const VectorXd y = y_sq.row(r).array().sqrt();
        const MatrixXd sigma_t = p.A * y.asDiagonal();
        const VectorXd recon =
            s.row(r).asDiagonal() * sigma_t.transpose() * xi.row(r).transpose();
        CHECK((recon - eta1.row(r).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("self-financing identity of the wealth recursion") {
    const HestonParams p = HestonParams::reference(2);
    const int N = 6;
    const PathBatch paths = simulate(p, N, 64, 71, Measure::P);
    const BsdeRunResult bsre = random_state(p, N, 100, 1.0);
    const BsdeRunResult ext = random_state(p, N, 101, 7.0);
    const HedgeRun run = extract_mvh_strategy(p, bsre, ext, paths);

    const MatrixXd a_t = p.A.transpose();
    for (int n = 0; n < N; ++n) {
        const MatrixXd y_vol = paths.y_sq[n].array().sqrt().matrix();
        const MatrixXd drift =
            (paths.y_sq[n].array().rowwise() * p.mu_bar.transpose().array()).matrix() * a_t;
        const MatrixXd shock = y_vol.cwiseProduct(paths.dw[n]) * a_t;
        const MatrixXd xi_s = run.xi[n].cwiseProduct(paths.s_tilde[n]);
        const VectorXd recomputed =
            paths.dt * (xi_s.array() * drift.array()).rowwise().sum().matrix() +
            (xi_s.array() * shock.array()).rowwise().sum().matrix();
        const VectorXd inc = run.value.col(n + 1) - run.value.col(n);
        CHECK((inc - recomputed).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(run.value(0, 0) == ext.y0);
}

TEST_CASE("cash account bookkeeping is exact") {
    const HestonParams p = HestonParams::reference(1);
    const int N = 5;
    const PathBatch paths = simulate(p, N, 32, 72, Measure::P);
    const BsdeRunResult st = random_state(p, N, 102, 6.5);
    const HedgeRun run = extract_lrm_strategy(p, st, paths);
    for (int n = 0; n < N; ++n) {
        const VectorXd recon =
            run.price.col(n) -
            (run.xi[n].array() * paths.s_tilde[n].array()).rowwise().sum().matrix();
        CHECK((recon - run.psi.col(n)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(run.cost.col(0) == run.price.col(0));
}

TEST_CASE("cost process drift vanishes for any control (mean-self-financing)") {
    const HestonParams p = HestonParams::reference(1);
    const int N = 10;
    const PathBatch paths = simulate(p, N, 20000, 73, Measure::P);
    const BsdeRunResult st = random_state(p, N, 103, 6.5);
    const HedgeRun run = extract_lrm_strategy(p, st, paths);
    double se = 0.0;
    const double drift = mean_se(run.cost.col(N) - run.cost.col(0), se);
    CHECK(std::abs(drift) < 4.0 * se);
}

TEST_CASE("orthogonality proxy: eta2 integral uncorrelated with the tradable part") {
    const HestonParams p = HestonParams::reference(1);
    const int N = 8;
    const long B = 20000;
    const PathBatch paths = simulate(p, N, B, 74, Measure::P);
    const BsdeRunResult st = random_state(p, N, 104, 6.5);

    LrmDriver driver(p);
    std::vector<MatrixXd> controls;
    roll_forward(paths, driver, st, &controls);
    const HedgeRun run = extract_lrm_strategy(p, st, paths);

    VectorXd sum_b = VectorXd::Zero(B);
    VectorXd sum_w = VectorXd::Zero(B);
    for (int n = 0; n < N; ++n) {
        sum_b += (controls[n].rightCols(1).array() * paths.db[n].array()).rowwise().sum().matrix();
        const MatrixXd y_vol = paths.y_sq[n].array().sqrt().matrix();
        const MatrixXd zeta =
            (run.xi[n].cwiseProduct(paths.s_tilde[n]).cwiseProduct(y_vol) * p.A.transpose());
        sum_w += (zeta.array() * paths.dw[n].array()).rowwise().sum().matrix();
    }
    const double mb = sum_b.mean(), mw = sum_w.mean();
    const VectorXd prod = (sum_b.array() - mb) * (sum_w.array() - mw);
    double se = 0.0;
    const double cov = mean_se(prod, se);
    CHECK(std::abs(cov) < 4.0 * se);
}

TEST_CASE("clamp-rate accounting and the unreliable flag") {
    BsdeRunResult r;
    r.eval_y.resize(10, 4);
    r.eval_y.setConstant(0.999);
    CHECK(bsre_clamp_rate(r, 1e-6, 0.05) == 0.0);
    r.eval_y(0, 0) = -0.2;   // below the floor
    r.eval_y(1, 1) = 1.2;    // above the band
    CHECK(bsre_clamp_rate(r, 1e-6, 0.05) == doctest::Approx(2.0 / 40.0));
}

TEST_CASE("extended stage refuses a missing or aborted first stage") {
    const HestonParams p = HestonParams::reference(1);
    BsdeConfig cfg;
    cfg.n_steps = 4;
    BsdeRunResult bad;
    bad.aborted = true;
    bad.n_steps = 4;
    CHECK_THROWS_AS(solve_extended_bsde(p, cfg, bad), std::invalid_argument);
    BsdeRunResult mismatched = random_state(p, 3, 105, 1.0);
    CHECK_THROWS_AS(solve_extended_bsde(p, cfg, mismatched), std::invalid_argument);
}

TEST_CASE("solve_bsre validates the existence condition") {
    HestonParams p = HestonParams::reference(1);
    p.rho(0) = 0.9;
    BsdeConfig cfg;
    cfg.n_steps = 3;
    CHECK_THROWS_AS(solve_bsre(p, cfg), std::invalid_argument);
}

TEST_CASE("singular variance rows fall back to the previous hedge ratio") {
    HestonParams p = HestonParams::reference(1);
    p.y0_sq(0) = 1e-4;
    p.theta(0) = 1e-4;
    p.kappa(0) = 0.05;
    p.sigma(0) = 0.6;  // heavy truncation regime
    const int N = 12;
    const PathBatch paths = simulate(p, N, 512, 75, Measure::P);
    long zero_rows = 0;
    for (int n = 0; n < N; ++n) zero_rows += (paths.y_sq[n].array() == 0.0).count();
    REQUIRE(zero_rows > 0);
    const BsdeRunResult st = random_state(p, N, 106, 0.1);
    const HedgeRun run = extract_lrm_strategy(p, st, paths);
    CHECK(run.singular_steps == zero_rows);
    for (int n = 0; n < N; ++n) CHECK(run.xi[n].allFinite());
}

TEST_SUITE_END();
