#include "qh/lrm.hpp"

#include "qh/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace qh {

void LrmDriver::eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z,
                     VectorXd& h, VectorXd* dh_dy, MatrixXd* dh_dz) {
    const int m = p_.m;
    const long b = y.size();
    const MatrixXd phi =
        (paths.y_sq[n].array().sqrt().rowwise() * p_.mu_bar.transpose().array()).matrix();
    h = -(z.leftCols(m).array() * phi.array()).rowwise().sum().matrix();
    if (dh_dy) dh_dy->setZero(b);
    if (dh_dz) {
        dh_dz->resize(b, 2 * m);
        dh_dz->leftCols(m) = -phi;
        dh_dz->rightCols(m).setZero();
    }
}

BsdeRunResult solve_fs_bsde(const HestonParams& p, const BsdeConfig& cfg) {
    const ValidationReport v = validate(p);
    if (!v.ok_for_lrm())
        throw std::invalid_argument("solve_fs_bsde: parameters fail validation: " +
                                    (v.failures.empty() ? std::string("unknown") : v.failures.front()));
    LrmDriver driver(p);
    DeepBsdeSolver solver(p, cfg);
    return solver.train(driver,
                        [&p](const PathBatch& paths) { return discounted_claim(paths, p); });
}

MatrixXd lrm_hedge_ratio(const HestonParams& p, const MatrixXd& s, const MatrixXd& y_sq,
                         const MatrixXd& eta1) {
    const MatrixXd a_inv = p.A.inverse();
    const MatrixXd y_vol = y_sq.array().sqrt().matrix();
    return ((eta1.array() / y_vol.array() / s.array()).matrix() * a_inv);
}

HedgeRun extract_lrm_strategy(const HestonParams& p, const BsdeRunResult& result,
                              const PathBatch& paths) {
    const int N = paths.n_steps;
    const int m = p.m;
    const long B = paths.batch();

    LrmDriver driver(p);
    std::vector<MatrixXd> controls;
    const MatrixXd x_path = roll_forward(paths, driver, result, &controls);

    HedgeRun run;
    run.price = x_path;
    run.xi.assign(N, MatrixXd::Zero(B, m));
    run.psi.resize(B, N);
    run.cost.resize(B, N + 1);
    run.cost.col(0) = x_path.col(0);
    run.claim = discounted_claim(paths, p);

    VectorXd gains = VectorXd::Zero(B);
    for (int n = 0; n < N; ++n) {
        const MatrixXd& y_sq = paths.y_sq[n];
        MatrixXd xi = lrm_hedge_ratio(p, paths.s_tilde[n], y_sq, controls[n].leftCols(m));
        for (long bi = 0; bi < B; ++bi) {
            if ((y_sq.row(bi).array() <= 0.0).any()) {
                xi.row(bi) = (n > 0) ? run.xi[n - 1].row(bi) : Eigen::RowVectorXd::Zero(m);
                ++run.singular_steps;
            }
        }
        run.xi[n] = xi;
        run.psi.col(n) =
            x_path.col(n) - (xi.array() * paths.s_tilde[n].array()).rowwise().sum().matrix();
        gains += (xi.array() * (paths.s_tilde[n + 1] - paths.s_tilde[n]).array())
                     .rowwise()
                     .sum()
                     .matrix();
        run.cost.col(n + 1) = x_path.col(n + 1) - gains;
    }
    return run;
}

LrmRun solve_lrm(const HestonParams& p, const LrmConfig& cfg) {
    LrmRun run;
    run.bsde = solve_fs_bsde(p, cfg.bsde);
    if (run.bsde.aborted)
        throw std::runtime_error("solve_lrm: training aborted: " + run.bsde.abort_reason);

    SimConfig sim;
    sim.batch = cfg.strategy_batch > 0 ? cfg.strategy_batch : cfg.bsde.eval_batch;
    sim.n_steps = cfg.bsde.n_steps;
    sim.seed = cfg.bsde.seed;
    sim.measure = Measure::P;
    sim.stream_tag = stream_tag::kStrategy;
    const PathBatch paths = simulate(p, sim);
    run.hedge = extract_lrm_strategy(p, run.bsde, paths);

    const VectorXd drift = run.hedge.cost.col(sim.n_steps) - run.hedge.cost.col(0);
    run.cost_drift_mean = drift.mean();
    run.cost_drift_se = std::sqrt((drift.array() - run.cost_drift_mean).square().sum() /
                                  (drift.size() - 1.0)) /
                        std::sqrt(static_cast<double>(drift.size()));
    return run;
}

}  // namespace qh
