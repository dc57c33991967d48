#include "qh/mvh.hpp"

#include "qh/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace qh {

namespace {

inline MatrixXd phi_at(const PathBatch& paths, int n, const VectorXd& mu_bar) {
    return paths.y_sq[n].array().sqrt().rowwise() * mu_bar.transpose().array();
}

inline VectorXd phi_sq_at(const PathBatch& paths, int n, const VectorXd& mu_bar_sq) {
    return paths.y_sq[n] * mu_bar_sq;
}

}  // namespace

BsreDriver::BsreDriver(const HestonParams& p, double floor) : p_(p), floor_(floor) {}

void BsreDriver::eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z,
                      VectorXd& h, VectorXd* dh_dy, MatrixXd* dh_dz) {
    const int m = p_.m;
    const long b = y.size();
    const MatrixXd phi = phi_at(paths, n, p_.mu_bar);
    const VectorXd phisq = phi_sq_at(paths, n, p_.mu_bar.array().square().matrix());
    const auto z1 = z.leftCols(m);
    const VectorXd cross = (phi.array() * z1.array()).rowwise().sum();
    const VectorXd z1sq = z1.rowwise().squaredNorm();
    const Eigen::ArrayXd y_c = y.array().max(floor_);
    clamps_ += (y.array() < floor_).count();

    h = -(phisq.array() * y.array() + 2.0 * cross.array() + z1sq.array() / y_c).matrix();
    if (dh_dy) {
        const Eigen::ArrayXd active = (y.array() > floor_).cast<double>();
        *dh_dy = -(phisq.array() - active * z1sq.array() / (y_c * y_c)).matrix();
    }
    if (dh_dz) {
        dh_dz->resize(b, 2 * m);
        const Eigen::ArrayXd inv_yc = y_c.inverse();
        dh_dz->leftCols(m) =
            (-2.0 * (phi.array() + z1.array().colwise() * inv_yc)).matrix();
        dh_dz->rightCols(m).setZero();
    }
}

ExtendedMvhDriver::ExtendedMvhDriver(const HestonParams& p, const BsdeRunResult& bsre,
                                     double floor)
    : p_(p), bsre_(&bsre), inner_(p, floor), floor_(floor) {
    if (bsre.aborted)
        throw std::invalid_argument("ExtendedMvhDriver: first-stage result is aborted");
}

void ExtendedMvhDriver::begin_batch(const PathBatch& paths) {
    std::vector<MatrixXd> controls;
    l_ = roll_forward(paths, inner_, *bsre_, &controls);
    lambda2_.resize(paths.n_steps);
    for (int n = 0; n < paths.n_steps; ++n) lambda2_[n] = controls[n].rightCols(p_.m);
}

void ExtendedMvhDriver::eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z,
                             VectorXd& h, VectorXd* dh_dy, MatrixXd* dh_dz) {
    const int m = p_.m;
    const long b = y.size();
    const MatrixXd phi = phi_at(paths, n, p_.mu_bar);
    const auto z1 = z.leftCols(m);
    const auto z2 = z.rightCols(m);
    const Eigen::ArrayXd l_c = l_.col(n).array().max(floor_);
    clamps_ += (l_.col(n).array() < floor_).count();
    const Eigen::ArrayXd disc = (-paths.int_r[n].array()).exp();  // 1 / S0_t

    const VectorXd cross1 = (phi.array() * z1.array()).rowwise().sum();
    const VectorXd cross2 = (lambda2_[n].array() * z2.array()).rowwise().sum();
    h = -(disc * (cross1.array() - cross2.array() / l_c)).matrix();
    if (dh_dy) dh_dy->setZero(b);
    if (dh_dz) {
        dh_dz->resize(b, 2 * m);
        const Eigen::ArrayXd neg_disc = -disc;
        const Eigen::ArrayXd disc_over_l = disc / l_c;
        dh_dz->leftCols(m) = (phi.array().colwise() * neg_disc).matrix();
        dh_dz->rightCols(m) = (lambda2_[n].array().colwise() * disc_over_l).matrix();
    }
}

BsdeRunResult solve_bsre(const HestonParams& p, const BsdeConfig& cfg, double clamp_floor) {
    const ValidationReport v = validate(p);
    if (!v.ok_for_mvh())
        throw std::invalid_argument("solve_bsre: parameters fail validation: " +
                                    (v.failures.empty() ? std::string("unknown") : v.failures.front()));
    BsreDriver driver(p, clamp_floor);
    DeepBsdeSolver solver(p, cfg);
    return solver.train(driver, [](const PathBatch& paths) {
        return VectorXd::Ones(paths.batch()).eval();
    });
}

double bsre_clamp_rate(const BsdeRunResult& bsre, double floor, double band) {
    if (bsre.eval_y.size() == 0) return 0.0;
    const long total = bsre.eval_y.size();
    const long bad = (bsre.eval_y.array() < floor).count() +
                     (bsre.eval_y.array() > 1.0 + band).count();
    return static_cast<double>(bad) / static_cast<double>(total);
}

BsdeRunResult solve_extended_bsde(const HestonParams& p, const BsdeConfig& cfg,
                                  const BsdeRunResult& bsre, double clamp_floor) {
    if (bsre.aborted || bsre.nets.empty() != (bsre.n_steps <= 1))
        throw std::invalid_argument("solve_extended_bsde: missing or failed first stage");
    if (bsre.n_steps != cfg.n_steps)
        throw std::invalid_argument("solve_extended_bsde: step-count mismatch with first stage");
    ExtendedMvhDriver driver(p, bsre, clamp_floor);
    DeepBsdeSolver solver(p, cfg);
    return solver.train(driver,
                        [&p](const PathBatch& paths) { return discounted_claim(paths, p); });
}

MatrixXd mvh_hedge_ratio(const HestonParams& p, const MatrixXd& s, const MatrixXd& y_sq,
                         const MatrixXd& lambda1, const VectorXd& l, const MatrixXd& eta1,
                         const VectorXd& gap, double clamp_floor) {
    const MatrixXd a_inv = p.A.inverse();
    const MatrixXd y_vol = y_sq.array().sqrt().matrix();
    const MatrixXd phi = (y_vol.array().rowwise() * p.mu_bar.transpose().array()).matrix();
    const Eigen::ArrayXd inv_lc = l.array().max(clamp_floor).inverse();
    const MatrixXd corr =
        ((phi.array() + lambda1.array().colwise() * inv_lc) / y_vol.array()).matrix();
    const MatrixXd g = corr * a_inv;
    const MatrixXd hdg = (eta1.array() / y_vol.array()).matrix() * a_inv;
    return ((g.array().colwise() * gap.array() + hdg.array()) / s.array()).matrix();
}

HedgeRun extract_mvh_strategy(const HestonParams& p, const BsdeRunResult& bsre,
                              const BsdeRunResult& extended, const PathBatch& paths,
                              double clamp_floor) {
    const int N = paths.n_steps;
    const int m = p.m;
    const long B = paths.batch();
    const double dt = paths.dt;

    BsreDriver bsre_driver(p, clamp_floor);
    std::vector<MatrixXd> ctrl_l, ctrl_e;
    const MatrixXd l_path = roll_forward(paths, bsre_driver, bsre, &ctrl_l);
    ExtendedMvhDriver ext_driver(p, bsre, clamp_floor);
    const MatrixXd x_path = roll_forward(paths, ext_driver, extended, &ctrl_e);

    const MatrixXd a_inv = p.A.inverse();
    const MatrixXd a_t = p.A.transpose();

    HedgeRun run;
    run.price = x_path;
    run.value.resize(B, N + 1);
    run.value.col(0).setConstant(extended.y0);
    run.xi.assign(N, MatrixXd::Zero(B, m));
    run.psi.resize(B, N);
    run.claim = discounted_claim(paths, p);

    for (int n = 0; n < N; ++n) {
        const MatrixXd& y_sq = paths.y_sq[n];
        const MatrixXd y_vol = y_sq.array().sqrt().matrix();
        const VectorXd gap = x_path.col(n) - run.value.col(n);
        MatrixXd xi = mvh_hedge_ratio(p, paths.s_tilde[n], y_sq, ctrl_l[n].leftCols(m),
                                      l_path.col(n), ctrl_e[n].leftCols(m), gap, clamp_floor);

        // singular sigma_t (a variance hit zero): carry the previous ratio
        for (long bi = 0; bi < B; ++bi) {
            if ((y_sq.row(bi).array() <= 0.0).any()) {
                if (n > 0)
                    xi.row(bi) = run.xi[n - 1].row(bi);
                else
                    xi.row(bi).setZero();
                ++run.singular_steps;
            }
        }
        run.xi[n] = xi;

        const MatrixXd xi_s = xi.cwiseProduct(paths.s_tilde[n]);
        run.psi.col(n) = x_path.col(n) - xi_s.rowwise().sum();

        // Euler wealth recursion with (mu - r 1) = A diag(y_sq) mu_bar
        const MatrixXd drift =
            (y_sq.array().rowwise() * p.mu_bar.transpose().array()).matrix() * a_t;
        const MatrixXd shock = y_vol.cwiseProduct(paths.dw[n]) * a_t;
        run.value.col(n + 1) =
            run.value.col(n) + dt * (xi_s.array() * drift.array()).rowwise().sum().matrix() +
            (xi_s.array() * shock.array()).rowwise().sum().matrix();
    }
    return run;
}

MvhRun solve_mvh(const HestonParams& p, const MvhConfig& cfg) {
    MvhRun run;
    run.bsre = solve_bsre(p, cfg.bsre, cfg.clamp_floor);
    if (run.bsre.aborted)
        throw std::runtime_error("solve_mvh: first-stage training aborted: " +
                                 run.bsre.abort_reason);
    run.clamp_rate = bsre_clamp_rate(run.bsre, cfg.clamp_floor, cfg.alarm_band);
    run.unreliable_bsre = run.clamp_rate > cfg.alarm_rate;
    if (run.unreliable_bsre && !cfg.allow_unreliable_bsre)
        throw std::runtime_error(
            "solve_mvh: unreliable first stage (clamp rate " +
            std::to_string(run.clamp_rate) +
            "); rerun with smaller learning rates or set allow_unreliable_bsre");

    run.extended = solve_extended_bsde(p, cfg.extended, run.bsre, cfg.clamp_floor);
    if (run.extended.aborted)
        throw std::runtime_error("solve_mvh: second-stage training aborted: " +
                                 run.extended.abort_reason);

    SimConfig sim;
    sim.batch = cfg.strategy_batch > 0 ? cfg.strategy_batch : cfg.extended.eval_batch;
    sim.n_steps = cfg.extended.n_steps;
    sim.seed = cfg.extended.seed;
    sim.measure = Measure::P;
    sim.stream_tag = stream_tag::kStrategy;
    const PathBatch paths = simulate(p, sim);
    run.hedge = extract_mvh_strategy(p, run.bsre, run.extended, paths, cfg.clamp_floor);
    run.terminal_hedge_mse =
        (run.hedge.value.col(sim.n_steps) - run.hedge.claim).squaredNorm() /
        static_cast<double>(sim.batch);
    return run;
}

}  // namespace qh
