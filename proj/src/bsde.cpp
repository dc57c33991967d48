#include "qh/bsde.hpp"

#include "qh/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qh {

namespace {

inline MatrixXd features(const PathBatch& paths, int n, const VectorXd& shift,
                         const VectorXd& scale) {
    const long b = paths.batch();
    const int m = paths.m;
    MatrixXd f(b, 2 * m);
    f.leftCols(m) = paths.s_tilde[n];
    f.rightCols(m) = paths.y_sq[n];
    f.rowwise() -= shift.transpose();
    return (f.array().rowwise() * scale.transpose().array()).matrix();
}

inline MatrixXd stacked_increments(const PathBatch& paths, int n) {
    const long b = paths.batch();
    const int m = paths.m;
    MatrixXd dwf(b, 2 * m);
    dwf.leftCols(m) = paths.dw[n];
    dwf.rightCols(m) = paths.db[n];
    return dwf;
}

}  // namespace

MatrixXd roll_forward(const PathBatch& paths, BsdeDriver& driver, const BsdeRunResult& state,
                      std::vector<MatrixXd>* controls) {
    return roll_forward(paths, driver, state.nets, state.y0, state.z0, state.feat_shift,
                        state.feat_scale, controls);
}

MatrixXd roll_forward(const PathBatch& paths, BsdeDriver& driver, const std::vector<Mlp>& nets,
                      double y0, const VectorXd& z0, const VectorXd& feat_shift,
                      const VectorXd& feat_scale, std::vector<MatrixXd>* controls) {
    const int N = paths.n_steps;
    const long B = paths.batch();
    if (static_cast<int>(nets.size()) != std::max(N - 1, 0))
        throw std::invalid_argument("roll_forward: need one network per step 1..N-1");

    driver.begin_batch(paths);
    if (controls) controls->assign(N, MatrixXd());

    MatrixXd y(B, N + 1);
    y.col(0).setConstant(y0);
    VectorXd h(B);
    for (int n = 0; n < N; ++n) {
        MatrixXd z;
        if (n == 0)
            z = z0.transpose().replicate(B, 1);
        else
            z = nets[n - 1].forward(features(paths, n, feat_shift, feat_scale));
        driver.eval(n, paths, y.col(n), z, h, nullptr, nullptr);
        y.col(n + 1) = y.col(n) - paths.dt * h +
                       (z.array() * stacked_increments(paths, n).array()).rowwise().sum().matrix();
        if (controls) (*controls)[n] = std::move(z);
    }
    return y;
}

double bsde_loss_on(const PathBatch& paths, BsdeDriver& driver, const TerminalFn& terminal,
                    const BsdeRunResult& state) {
    const MatrixXd y = roll_forward(paths, driver, state);
    const VectorXd target = terminal(paths);
    return (y.col(paths.n_steps) - target).squaredNorm() / static_cast<double>(paths.batch());
}

BsdeLossGrads bsde_loss_and_grads(const PathBatch& paths, BsdeDriver& driver,
                                  const TerminalFn& terminal, const std::vector<Mlp>& nets,
                                  double y0, const VectorXd& z0, const VectorXd& feat_shift,
                                  const VectorXd& feat_scale, double grad_clip) {
    const int N = paths.n_steps;
    const long B = paths.batch();
    const int q = static_cast<int>(z0.size());
    if (static_cast<int>(nets.size()) != std::max(N - 1, 0))
        throw std::invalid_argument("bsde_loss_and_grads: need one network per step 1..N-1");

    driver.begin_batch(paths);

    std::vector<MatrixXd> z_steps(N), dh_dz(N);
    std::vector<VectorXd> dh_dy(N);
    std::vector<Mlp::Cache> caches(N);
    MatrixXd y(B, N + 1);
    VectorXd h(B);

    y.col(0).setConstant(y0);
    for (int n = 0; n < N; ++n) {
        if (n == 0)
            z_steps[0] = z0.transpose().replicate(B, 1);
        else
            z_steps[n] = nets[n - 1].forward(features(paths, n, feat_shift, feat_scale), caches[n]);
        dh_dy[n].resize(B);
        dh_dz[n].resize(B, q);
        driver.eval(n, paths, y.col(n), z_steps[n], h, &dh_dy[n], &dh_dz[n]);
        y.col(n + 1) = y.col(n) - paths.dt * h +
                       (z_steps[n].array() * stacked_increments(paths, n).array())
                           .rowwise()
                           .sum()
                           .matrix();
    }

    BsdeLossGrads out;
    const VectorXd e = y.col(N) - terminal(paths);
    out.loss = e.squaredNorm() / static_cast<double>(B);
    out.z0_grad = RowVectorXd::Zero(q);
    for (const auto& net : nets) out.net_grads.push_back(net.zero_grads());

    VectorXd adj = (2.0 / static_cast<double>(B)) * e;
    for (int n = N - 1; n >= 0; --n) {
        MatrixXd dz = ((stacked_increments(paths, n) - paths.dt * dh_dz[n]).array().colwise() *
                       adj.array())
                          .matrix();
        if (grad_clip > 0.0) dz = dz.cwiseMax(-grad_clip).cwiseMin(grad_clip);
        if (n == 0)
            out.z0_grad += dz.colwise().sum();
        else
            nets[n - 1].backward(caches[n], dz, out.net_grads[n - 1]);
        adj = adj.cwiseProduct((1.0 - paths.dt * dh_dy[n].array()).matrix());
    }
    out.y0_grad = adj.sum();
    return out;
}

VectorXd DeepBsdeSolver::default_feat_shift(const HestonParams& p) {
    VectorXd shift(2 * p.m);
    shift.head(p.m) = p.s0;
    shift.tail(p.m) = p.y0_sq;
    return shift;
}

VectorXd DeepBsdeSolver::default_feat_scale(const HestonParams& p) {
    VectorXd scale(2 * p.m);
    for (int j = 0; j < p.m; ++j) {
        scale(j) = 1.0 / std::max(p.s0(j), 1e-8);
        scale(p.m + j) = 1.0 / std::max({p.y0_sq(j), p.theta(j), 1e-8});
    }
    return scale;
}

DeepBsdeSolver::DeepBsdeSolver(const HestonParams& params, BsdeConfig cfg)
    : params_(params), cfg_(cfg) {
    if (cfg_.hidden < 0) cfg_.hidden = 2 * params.m + 20;
    if (cfg_.n_steps < 1) throw std::invalid_argument("DeepBsdeSolver: n_steps < 1");
}

BsdeRunResult DeepBsdeSolver::train(BsdeDriver& driver, const TerminalFn& terminal) {
    const auto t_start = std::chrono::steady_clock::now();
    const int N = cfg_.n_steps;
    const int q = 2 * params_.m;
    const long B = cfg_.batch;

    BsdeRunResult res;
    res.n_steps = N;
    res.control_dim = q;
    res.feat_shift = default_feat_shift(params_);
    res.feat_scale = default_feat_scale(params_);

    Rng init_rng({cfg_.seed, stream_tag::kInit});
    res.y0 = cfg_.y0_init_lo + (cfg_.y0_init_hi - cfg_.y0_init_lo) * init_rng.next_uniform();
    res.z0 = VectorXd::Zero(q);
    const MlpShape shape{q, cfg_.hidden, q, cfg_.n_hidden_layers};
    for (int n = 1; n < N; ++n) res.nets.push_back(Mlp::glorot(shape, init_rng));

    // Adam moments mirror every trainable tensor
    std::vector<std::vector<AdamMoments>> mom_w(res.nets.size()), mom_b(res.nets.size());
    for (size_t k = 0; k < res.nets.size(); ++k)
        for (int l = 0; l < res.nets[k].n_layers(); ++l) {
            mom_w[k].push_back(AdamMoments::like(res.nets[k].w[l]));
            mom_b[k].push_back(AdamMoments::like(res.nets[k].b[l]));
        }
    MatrixXd y0_mat(1, 1);
    y0_mat(0, 0) = res.y0;
    AdamMoments mom_y0 = AdamMoments::like(y0_mat);
    MatrixXd z0_mat = res.z0.transpose();
    AdamMoments mom_z0 = AdamMoments::like(z0_mat);

    SimConfig sim;
    sim.batch = B;
    sim.n_steps = N;
    sim.seed = cfg_.seed;
    sim.measure = Measure::P;
    sim.stream_tag = stream_tag::kTrain;

    for (long iter = 0; iter < cfg_.iterations; ++iter) {
        sim.path_offset = iter * B;
        const PathBatch paths = simulate(params_, sim);

        const BsdeLossGrads lg =
            bsde_loss_and_grads(paths, driver, terminal, res.nets, y0_mat(0, 0),
                                z0_mat.transpose(), res.feat_shift, res.feat_scale,
                                cfg_.grad_clip);
        res.loss_trace.push_back(lg.loss);
        if (!std::isfinite(lg.loss)) {
            res.aborted = true;
            res.abort_reason = "loss diverged at iteration " + std::to_string(iter);
            break;
        }
        bool finite = std::isfinite(lg.y0_grad) && lg.z0_grad.allFinite();
        for (const auto& g : lg.net_grads) finite = finite && g.all_finite();
        if (!finite) {
            res.aborted = true;
            res.abort_reason = "non-finite gradient at iteration " + std::to_string(iter);
            break;
        }

        const double lr = lr_at(cfg_, iter);
        const long t_adam = iter + 1;
        for (size_t k = 0; k < res.nets.size(); ++k)
            for (int l = 0; l < res.nets[k].n_layers(); ++l) {
                adam_update(res.nets[k].w[l], lg.net_grads[k].w[l], mom_w[k][l], t_adam, lr);
                Eigen::Map<MatrixXd> bmap(res.nets[k].b[l].data(), 1, res.nets[k].b[l].cols());
                adam_update(bmap, lg.net_grads[k].b[l], mom_b[k][l], t_adam, lr);
            }
        MatrixXd y0_grad(1, 1);
        y0_grad(0, 0) = lg.y0_grad;
        adam_update(y0_mat, y0_grad, mom_y0, t_adam, lr);
        adam_update(z0_mat, lg.z0_grad, mom_z0, t_adam, lr);
        res.iterations_run = iter + 1;
    }

    res.y0 = y0_mat(0, 0);
    res.z0 = z0_mat.transpose();
    res.final_train_loss = res.loss_trace.empty() ? 0.0 : res.loss_trace.back();

    if (!res.aborted && cfg_.eval_batch > 0) {
        SimConfig esim = sim;
        esim.batch = cfg_.eval_batch;
        esim.stream_tag = stream_tag::kEval;
        esim.path_offset = 0;
        const PathBatch epaths = simulate(params_, esim);
        std::vector<MatrixXd> controls;
        const MatrixXd ey = roll_forward(epaths, driver, res, &controls);
        const VectorXd target = terminal(epaths);
        res.eval_loss = (ey.col(N) - target).squaredNorm() / static_cast<double>(cfg_.eval_batch);
        res.eval_y_min = ey.minCoeff();
        res.eval_y_max = ey.maxCoeff();
        if (cfg_.record_eval_paths) {
            res.eval_y = ey;
            res.eval_controls = std::move(controls);
        }
    } else if (res.aborted) {
        res.eval_loss = std::numeric_limits<double>::quiet_NaN();
    }

    res.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace qh
