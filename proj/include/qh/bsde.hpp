#pragma once

#include "qh/market.hpp"
#include "qh/mlp.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace qh {

/// Driver h(t_n, x, y, z) of the backward equation, batched over paths.
/// The forward roll is
///     Y_{n+1} = Y_n - h(t_n, X_n, Y_n, Z_n) dt + Z_n . dW_n,
/// with dW the stacked (m + d)-dimensional increments. Drivers that depend
/// on frozen processes (the second mean-variance equation) precompute them
/// per batch in begin_batch.
class BsdeDriver {
public:
    virtual ~BsdeDriver() = default;

    virtual void begin_batch(const PathBatch& paths) { (void)paths; }

    /// Fills h (batch); when requested, also dh/dy (batch) and dh/dz
    /// (batch x q). Drivers must guard their own singularities (clamped
    /// denominators) and expose the activation count.
    virtual void eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z,
                      VectorXd& h, VectorXd* dh_dy, MatrixXd* dh_dz) = 0;

    virtual long clamp_activations() const { return 0; }
    virtual void reset_clamp_counter() {}
};

/// Driver == 0; keeps Y a discrete martingale. Used by tests and degenerate
/// claims.
class ZeroDriver final : public BsdeDriver {
public:
    void eval(int, const PathBatch&, const VectorXd& y, const MatrixXd&, VectorXd& h,
              VectorXd* dh_dy, MatrixXd* dh_dz) override {
        h.setZero(y.size());
        if (dh_dy) dh_dy->setZero(y.size());
        if (dh_dz) dh_dz->setZero();
    }
};

using TerminalFn = std::function<VectorXd(const PathBatch&)>;

struct BsdeConfig {
    int n_steps = 10;
    long batch = 128;
    long iterations = 8000;
    long partial_iterations = 4000;  // learning-rate switch point
    double lr1 = 5e-2;
    double lr2 = 5e-3;
    double y0_init_lo = 0.5;
    double y0_init_hi = 2.0;
    long eval_batch = 10000;
    int hidden = -1;          // -1: 2m + 20
    int n_hidden_layers = 4;
    std::uint64_t seed = 1;
    double grad_clip = 0.0;   // 0: off; otherwise elementwise clip on dLoss/dZ
    bool record_eval_paths = true;
};

struct BsdeRunResult {
    double y0 = 0.0;                      // trained initial value
    VectorXd z0;                          // trained step-0 control
    std::vector<Mlp> nets;                // controls for steps 1 .. N-1
    VectorXd feat_shift;                  // input standardization x -> (x - shift) * scale
    VectorXd feat_scale;
    int n_steps = 0;
    int control_dim = 0;

    std::vector<double> loss_trace;       // one entry per completed iteration
    double final_train_loss = 0.0;
    double eval_loss = 0.0;
    MatrixXd eval_y;                      // eval batch x (N+1)
    std::vector<MatrixXd> eval_controls;  // per step, eval batch x q
    double eval_y_min = 0.0;
    double eval_y_max = 0.0;

    bool aborted = false;
    std::string abort_reason;
    long iterations_run = 0;
    double train_seconds = 0.0;
};

/// Rolls the backward variable through a given path batch with fixed
/// parameters. Returns y as batch x (N+1); controls optional.
MatrixXd roll_forward(const PathBatch& paths, BsdeDriver& driver, const BsdeRunResult& state,
                      std::vector<MatrixXd>* controls = nullptr);

/// Same roll with explicitly supplied parameters (test hook).
MatrixXd roll_forward(const PathBatch& paths, BsdeDriver& driver, const std::vector<Mlp>& nets,
                      double y0, const VectorXd& z0, const VectorXd& feat_shift,
                      const VectorXd& feat_scale, std::vector<MatrixXd>* controls = nullptr);

/// Loss E|terminal - Y_N|^2 of a fixed parameter set on a fixed batch
/// (finite-difference oracle hook).
double bsde_loss_on(const PathBatch& paths, BsdeDriver& driver, const TerminalFn& terminal,
                    const BsdeRunResult& state);

/// Loss and its reverse-mode gradients w.r.t. every trainable tensor on a
/// fixed batch; the training loop applies this once per iteration.
struct BsdeLossGrads {
    double loss = 0.0;
    double y0_grad = 0.0;
    RowVectorXd z0_grad;
    std::vector<MlpGrads> net_grads;
};

BsdeLossGrads bsde_loss_and_grads(const PathBatch& paths, BsdeDriver& driver,
                                  const TerminalFn& terminal, const std::vector<Mlp>& nets,
                                  double y0, const VectorXd& z0, const VectorXd& feat_shift,
                                  const VectorXd& feat_scale, double grad_clip = 0.0);

/// Learning rate of the two-phase schedule at a given iteration.
inline double lr_at(const BsdeConfig& cfg, long iter) {
    return iter < cfg.partial_iterations ? cfg.lr1 : cfg.lr2;
}

/// Deep solver: per-step networks approximate the control, trained by Adam
/// on the terminal mismatch, with fresh paths resampled every iteration.
class DeepBsdeSolver {
public:
    DeepBsdeSolver(const HestonParams& params, BsdeConfig cfg);

    BsdeRunResult train(BsdeDriver& driver, const TerminalFn& terminal);

    const BsdeConfig& config() const { return cfg_; }

    static VectorXd default_feat_shift(const HestonParams& p);
    static VectorXd default_feat_scale(const HestonParams& p);

private:
    HestonParams params_;
    BsdeConfig cfg_;
};

}  // namespace qh
