#pragma once

#include "qh/bsde.hpp"
#include "qh/hedge.hpp"
#include "qh/market.hpp"

namespace qh {

/// Driver of the linear decomposition equation, forward form
///   X_{n+1} = X_n + eta1 . phi dt + eta . dW,
/// terminal value the discounted claim.
class LrmDriver final : public BsdeDriver {
public:
    explicit LrmDriver(const HestonParams& p) : p_(p) {}

    void eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z, VectorXd& h,
              VectorXd* dh_dy, MatrixXd* dh_dz) override;

private:
    HestonParams p_;
};

struct LrmConfig {
    BsdeConfig bsde;
    long strategy_batch = 0;  // 0: reuse bsde.eval_batch
};

struct LrmRun {
    BsdeRunResult bsde;
    HedgeRun hedge;              // price process, strategy, cash and cost
    double cost_drift_mean = 0.0;      // mean(C_N - C_0), a martingale check
    double cost_drift_se = 0.0;
};

/// Train the linear decomposition equation; only Feller-level validation
/// is required.
BsdeRunResult solve_fs_bsde(const HestonParams& p, const BsdeConfig& cfg);

/// One-step hedge ratio inverting eta1 = diag(s) sigma^T xi,
///   xi = A^-T ( eta1 / (y_vol s) ),
/// batched over rows.
MatrixXd lrm_hedge_ratio(const HestonParams& p, const MatrixXd& s, const MatrixXd& y_sq,
                         const MatrixXd& eta1);

/// Strategy, cash account and discretized cost process on the given paths:
/// xi_n inverts eta1 = diag(s) sigma^T xi, psi_n = X_n - xi_n . s_n, and
/// C_{n+1} = X_{n+1} - sum_{k<=n} xi_k . (s_{k+1} - s_k).
HedgeRun extract_lrm_strategy(const HestonParams& p, const BsdeRunResult& run,
                              const PathBatch& paths);

LrmRun solve_lrm(const HestonParams& p, const LrmConfig& cfg);

}  // namespace qh
