#pragma once

#include "qh/bsde.hpp"
#include "qh/hedge.hpp"
#include "qh/market.hpp"

namespace qh {

/// Driver of the backward Riccati equation, forward form
///   L_{n+1} = L_n + (|phi|^2 L_n + 2 phi.z1 + z1.z1 / L_n) dt + z . dW,
/// terminal value 1. The 1/L denominator is clamped at `floor`; activations
/// are counted since a positive solution should never need the clamp.
class BsreDriver final : public BsdeDriver {
public:
    explicit BsreDriver(const HestonParams& p, double floor = 1e-6);

    void eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z, VectorXd& h,
              VectorXd* dh_dy, MatrixXd* dh_dz) override;

    long clamp_activations() const override { return clamps_; }
    void reset_clamp_counter() override { clamps_ = 0; }

private:
    HestonParams p_;
    double floor_;
    long clamps_ = 0;
};

/// Driver of the hedging-portfolio equation in the extended market,
///   X_{n+1} = X_n + (phi.eta1 - lambda2.eta2 / L_n) / S0_n dt + eta . dW,
/// with (L, lambda2) frozen from a trained Riccati run and re-rolled on
/// every batch.
class ExtendedMvhDriver final : public BsdeDriver {
public:
    ExtendedMvhDriver(const HestonParams& p, const BsdeRunResult& bsre, double floor = 1e-6);

    void begin_batch(const PathBatch& paths) override;
    void eval(int n, const PathBatch& paths, const VectorXd& y, const MatrixXd& z, VectorXd& h,
              VectorXd* dh_dy, MatrixXd* dh_dz) override;

    long clamp_activations() const override { return clamps_; }
    void reset_clamp_counter() override { clamps_ = 0; }

    const MatrixXd& frozen_l() const { return l_; }

private:
    HestonParams p_;
    const BsdeRunResult* bsre_;
    BsreDriver inner_;
    double floor_;
    long clamps_ = 0;
    MatrixXd l_;                        // batch x (N+1)
    std::vector<MatrixXd> lambda2_;     // per step, batch x m
};

struct MvhConfig {
    BsdeConfig bsre;
    BsdeConfig extended;
    double clamp_floor = 1e-6;
    double alarm_band = 0.05;   // alarm when L leaves (0, 1 + band]
    double alarm_rate = 0.01;   // of (path, step) pairs on the eval batch
    bool allow_unreliable_bsre = false;
    long strategy_batch = 0;    // 0: reuse extended.eval_batch
};

struct MvhRun {
    BsdeRunResult bsre;
    BsdeRunResult extended;
    double clamp_rate = 0.0;
    bool unreliable_bsre = false;
    HedgeRun hedge;
    double terminal_hedge_mse = 0.0;  // mean (V_N - claim)^2
};

/// First stage: train the Riccati equation (terminal 1). Requires
/// rho_i^2 < 1/2 (validated).
BsdeRunResult solve_bsre(const HestonParams& p, const BsdeConfig& cfg, double clamp_floor = 1e-6);

/// Fraction of eval (path, step) pairs with L outside (floor, 1 + band].
double bsre_clamp_rate(const BsdeRunResult& bsre, double floor, double band);

/// Second stage: train the extended-market equation with the claim as
/// terminal target and the first stage frozen. Refuses aborted inputs.
BsdeRunResult solve_extended_bsde(const HestonParams& p, const BsdeConfig& cfg,
                                  const BsdeRunResult& bsre, double clamp_floor = 1e-6);

/// One-step hedge ratio,
///   xi = diag(s)^-1 ( (sigma^-1)^T [phi + lambda1 / L] (X - V) + (sigma^-1)^T eta1 ),
/// batched over rows; rows with a vanishing variance come out non-finite
/// and are handled by the caller's carry-forward rule.
MatrixXd mvh_hedge_ratio(const HestonParams& p, const MatrixXd& s, const MatrixXd& y_sq,
                         const MatrixXd& lambda1, const VectorXd& l, const MatrixXd& eta1,
                         const VectorXd& gap, double clamp_floor = 1e-6);

/// Optimal strategy, cash account and wealth recursion on the given paths.
HedgeRun extract_mvh_strategy(const HestonParams& p, const BsdeRunResult& bsre,
                              const BsdeRunResult& extended, const PathBatch& paths,
                              double clamp_floor = 1e-6);

/// Full pipeline: both trainings plus strategy extraction on a fresh batch.
MvhRun solve_mvh(const HestonParams& p, const MvhConfig& cfg);

}  // namespace qh
