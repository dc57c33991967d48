#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace qh {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Multi-asset Heston market: m discounted assets mixed through A, each
/// driven by its own square-root variance factor.
struct HestonParams {
    int m = 1;
    MatrixXd A;        // m x m mixing matrix
    VectorXd mu_bar;   // drift loadings per unit variance
    VectorXd r_bar;    // short-rate loadings, r_t = r_bar . y_sq
    VectorXd kappa;    // variance mean-reversion speeds
    VectorXd theta;    // long-run variances
    VectorXd sigma;    // vol-of-vol
    VectorXd rho;      // leverage correlations, in [-1, 1]
    VectorXd s0;       // initial discounted prices
    VectorXd y0_sq;    // initial variances
    double strike = 100.0;
    double maturity = 1.0;

    bool is_diagonal_a(double tol = 0.0) const;

    // single-asset sub-model for component j (diagonal A only)
    HestonParams component(int j) const;

    // benchmark configuration used throughout the experiments: A = I,
    // mu_bar = 0.1, kappa = 0.5, theta = 0.05, sigma = 0.1, rho = -0.45,
    // s0 = 100, y0_sq = 0.025, K = 100, T = 1
    static HestonParams reference(int m);
};

struct ValidationReport {
    bool feller_ok = false;       // 2 kappa_i theta_i > sigma_i^2
    bool rho_half_ok = false;     // rho_i^2 < 1/2 (needed for MVH existence)
    bool a_invertible = false;
    bool positives_ok = false;    // y0_sq > 0, s0 > 0, K > 0, T > 0, dims consistent
    std::vector<std::string> failures;

    bool ok_for_lrm() const { return feller_ok && a_invertible && positives_ok; }
    bool ok_for_mvh() const { return ok_for_lrm() && rho_half_ok; }
};

ValidationReport validate(const HestonParams& p);

enum class Measure { P, Qmv, Qlr };

std::string to_string(Measure m);

/// A batch of discretized forward trajectories on the uniform grid t_n = n dt.
/// Slice n of s_tilde / y_sq is batch x m; dw / db hold the Brownian
/// increments over [t_n, t_{n+1}].
struct PathBatch {
    int n_steps = 0;
    int m = 0;
    double dt = 0.0;
    Measure measure = Measure::P;
    std::vector<MatrixXd> s_tilde;  // n_steps + 1 slices
    std::vector<MatrixXd> y_sq;     // n_steps + 1 slices, >= 0 (truncated values)
    std::vector<MatrixXd> dw;       // n_steps slices
    std::vector<MatrixXd> db;       // n_steps slices
    std::vector<VectorXd> int_r;    // n_steps + 1 slices: int_0^{t_n} r ds

    long batch() const { return s_tilde.empty() ? 0 : s_tilde[0].rows(); }
    double t(int n) const { return n * dt; }
};

struct SimConfig {
    long batch = 0;
    int n_steps = 0;
    std::uint64_t seed = 0;
    Measure measure = Measure::P;
    std::uint64_t stream_tag = 0x1003;
    long path_offset = 0;      // global index of the first path
    int component_offset = 0;  // stream key offset of component 0
    bool antithetic = false;   // odd paths reuse the draws of the previous even path, negated
    // per-step effective variance mean reversion under Qmv,
    // kappa_tilde(n, j) = kappa_j + rho_j sigma_j mu_j - chi1_j(t_n) sigma_j^2 (1 - rho_j^2);
    // must be supplied by the Riccati module when measure == Qmv
    const MatrixXd* kappa_tilde = nullptr;
};

PathBatch simulate(const HestonParams& p, const SimConfig& cfg);

// convenience overload with default stream layout
PathBatch simulate(const HestonParams& p, int n_steps, long batch_size,
                   std::uint64_t seed, Measure measure,
                   const MatrixXd* kappa_tilde = nullptr);

/// Terminal-state-only simulation (same stepping and same draws as simulate,
/// without materializing the paths). Used by the Monte Carlo pricer.
struct TerminalBatch {
    MatrixXd s_tilde;  // batch x m
    MatrixXd y_sq;     // batch x m
    VectorXd int_r;    // batch
};

TerminalBatch simulate_terminal(const HestonParams& p, const SimConfig& cfg);

/// Market coefficients at a given state.
struct MarketCoeffs {
    VectorXd phi;      // market price of risk, diag(y) mu_bar
    MatrixXd sigma_t;  // A diag(y)
    VectorXd drift_s;  // diag(s) A diag(y_sq) mu_bar
    double r_t = 0.0;  // r_bar . y_sq
};

MarketCoeffs coeffs_at(const HestonParams& p, const VectorXd& s, const VectorXd& y_sq);

/// Plain payoff g(s) = max(sum_i s_i - m K, 0).
double payoff(const VectorXd& s_terminal, const HestonParams& p);

/// Discounted claim per path: exp(-int_r_T) * max(sum_i S_i(T) - m K, 0)
/// evaluated from discounted terminal prices, i.e.
/// max(sum_i s_tilde_i(T) - m K exp(-int_r_T), 0). Identical to payoff when
/// r_bar = 0.
VectorXd discounted_claim(const PathBatch& paths, const HestonParams& p);
VectorXd discounted_claim(const TerminalBatch& terminal, const HestonParams& p);

/// Dump a PathBatch as CSV with header (path, step, asset, field columns).
void write_paths_csv(const PathBatch& paths, const std::string& filename);

}  // namespace qh
