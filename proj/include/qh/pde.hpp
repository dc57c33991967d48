#pragma once

#include "qh/hedge.hpp"
#include "qh/market.hpp"

#include <functional>
#include <vector>

namespace qh {

enum class PdeMode { Mvh, Lrm };

/// Time-dependent coefficients of the one-asset pricing PDE. Both modes
/// keep kappa_t * theta_t = kappa * theta; the modes differ only through
/// the variance-loading curve entering kappa_t.
struct PdeCoeffs {
    PdeMode mode = PdeMode::Lrm;
    double kappa = 0.0;
    double theta = 0.0;
    double base = 0.0;                         // kappa + rho sigma mu
    double vol_factor = 0.0;                   // sigma^2 (1 - rho^2)
    std::function<double(double)> chi1;        // of model time t; zero for Lrm

    double kappa_t(double t) const { return base - chi1(t) * vol_factor; }
    double theta_t(double t) const { return kappa * theta / kappa_t(t); }
};

PdeCoeffs make_pde_coeffs(const HestonParams& p, PdeMode mode);

struct PdeGridSpec {
    int m_s = 200;     // point counts, >= 16
    int m_y = 100;
    double s_mult = 8.0;    // domain [0, s_mult * K]
    double y_max = 5.0;
    int n_time = 200;
    int store_stride = 0;   // 0: store every marched slice
};

struct PdeMesh {
    VectorXd s;  // m_s nodes, s[0] = 0, s[m_s-1] = s_mult K, sinh-concentrated at K
    VectorXd y;  // m_y nodes, y[0] = 0, y[m_y-1] = y_max, sinh-concentrated at 0
};

/// Sinh-stretched meshes with concentration K/5 in s and y_max/500 in y.
PdeMesh build_grid(double strike, const PdeGridSpec& spec);

struct PdeSolution {
    PdeMesh mesh;
    PdeGridSpec spec;
    PdeCoeffs coeffs;
    HestonParams params;
    double maturity = 0.0;
    double dt = 0.0;                  // marching step in time-to-maturity
    std::vector<MatrixXd> slices;     // stored slices, m_y x m_s (row = y index)
    std::vector<double> slice_tau;    // time-to-maturity of each stored slice
    std::vector<int> slice_step;

    /// Index of the stored slice at time-to-maturity tau (must be stored).
    int slice_at_tau(double tau) const;

    /// Value at t = 0, i.e. tau = maturity, interpolated at the spot state.
    double price_at(double y_sq, double s) const;
};

struct PdeQuery {
    double f = 0.0;
    double f_y = 0.0;  // derivative in the variance coordinate
    double f_s = 0.0;
    bool clamped = false;
};

/// Bilinear interpolation of the value and of nodal central-difference
/// derivative grids (one-sided at the domain edges). Queries outside the
/// domain are clamped and flagged.
PdeQuery interpolate(const PdeSolution& sol, int slice_idx, double y_sq, double s);

/// Marches the initial payoff slice to tau = T with the modified
/// Craig-Sneyd scheme (theta = 1/3, mixed term explicit). The variance
/// coordinate is the variance itself. Requires m = 1 parameters.
PdeSolution solve_pde(const HestonParams& p, PdeMode mode, const PdeGridSpec& spec);

/// Same with an injected variance-loading curve (test hook; pass a zero
/// curve to reproduce Lrm-mode coefficients in Mvh mode bitwise).
PdeSolution solve_pde(const HestonParams& p, PdeMode mode, const PdeGridSpec& spec,
                      const std::function<double(double)>& chi1_override);

/// Price/strategy benchmark along simulated paths. For Mvh mode the
/// correction strategy and wealth recursion apply; for Lrm the pure
/// delta-plus-vega form. Paths must share the solution's parameters and
/// the marching grid must refine the path grid.
HedgeRun benchmark_strategies(const PdeSolution& sol, const PathBatch& paths, PdeMode mode);

}  // namespace qh
