#pragma once

#include "qh/market.hpp"

#include <string>
#include <utility>

namespace qh {

/// Coefficients of the scalar quadratic ODE satisfied by the variance
/// loading of component j, in the time-to-maturity variable tau = T - t:
///
///     u'(tau) = a0 + a1 u + a2 u^2,   u(0) = 0,
///
/// with a0 = -mu_j^2, a1 = -(kappa_j + 2 rho_j sigma_j mu_j),
/// a2 = sigma_j^2 (1 - 2 rho_j^2) / 2, root = sqrt(a1^2 - 4 a0 a2),
/// and kappa_theta = kappa_j theta_j feeding the level integral.
struct RiccatiConstants {
    double a0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double root = 0.0;
    double kappa_theta = 0.0;
};

/// Throws std::invalid_argument when a2 == 0 (rho^2 == 1/2) or root == 0;
/// those degenerate closed forms are out of scope.
RiccatiConstants riccati_constants(const HestonParams& p, int j);

/// Closed-form level and slope coefficients at time t for component j:
/// L restricted to component j equals exp(chi0(t) + chi1(t) y_j^2).
/// chi1 solves the quadratic ODE above, chi0 integrates kappa_theta * chi1.
std::pair<double, double> chi(double t, const HestonParams& p, int j);

/// Opportunity process L(t, y_sq) = prod_j exp(chi0_j(t) + chi1_j(t) y_sq_j).
double opportunity_process(const HestonParams& p, double t, const VectorXd& y_sq);

/// Closed-form controls of the backward Riccati equation at (t, y_sq, L):
/// lambda1_j = L chi1_j sigma_j y_j rho_j,
/// lambda2_j = L chi1_j sigma_j y_j sqrt(1 - rho_j^2).
std::pair<VectorXd, VectorXd> bsre_controls(const HestonParams& p, double t,
                                            const VectorXd& y_sq, double L);

/// Dense-grid cache of the chi curves with linear interpolation, the feed
/// for simulator queries and coefficient tables. Absolute interpolation
/// error budget 1e-9 at the default resolution.
class RiccatiCurves {
public:
    explicit RiccatiCurves(const HestonParams& p, int n_points = 10001);

    double chi0_at(double t, int j) const;
    double chi1_at(double t, int j) const;

    /// Per-step effective reversion speeds under the variance-optimal
    /// measure, row n = values at t_n = n T / n_steps:
    /// kappa_tilde(n, j) = kappa_j + rho_j sigma_j mu_j - chi1_j(t_n) sigma_j^2 (1 - rho_j^2)
    MatrixXd kappa_tilde_table(int n_steps) const;

    /// CSV export with header: t, chi0_0, chi1_0, chi0_1, chi1_1, ...
    void write_csv(const std::string& filename) const;

    int n_points() const { return static_cast<int>(grid_.size()); }
    const HestonParams& params() const { return params_; }

private:
    HestonParams params_;
    VectorXd grid_;
    MatrixXd chi0_;  // n_points x m
    MatrixXd chi1_;  // n_points x m
};

}  // namespace qh
