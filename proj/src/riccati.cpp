#include "qh/riccati.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace qh {

RiccatiConstants riccati_constants(const HestonParams& p, int j) {
    if (j < 0 || j >= p.m) throw std::invalid_argument("riccati_constants: bad component");
    RiccatiConstants c;
    const double mu = p.mu_bar(j), kap = p.kappa(j), sig = p.sigma(j), rho = p.rho(j);
    c.a0 = -mu * mu;
    c.a1 = -kap - 2.0 * rho * sig * mu;
    c.a2 = 0.5 * sig * sig * (1.0 - 2.0 * rho * rho);
    const double disc = c.a1 * c.a1 - 4.0 * c.a0 * c.a2;
    if (c.a2 == 0.0)
        throw std::invalid_argument("riccati_constants: rho^2 = 1/2 is unsupported (a2 = 0)");
    if (disc <= 0.0)
        throw std::invalid_argument("riccati_constants: vanishing discriminant is unsupported");
    c.root = std::sqrt(disc);
    c.kappa_theta = kap * p.theta(j);
    return c;
}

namespace {

// Stable evaluation: with e = exp(-root tau) in (0, 1],
//   chi1 = -a1/(2 a2) + root/(2 a2) * ((a1 + root) e + (a1 - root))
//                                   / ((a1 + root) e - (a1 - root))
//   chi0 = kt * ( -a1 tau / (2 a2)
//                 - [ root tau / 2 + log(((a1+root) e - (a1-root)) / (2 root)) ] / a2 )
// No overflow for large root * tau since only the decaying exponential appears.
std::pair<double, double> chi_from_constants(const RiccatiConstants& c, double tau) {
    const double e = std::exp(-c.root * tau);
    const double hi = c.a1 + c.root;
    const double lo = c.a1 - c.root;
    const double den = hi * e - lo;
    const double chi1 = -c.a1 / (2.0 * c.a2) + c.root / (2.0 * c.a2) * (hi * e + lo) / den;
    const double log_term = 0.5 * c.root * tau + std::log(den / (2.0 * c.root));
    const double chi0 = c.kappa_theta * (-c.a1 / (2.0 * c.a2) * tau - log_term / c.a2);
    return {chi0, chi1};
}

}  // namespace

std::pair<double, double> chi(double t, const HestonParams& p, int j) {
    if (t < 0.0 || t > p.maturity) throw std::invalid_argument("chi: t outside [0, T]");
    return chi_from_constants(riccati_constants(p, j), p.maturity - t);
}

double opportunity_process(const HestonParams& p, double t, const VectorXd& y_sq) {
    if (y_sq.size() != p.m) throw std::invalid_argument("opportunity_process: dimension mismatch");
    double log_l = 0.0;
    for (int j = 0; j < p.m; ++j) {
        const auto [c0, c1] = chi(t, p, j);
        log_l += c0 + c1 * y_sq(j);
    }
    return std::exp(log_l);
}

std::pair<VectorXd, VectorXd> bsre_controls(const HestonParams& p, double t,
                                            const VectorXd& y_sq, double L) {
    if (y_sq.size() != p.m) throw std::invalid_argument("bsre_controls: dimension mismatch");
    VectorXd l1(p.m), l2(p.m);
    for (int j = 0; j < p.m; ++j) {
        const auto [c0, c1] = chi(t, p, j);
        (void)c0;
        const double y = std::sqrt(std::max(y_sq(j), 0.0));
        l1(j) = L * c1 * p.sigma(j) * y * p.rho(j);
        l2(j) = L * c1 * p.sigma(j) * y * std::sqrt(1.0 - p.rho(j) * p.rho(j));
    }
    return {l1, l2};
}

RiccatiCurves::RiccatiCurves(const HestonParams& p, int n_points) : params_(p) {
    if (n_points < 2) throw std::invalid_argument("RiccatiCurves: n_points < 2");
    grid_ = VectorXd::LinSpaced(n_points, 0.0, p.maturity);
    chi0_.resize(n_points, p.m);
    chi1_.resize(n_points, p.m);
    for (int j = 0; j < p.m; ++j) {
        const RiccatiConstants c = riccati_constants(p, j);
        for (int i = 0; i < n_points; ++i) {
            const auto [c0, c1] = chi_from_constants(c, p.maturity - grid_(i));
            chi0_(i, j) = c0;
            chi1_(i, j) = c1;
        }
    }
}

namespace {

inline double lerp_on_grid(const VectorXd& grid, const MatrixXd& values, double t, int j) {
    const int n = static_cast<int>(grid.size());
    const double t0 = grid(0), t1 = grid(n - 1);
    if (t <= t0) return values(0, j);
    if (t >= t1) return values(n - 1, j);
    const double h = (t1 - t0) / (n - 1);
    int i = static_cast<int>((t - t0) / h);
    if (i >= n - 1) i = n - 2;
    const double w = (t - grid(i)) / (grid(i + 1) - grid(i));
    return (1.0 - w) * values(i, j) + w * values(i + 1, j);
}

}  // namespace

double RiccatiCurves::chi0_at(double t, int j) const { return lerp_on_grid(grid_, chi0_, t, j); }

double RiccatiCurves::chi1_at(double t, int j) const { return lerp_on_grid(grid_, chi1_, t, j); }

MatrixXd RiccatiCurves::kappa_tilde_table(int n_steps) const {
    const HestonParams& p = params_;
    MatrixXd kt(n_steps, p.m);
    const double dt = p.maturity / n_steps;
    for (int n = 0; n < n_steps; ++n)
        for (int j = 0; j < p.m; ++j) {
            const double c1 = chi1_at(n * dt, j);
            kt(n, j) = p.kappa(j) + p.rho(j) * p.sigma(j) * p.mu_bar(j) -
                       c1 * p.sigma(j) * p.sigma(j) * (1.0 - p.rho(j) * p.rho(j));
        }
    return kt;
}

void RiccatiCurves::write_csv(const std::string& filename) const {
    std::ofstream os(filename);
    if (!os) throw std::runtime_error("cannot open " + filename);
    os << "t";
    for (int j = 0; j < params_.m; ++j) os << ",chi0_" << j << ",chi1_" << j;
    os << '\n';
    os.precision(15);
    for (int i = 0; i < grid_.size(); ++i) {
        os << grid_(i);
        for (int j = 0; j < params_.m; ++j) os << ',' << chi0_(i, j) << ',' << chi1_(i, j);
        os << '\n';
    }
}

}  // namespace qh
