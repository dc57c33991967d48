#include "qh/market.hpp"

#include "qh/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qh {

bool HestonParams::is_diagonal_a(double tol) const {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j && std::abs(A(i, j)) > tol) return false;
    return true;
}

HestonParams HestonParams::component(int j) const {
    if (!is_diagonal_a())
        throw std::invalid_argument("component(): requires diagonal A");
    HestonParams p;
    p.m = 1;
    p.A = MatrixXd::Constant(1, 1, A(j, j));
    p.mu_bar = VectorXd::Constant(1, mu_bar(j));
    p.r_bar = VectorXd::Constant(1, r_bar(j));
    p.kappa = VectorXd::Constant(1, kappa(j));
    p.theta = VectorXd::Constant(1, theta(j));
    p.sigma = VectorXd::Constant(1, sigma(j));
    p.rho = VectorXd::Constant(1, rho(j));
    p.s0 = VectorXd::Constant(1, s0(j));
    p.y0_sq = VectorXd::Constant(1, y0_sq(j));
    p.strike = strike;
    p.maturity = maturity;
    return p;
}

HestonParams HestonParams::reference(int m) {
    HestonParams p;
    p.m = m;
    p.A = MatrixXd::Identity(m, m);
    p.mu_bar = VectorXd::Constant(m, 0.1);
    p.r_bar = VectorXd::Zero(m);
    p.kappa = VectorXd::Constant(m, 0.5);
    p.theta = VectorXd::Constant(m, 0.05);
    p.sigma = VectorXd::Constant(m, 0.1);
    p.rho = VectorXd::Constant(m, -0.45);
    p.s0 = VectorXd::Constant(m, 100.0);
    p.y0_sq = VectorXd::Constant(m, 0.025);
    p.strike = 100.0;
    p.maturity = 1.0;
    return p;
}

std::string to_string(Measure m) {
    switch (m) {
        case Measure::P: return "P";
        case Measure::Qmv: return "Q_mv";
        case Measure::Qlr: return "Q_lr";
    }
    return "?";
}

ValidationReport validate(const HestonParams& p) {
    ValidationReport r;
    r.feller_ok = true;
    r.rho_half_ok = true;
    r.positives_ok = true;

    const int m = p.m;
    auto dim_ok = [m](const VectorXd& v) { return v.size() == m; };
    if (m < 1 || p.A.rows() != m || p.A.cols() != m || !dim_ok(p.mu_bar) ||
        !dim_ok(p.r_bar) || !dim_ok(p.kappa) || !dim_ok(p.theta) ||
        !dim_ok(p.sigma) || !dim_ok(p.rho) || !dim_ok(p.s0) || !dim_ok(p.y0_sq)) {
        r.positives_ok = false;
        r.feller_ok = false;
        r.rho_half_ok = false;
        r.a_invertible = false;
        r.failures.push_back("dimension mismatch in parameter vectors");
        return r;
    }

    for (int i = 0; i < m; ++i) {
        if (!(2.0 * p.kappa(i) * p.theta(i) > p.sigma(i) * p.sigma(i))) {
            r.feller_ok = false;
            std::ostringstream os;
            os << "Feller fails at component " << i << ": 2*" << p.kappa(i) << "*"
               << p.theta(i) << " <= " << p.sigma(i) * p.sigma(i);
            r.failures.push_back(os.str());
        }
        if (!(p.rho(i) * p.rho(i) < 0.5)) {
            r.rho_half_ok = false;
            std::ostringstream os;
            os << "rho^2 >= 1/2 at component " << i << " (rho = " << p.rho(i)
               << "); mean-variance existence condition fails";
            r.failures.push_back(os.str());
        }
        if (std::abs(p.rho(i)) > 1.0) {
            r.positives_ok = false;
            r.failures.push_back("rho outside [-1, 1] at component " + std::to_string(i));
        }
        if (!(p.y0_sq(i) > 0.0)) {
            r.positives_ok = false;
            r.failures.push_back("y0_sq not strictly positive at component " + std::to_string(i));
        }
        if (!(p.s0(i) > 0.0)) {
            r.positives_ok = false;
            r.failures.push_back("s0 not strictly positive at component " + std::to_string(i));
        }
    }
    if (!(p.strike > 0.0)) {
        r.positives_ok = false;
        r.failures.push_back("strike not strictly positive");
    }
    if (!(p.maturity > 0.0)) {
        r.positives_ok = false;
        r.failures.push_back("maturity not strictly positive");
    }

    Eigen::FullPivLU<MatrixXd> lu(p.A);
    r.a_invertible = lu.isInvertible();
    if (!r.a_invertible) r.failures.push_back("A is singular");

    return r;
}

MarketCoeffs coeffs_at(const HestonParams& p, const VectorXd& s, const VectorXd& y_sq) {
    if (s.size() != p.m || y_sq.size() != p.m)
        throw std::invalid_argument("coeffs_at: dimension mismatch");
    if ((y_sq.array() < 0.0).any())
        throw std::invalid_argument("coeffs_at: negative variance input");
    MarketCoeffs c;
    const VectorXd y = y_sq.array().sqrt().matrix();
    c.phi = y.cwiseProduct(p.mu_bar);
    c.sigma_t = p.A * y.asDiagonal();
    c.drift_s = s.cwiseProduct(p.A * y_sq.cwiseProduct(p.mu_bar));
    c.r_t = p.r_bar.dot(y_sq);
    return c;
}

double payoff(const VectorXd& s_terminal, const HestonParams& p) {
    if (s_terminal.size() != p.m)
        throw std::invalid_argument("payoff: dimension mismatch");
    return std::max(s_terminal.sum() - p.m * p.strike, 0.0);
}

VectorXd discounted_claim(const PathBatch& paths, const HestonParams& p) {
    TerminalBatch tb;
    tb.s_tilde = paths.s_tilde.back();
    tb.int_r = paths.int_r.back();
    return discounted_claim(tb, p);
}

VectorXd discounted_claim(const TerminalBatch& terminal, const HestonParams& p) {
    const long b = terminal.s_tilde.rows();
    VectorXd h(b);
    const double mk = static_cast<double>(p.m) * p.strike;
    for (long i = 0; i < b; ++i) {
        const double disc = std::exp(-terminal.int_r(i));
        h(i) = std::max(terminal.s_tilde.row(i).sum() - mk * disc, 0.0);
    }
    return h;
}

namespace {

struct StepContext {
    const HestonParams& p;
    const SimConfig& cfg;
    double dt;
    double sqrt_dt;
    bool diag_a;
    VectorXd a_diag;          // diagonal of A when diag_a
    VectorXd rho_c;           // sqrt(1 - rho^2)
    VectorXd keff_lr;         // kappa + rho sigma mu_bar
};

// One Euler step of the full-truncation scheme. `y_raw` is the untruncated
// CIR state; stored variance values are its positive part.
inline void euler_step(const StepContext& c, int n, const Eigen::Ref<const Eigen::RowVectorXd>& zw,
                       const Eigen::Ref<const Eigen::RowVectorXd>& zb, Eigen::RowVectorXd& s,
                       Eigen::RowVectorXd& y_raw, double& int_r, Eigen::RowVectorXd& dw_out,
                       Eigen::RowVectorXd& db_out, Eigen::RowVectorXd& y_plus) {
    const HestonParams& p = c.p;
    const int m = p.m;
    y_plus = y_raw.cwiseMax(0.0);
    const Eigen::RowVectorXd y_vol = y_plus.cwiseSqrt();

    dw_out = zw * c.sqrt_dt;
    db_out = zb * c.sqrt_dt;

    // asset update: s *= 1 + drift dt + (A diag(y_vol) dW)
    Eigen::RowVectorXd shock(m);
    Eigen::RowVectorXd drift = Eigen::RowVectorXd::Zero(m);
    if (c.diag_a) {
        shock = c.a_diag.transpose().cwiseProduct(y_vol).cwiseProduct(dw_out);
        if (c.cfg.measure == Measure::P)
            drift = c.a_diag.transpose().cwiseProduct(y_plus).cwiseProduct(p.mu_bar.transpose());
    } else {
        shock = (p.A * y_vol.cwiseProduct(dw_out).transpose()).transpose();
        if (c.cfg.measure == Measure::P)
            drift = (p.A * y_plus.cwiseProduct(p.mu_bar.transpose()).transpose()).transpose();
    }
    for (int j = 0; j < m; ++j) {
        const double growth = 1.0 + drift(j) * c.dt + shock(j);
        // guards the positivity invariant at extreme draws
        s(j) *= std::max(growth, 1e-12);
    }

    // variance update with measure-dependent effective reversion speed
    for (int j = 0; j < m; ++j) {
        double keff;
        switch (c.cfg.measure) {
            case Measure::P: keff = p.kappa(j); break;
            case Measure::Qlr: keff = c.keff_lr(j); break;
            case Measure::Qmv: keff = (*c.cfg.kappa_tilde)(n, j); break;
            default: keff = p.kappa(j); break;
        }
        const double drift_v = p.kappa(j) * p.theta(j) - keff * y_plus(j);
        const double diff_v = p.sigma(j) * y_vol(j) * (p.rho(j) * dw_out(j) + c.rho_c(j) * db_out(j));
        y_raw(j) += drift_v * c.dt + diff_v;
    }

    int_r += p.r_bar.dot(y_plus.transpose()) * c.dt;
}

StepContext make_context(const HestonParams& p, const SimConfig& cfg) {
    if (cfg.batch <= 0 || cfg.n_steps <= 0)
        throw std::invalid_argument("simulate: batch and n_steps must be positive");
    const ValidationReport v = validate(p);
    if (!v.positives_ok || !v.a_invertible)
        throw std::invalid_argument("simulate: invalid parameters: " +
                                    (v.failures.empty() ? std::string("unknown") : v.failures.front()));
    if (cfg.measure == Measure::Qmv) {
        if (!p.is_diagonal_a())
            throw std::invalid_argument("simulate: Q_mv requires diagonal A");
        if (cfg.kappa_tilde == nullptr || cfg.kappa_tilde->rows() != cfg.n_steps ||
            cfg.kappa_tilde->cols() != p.m)
            throw std::invalid_argument("simulate: Q_mv requires a n_steps x m kappa_tilde table");
    }
    StepContext c{p, cfg, p.maturity / cfg.n_steps, 0.0, p.is_diagonal_a(), {}, {}, {}};
    c.sqrt_dt = std::sqrt(c.dt);
    if (c.diag_a) c.a_diag = p.A.diagonal();
    c.rho_c = (1.0 - p.rho.array().square()).sqrt().matrix();
    c.keff_lr = p.kappa + p.rho.cwiseProduct(p.sigma).cwiseProduct(p.mu_bar);
    return c;
}

// Draw the full per-path normal table: (2 n_steps) x m, rows alternate (zw, zb).
// Streams are keyed per (seed, tag, path, component); antithetic odd paths
// negate the draws of the preceding even path.
inline void draw_path_normals(const SimConfig& cfg, int m, int n_steps, long path_index,
                              MatrixXd& z) {
    const long key_path = cfg.antithetic ? (path_index / 2) : path_index;
    const double sign = (cfg.antithetic && (path_index % 2 == 1)) ? -1.0 : 1.0;
    for (int j = 0; j < m; ++j) {
        Rng rng({cfg.seed, cfg.stream_tag,
                 static_cast<std::uint64_t>(cfg.path_offset + key_path),
                 static_cast<std::uint64_t>(cfg.component_offset + j)});
        for (int n = 0; n < n_steps; ++n) {
            z(2 * n, j) = sign * rng.next_normal();
            z(2 * n + 1, j) = sign * rng.next_normal();
        }
    }
}

}  // namespace

PathBatch simulate(const HestonParams& p, const SimConfig& cfg) {
    const StepContext c = make_context(p, cfg);
    const int m = p.m;
    const int N = cfg.n_steps;
    const long B = cfg.batch;

    PathBatch out;
    out.n_steps = N;
    out.m = m;
    out.dt = c.dt;
    out.measure = cfg.measure;
    out.s_tilde.assign(N + 1, MatrixXd(B, m));
    out.y_sq.assign(N + 1, MatrixXd(B, m));
    out.dw.assign(N, MatrixXd(B, m));
    out.db.assign(N, MatrixXd(B, m));
    out.int_r.assign(N + 1, VectorXd(B));

    MatrixXd z(2 * N, m);
    Eigen::RowVectorXd s(m), y_raw(m), dw(m), db(m), y_plus(m);
    for (long b = 0; b < B; ++b) {
        draw_path_normals(cfg, m, N, b, z);
        s = p.s0.transpose();
        y_raw = p.y0_sq.transpose();
        double int_r = 0.0;
        out.s_tilde[0].row(b) = s;
        out.y_sq[0].row(b) = y_raw.cwiseMax(0.0);
        out.int_r[0](b) = 0.0;
        for (int n = 0; n < N; ++n) {
            euler_step(c, n, z.row(2 * n), z.row(2 * n + 1), s, y_raw, int_r, dw, db, y_plus);
            out.dw[n].row(b) = dw;
            out.db[n].row(b) = db;
            out.s_tilde[n + 1].row(b) = s;
            out.y_sq[n + 1].row(b) = y_raw.cwiseMax(0.0);
            out.int_r[n + 1](b) = int_r;
        }
    }
    return out;
}

PathBatch simulate(const HestonParams& p, int n_steps, long batch_size, std::uint64_t seed,
                   Measure measure, const MatrixXd* kappa_tilde) {
    SimConfig cfg;
    cfg.batch = batch_size;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    cfg.measure = measure;
    cfg.kappa_tilde = kappa_tilde;
    return simulate(p, cfg);
}

TerminalBatch simulate_terminal(const HestonParams& p, const SimConfig& cfg) {
    const StepContext c = make_context(p, cfg);
    const int m = p.m;
    const int N = cfg.n_steps;
    const long B = cfg.batch;

    TerminalBatch out;
    out.s_tilde.resize(B, m);
    out.y_sq.resize(B, m);
    out.int_r.resize(B);

    MatrixXd z(2 * N, m);
    Eigen::RowVectorXd s(m), y_raw(m), dw(m), db(m), y_plus(m);
    for (long b = 0; b < B; ++b) {
        draw_path_normals(cfg, m, N, b, z);
        s = p.s0.transpose();
        y_raw = p.y0_sq.transpose();
        double int_r = 0.0;
        for (int n = 0; n < N; ++n)
            euler_step(c, n, z.row(2 * n), z.row(2 * n + 1), s, y_raw, int_r, dw, db, y_plus);
        out.s_tilde.row(b) = s;
        out.y_sq.row(b) = y_raw.cwiseMax(0.0);
        out.int_r(b) = int_r;
    }
    return out;
}

void write_paths_csv(const PathBatch& paths, const std::string& filename) {
    std::ofstream os(filename);
    if (!os) throw std::runtime_error("cannot open " + filename);
    os << "path,step,asset,s_tilde,y_sq,dw,db\n";
    const long B = paths.batch();
    for (long b = 0; b < B; ++b)
        for (int n = 0; n <= paths.n_steps; ++n)
            for (int j = 0; j < paths.m; ++j) {
                os << b << ',' << n << ',' << j << ',' << paths.s_tilde[n](b, j) << ','
                   << paths.y_sq[n](b, j) << ',';
                if (n < paths.n_steps)
                    os << paths.dw[n](b, j) << ',' << paths.db[n](b, j);
                else
                    os << ',';
                os << '\n';
            }
}

}  // namespace qh
