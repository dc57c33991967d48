#include "qh/pde.hpp"

#include "qh/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace qh {

namespace {

struct Triple {
    double lo = 0.0, mid = 0.0, hi = 0.0;
};

// second-order stencils on a non-uniform mesh
Triple central_1(double hm, double hp) {
    return {-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))};
}

Triple central_2(double hm, double hp) {
    return {2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))};
}

// at x0 toward x1, x2 with h1 = x1-x0, h2 = x2-x1; entries on (x0, x1, x2)
Triple forward_1(double h1, double h2) {
    return {-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2),
            -h1 / (h2 * (h1 + h2))};
}

// at x0 toward x-1, x-2 with h1 = x0-x_{-1}, h2 = x_{-1}-x_{-2}; entries on (x0, x-1, x-2)
Triple backward_1(double h1, double h2) {
    return {(2.0 * h1 + h2) / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2),
            h1 / (h2 * (h1 + h2))};
}

void thomas_solve(VectorXd& lo, VectorXd& di, VectorXd& up, VectorXd& rhs) {
    const long n = di.size();
    for (long k = 1; k < n; ++k) {
        const double w = lo(k) / di(k - 1);
        di(k) -= w * up(k - 1);
        rhs(k) -= w * rhs(k - 1);
    }
    rhs(n - 1) /= di(n - 1);
    for (long k = n - 2; k >= 0; --k) rhs(k) = (rhs(k) - up(k) * rhs(k + 1)) / di(k);
}

// LU solve of a (kl=2, ku=2) banded system without pivoting; band(r, 2+off)
// holds the entry at column r+off
void band_solve(MatrixXd band, VectorXd& rhs) {
    const long n = band.rows();
    for (long k = 0; k < n - 1; ++k) {
        for (long r = k + 1; r <= std::min(k + 2, n - 1); ++r) {
            const double w = band(r, 2 + k - r) / band(k, 2);
            if (w == 0.0) continue;
            for (long c = k; c <= std::min(k + 2, n - 1); ++c)
                band(r, 2 + c - r) -= w * band(k, 2 + c - k);
            rhs(r) -= w * rhs(k);
        }
    }
    for (long r = n - 1; r >= 0; --r) {
        double acc = rhs(r);
        for (long c = r + 1; c <= std::min(r + 2, n - 1); ++c)
            acc -= band(r, 2 + c - r) * rhs(c);
        rhs(r) = acc / band(r, 2);
    }
}

enum class DriftKind { Fwd, Cen, Bwd };

// Spatial discretization on the truncated domain. Unknowns exclude the
// Dirichlet boundaries s = 0 and y = y_max; the Neumann condition f_s = 1
// at s = s_max enters through a mirrored ghost node.
struct PdeOperator {
    const HestonParams* p = nullptr;
    PdeMesh mesh;
    int ms = 0, my = 0, ns = 0, nv = 0;  // ns = ms-1 unknown columns, nv = my-1 rows
    double sig = 0.0, rho = 0.0, kap_theta = 0.0;

    VectorXd s1l, s1d, s1u;  // 1/2 s_i^2 d2/ds2 stencils, index i-1
    double ghost_b = 0.0;    // inhomogeneous Neumann contribution at i = ms-1

    VectorXd cs1l, cs1d, cs1u;  // d/ds central triplets, index i-1 (i = 1..ms-2)
    VectorXd cv1l, cv1d, cv1u;  // d/dy central triplets, index j (j = 1..my-2)

    VectorXd d2l, d2d, d2u;  // 1/2 sig^2 y_j d2/dy2 stencils, index j
    std::vector<DriftKind> kind;
    VectorXd dr0, dr1, dr2;  // drift stencil entries in stencil-local order

    long idx(int i, int j) const { return static_cast<long>(j) * ns + (i - 1); }

    void build(const HestonParams& params, const PdeMesh& m_in) {
        p = &params;
        mesh = m_in;
        ms = static_cast<int>(mesh.s.size());
        my = static_cast<int>(mesh.y.size());
        ns = ms - 1;
        nv = my - 1;
        sig = params.sigma(0);
        rho = params.rho(0);
        kap_theta = params.kappa(0) * params.theta(0);

        s1l.setZero(ns);
        s1d.setZero(ns);
        s1u.setZero(ns);
        cs1l.setZero(ns);
        cs1d.setZero(ns);
        cs1u.setZero(ns);
        for (int i = 1; i < ms; ++i) {
            const double hm = mesh.s(i) - mesh.s(i - 1);
            const double a = 0.5 * mesh.s(i) * mesh.s(i);
            if (i < ms - 1) {
                const double hp = mesh.s(i + 1) - mesh.s(i);
                const Triple t2 = central_2(hm, hp);
                s1l(i - 1) = a * t2.lo;
                s1d(i - 1) = a * t2.mid;
                s1u(i - 1) = a * t2.hi;
                const Triple t1 = central_1(hm, hp);
                cs1l(i - 1) = t1.lo;
                cs1d(i - 1) = t1.mid;
                cs1u(i - 1) = t1.hi;
            } else {
                // ghost node mirrored at spacing hm, value f_{i-1} + 2 hm
                const Triple t2 = central_2(hm, hm);
                s1l(i - 1) = a * (t2.lo + t2.hi);
                s1d(i - 1) = a * t2.mid;
                s1u(i - 1) = 0.0;
                ghost_b = a * t2.hi * 2.0 * hm;
            }
        }

        cv1l.setZero(nv);
        cv1d.setZero(nv);
        cv1u.setZero(nv);
        d2l.setZero(nv);
        d2d.setZero(nv);
        d2u.setZero(nv);
        kind.assign(nv, DriftKind::Cen);
        dr0.setZero(nv);
        dr1.setZero(nv);
        dr2.setZero(nv);
        for (int j = 0; j < nv; ++j) {
            if (j == 0) {
                const double h1 = mesh.y(1) - mesh.y(0);
                const double h2 = mesh.y(2) - mesh.y(1);
                const Triple t = forward_1(h1, h2);
                kind[j] = DriftKind::Fwd;
                dr0(j) = t.lo;
                dr1(j) = t.mid;
                dr2(j) = t.hi;
                continue;  // y = 0: diffusion and mixed terms vanish
            }
            const double hm = mesh.y(j) - mesh.y(j - 1);
            const double hp = mesh.y(j + 1) - mesh.y(j);
            const double a = 0.5 * sig * sig * mesh.y(j);
            const Triple t2 = central_2(hm, hp);
            d2l(j) = a * t2.lo;
            d2d(j) = a * t2.mid;
            d2u(j) = a * t2.hi;
            const Triple t1 = central_1(hm, hp);
            cv1l(j) = t1.lo;
            cv1d(j) = t1.mid;
            cv1u(j) = t1.hi;
            if (mesh.y(j) > 1.0 && j >= 2) {
                const double g1 = mesh.y(j) - mesh.y(j - 1);
                const double g2 = mesh.y(j - 1) - mesh.y(j - 2);
                const Triple t = backward_1(g1, g2);
                kind[j] = DriftKind::Bwd;
                dr0(j) = t.lo;
                dr1(j) = t.mid;
                dr2(j) = t.hi;
            } else {
                kind[j] = DriftKind::Cen;
                dr0(j) = t1.lo;
                dr1(j) = t1.mid;
                dr2(j) = t1.hi;
            }
        }
    }

    double drift_coeff(int j, double keff) const { return kap_theta - keff * mesh.y(j); }

    // A1: s-direction second-derivative block, scaled by y_j
    void apply_a1(const VectorXd& x, VectorXd& out) const {
        out.setZero(x.size());
        for (int j = 0; j < nv; ++j) {
            const double vj = mesh.y(j);
            if (vj == 0.0) continue;
            const long base = idx(1, j);
            for (int i = 1; i < ms; ++i) {
                double acc = s1d(i - 1) * x(base + i - 1);
                if (i > 1) acc += s1l(i - 1) * x(base + i - 2);
                if (i < ms - 1) acc += s1u(i - 1) * x(base + i);
                out(base + i - 1) = vj * acc;
            }
        }
    }

    void add_b1(VectorXd& out) const {
        for (int j = 0; j < nv; ++j) out(idx(ms - 1, j)) += mesh.y(j) * ghost_b;
    }

    // A2: variance-direction diffusion + drift, same coefficients for all i
    void apply_a2(const VectorXd& x, double keff, VectorXd& out) const {
        out.setZero(x.size());
        for (int j = 0; j < nv; ++j) {
            const double g = drift_coeff(j, keff);
            for (int i = 1; i < ms; ++i) {
                const long here = idx(i, j);
                double acc = 0.0;
                if (j > 0) {
                    acc += d2d(j) * x(here);
                    acc += d2l(j) * x(idx(i, j - 1));
                    if (j + 1 < nv) acc += d2u(j) * x(idx(i, j + 1));
                }
                switch (kind[j]) {
                    case DriftKind::Fwd:
                        acc += g * (dr0(j) * x(here) + dr1(j) * x(idx(i, j + 1)) +
                                    dr2(j) * x(idx(i, j + 2)));
                        break;
                    case DriftKind::Cen:
                        acc += g * (dr1(j) * x(here) + dr0(j) * x(idx(i, j - 1)));
                        if (j + 1 < nv) acc += g * dr2(j) * x(idx(i, j + 1));
                        break;
                    case DriftKind::Bwd:
                        acc += g * (dr0(j) * x(here) + dr1(j) * x(idx(i, j - 1)) +
                                    dr2(j) * x(idx(i, j - 2)));
                        break;
                }
                out(here) = acc;
            }
        }
    }

    // couplings of A2 to the Dirichlet row y = y_max, value s_i
    void add_b2(double keff, VectorXd& out) const {
        const int j = nv - 1;
        if (j < 1) return;
        double cdiff = d2u(j);
        if (kind[j] == DriftKind::Cen) cdiff += drift_coeff(j, keff) * dr2(j);
        for (int i = 1; i < ms; ++i) out(idx(i, j)) += cdiff * mesh.s(i);
    }

    // A0: mixed derivative rho sig s y f_sy, 9-point tensor stencil;
    // vanishes at y = 0 and at s = s_max (f_s is constant there)
    void apply_a0(const VectorXd& x, VectorXd& out) const {
        out.setZero(x.size());
        for (int j = 1; j < nv; ++j) {
            for (int i = 1; i < ms - 1; ++i) {
                const double c = rho * sig * mesh.s(i) * mesh.y(j);
                double acc = 0.0;
                for (int b = -1; b <= 1; ++b) {
                    const int jj = j + b;
                    if (jj >= nv) continue;  // Dirichlet handled in b0
                    const double cb = (b == -1) ? cv1l(j) : (b == 0 ? cv1d(j) : cv1u(j));
                    double row = cs1d(i - 1) * x(idx(i, jj));
                    if (i > 1) row += cs1l(i - 1) * x(idx(i - 1, jj));
                    row += cs1u(i - 1) * x(idx(i + 1, jj));
                    acc += cb * row;
                }
                out(idx(i, j)) = c * acc;
            }
        }
    }

    void add_b0(VectorXd& out) const {
        const int j = nv - 1;
        if (j < 1) return;
        for (int i = 1; i < ms - 1; ++i) {
            const double c = rho * sig * mesh.s(i) * mesh.y(j);
            const double row = cs1l(i - 1) * mesh.s(i - 1) + cs1d(i - 1) * mesh.s(i) +
                               cs1u(i - 1) * mesh.s(i + 1);
            out(idx(i, j)) += c * cv1u(j) * row;
        }
    }

    // solve (I - w A1) x = rhs, tridiagonal per y-row
    void solve_dir1(double w, VectorXd& rhs) const {
        VectorXd lo(ms - 1), di(ms - 1), up(ms - 1), r(ms - 1);
        for (int j = 0; j < nv; ++j) {
            const double vj = mesh.y(j);
            if (vj == 0.0) continue;  // identity row
            const long base = idx(1, j);
            for (int i = 1; i < ms; ++i) {
                lo(i - 1) = -w * vj * s1l(i - 1);
                di(i - 1) = 1.0 - w * vj * s1d(i - 1);
                up(i - 1) = -w * vj * s1u(i - 1);
                r(i - 1) = rhs(base + i - 1);
            }
            thomas_solve(lo, di, up, r);
            for (int i = 1; i < ms; ++i) rhs(base + i - 1) = r(i - 1);
        }
    }

    // solve (I - w A2(keff)) x = rhs, banded per s-column
    void solve_dir2(double w, double keff, VectorXd& rhs) const {
        MatrixXd band = MatrixXd::Zero(nv, 5);
        for (int j = 0; j < nv; ++j) {
            band(j, 2) = 1.0;
            const double g = drift_coeff(j, keff);
            if (j > 0) {
                band(j, 2) -= w * d2d(j);
                band(j, 1) -= w * d2l(j);
                if (j + 1 < nv) band(j, 3) -= w * d2u(j);
            }
            switch (kind[j]) {
                case DriftKind::Fwd:
                    band(j, 2) -= w * g * dr0(j);
                    band(j, 3) -= w * g * dr1(j);
                    band(j, 4) -= w * g * dr2(j);
                    break;
                case DriftKind::Cen:
                    band(j, 2) -= w * g * dr1(j);
                    band(j, 1) -= w * g * dr0(j);
                    if (j + 1 < nv) band(j, 3) -= w * g * dr2(j);
                    break;
                case DriftKind::Bwd:
                    band(j, 2) -= w * g * dr0(j);
                    band(j, 1) -= w * g * dr1(j);
                    band(j, 0) -= w * g * dr2(j);
                    break;
            }
        }
        VectorXd col(nv);
        for (int i = 1; i < ms; ++i) {
            for (int j = 0; j < nv; ++j) col(j) = rhs(idx(i, j));
            band_solve(band, col);
            for (int j = 0; j < nv; ++j) rhs(idx(i, j)) = col(j);
        }
    }
};

VectorXd payoff_slice(const PdeMesh& mesh, double strike) {
    const int ms = static_cast<int>(mesh.s.size());
    VectorXd pay(ms);
    for (int i = 0; i < ms; ++i) pay(i) = std::max(mesh.s(i) - strike, 0.0);
    // cell average across the kink smooths the initial data
    for (int i = 1; i < ms - 1; ++i) {
        const double lo = 0.5 * (mesh.s(i - 1) + mesh.s(i));
        const double hi = 0.5 * (mesh.s(i) + mesh.s(i + 1));
        if (lo <= strike && strike <= hi) {
            pay(i) = 0.5 * (hi - strike) * (hi - strike) / (hi - lo);
            break;
        }
    }
    return pay;
}

MatrixXd expand_slice(const PdeOperator& op, const VectorXd& f, bool impose_far_field) {
    MatrixXd g(op.my, op.ms);
    g.col(0).setZero();
    for (int j = 0; j < op.nv; ++j)
        for (int i = 1; i < op.ms; ++i) g(j, i) = f(op.idx(i, j));
    if (impose_far_field)
        g.row(op.my - 1) = op.mesh.s.transpose();
    return g;
}

// nodal derivative grids: central differences inside, one-sided 3-point at
// the edges
void derivative_grids(const PdeMesh& mesh, const MatrixXd& f, MatrixXd& dfy, MatrixXd& dfs) {
    const int my = static_cast<int>(mesh.y.size());
    const int ms = static_cast<int>(mesh.s.size());
    dfy.resize(my, ms);
    dfs.resize(my, ms);
    for (int j = 0; j < my; ++j) {
        for (int i = 0; i < ms; ++i) {
            if (i == 0) {
                const Triple t = forward_1(mesh.s(1) - mesh.s(0), mesh.s(2) - mesh.s(1));
                dfs(j, i) = t.lo * f(j, 0) + t.mid * f(j, 1) + t.hi * f(j, 2);
            } else if (i == ms - 1) {
                const Triple t = backward_1(mesh.s(ms - 1) - mesh.s(ms - 2),
                                            mesh.s(ms - 2) - mesh.s(ms - 3));
                dfs(j, i) = t.lo * f(j, ms - 1) + t.mid * f(j, ms - 2) + t.hi * f(j, ms - 3);
            } else {
                const Triple t = central_1(mesh.s(i) - mesh.s(i - 1), mesh.s(i + 1) - mesh.s(i));
                dfs(j, i) = t.lo * f(j, i - 1) + t.mid * f(j, i) + t.hi * f(j, i + 1);
            }
            if (j == 0) {
                const Triple t = forward_1(mesh.y(1) - mesh.y(0), mesh.y(2) - mesh.y(1));
                dfy(j, i) = t.lo * f(0, i) + t.mid * f(1, i) + t.hi * f(2, i);
            } else if (j == my - 1) {
                const Triple t = backward_1(mesh.y(my - 1) - mesh.y(my - 2),
                                            mesh.y(my - 2) - mesh.y(my - 3));
                dfy(j, i) = t.lo * f(my - 1, i) + t.mid * f(my - 2, i) + t.hi * f(my - 3, i);
            } else {
                const Triple t = central_1(mesh.y(j) - mesh.y(j - 1), mesh.y(j + 1) - mesh.y(j));
                dfy(j, i) = t.lo * f(j - 1, i) + t.mid * f(j, i) + t.hi * f(j + 1, i);
            }
        }
    }
}

struct BilinearPos {
    int i = 0, j = 0;
    double wx = 0.0, wy = 0.0;
    bool clamped = false;
};

BilinearPos locate(const PdeMesh& mesh, double y, double s) {
    BilinearPos pos;
    const int ms = static_cast<int>(mesh.s.size());
    const int my = static_cast<int>(mesh.y.size());
    double sq = s, yq = y;
    if (sq < mesh.s(0)) { sq = mesh.s(0); pos.clamped = true; }
    if (sq > mesh.s(ms - 1)) { sq = mesh.s(ms - 1); pos.clamped = true; }
    if (yq < mesh.y(0)) { yq = mesh.y(0); pos.clamped = true; }
    if (yq > mesh.y(my - 1)) { yq = mesh.y(my - 1); pos.clamped = true; }
    const double* sb = mesh.s.data();
    const double* yb = mesh.y.data();
    pos.i = static_cast<int>(std::upper_bound(sb, sb + ms, sq) - sb) - 1;
    pos.j = static_cast<int>(std::upper_bound(yb, yb + my, yq) - yb) - 1;
    pos.i = std::clamp(pos.i, 0, ms - 2);
    pos.j = std::clamp(pos.j, 0, my - 2);
    pos.wx = (sq - mesh.s(pos.i)) / (mesh.s(pos.i + 1) - mesh.s(pos.i));
    pos.wy = (yq - mesh.y(pos.j)) / (mesh.y(pos.j + 1) - mesh.y(pos.j));
    return pos;
}

double bilinear(const MatrixXd& g, const BilinearPos& p) {
    return (1.0 - p.wy) * ((1.0 - p.wx) * g(p.j, p.i) + p.wx * g(p.j, p.i + 1)) +
           p.wy * ((1.0 - p.wx) * g(p.j + 1, p.i) + p.wx * g(p.j + 1, p.i + 1));
}

}  // namespace

PdeCoeffs make_pde_coeffs(const HestonParams& p, PdeMode mode) {
    if (p.m != 1) throw std::invalid_argument("make_pde_coeffs: one-asset benchmark only");
    PdeCoeffs c;
    c.mode = mode;
    c.kappa = p.kappa(0);
    c.theta = p.theta(0);
    c.base = p.kappa(0) + p.rho(0) * p.sigma(0) * p.mu_bar(0);
    c.vol_factor = p.sigma(0) * p.sigma(0) * (1.0 - p.rho(0) * p.rho(0));
    if (mode == PdeMode::Mvh) {
        auto curves = std::make_shared<RiccatiCurves>(p);
        c.chi1 = [curves](double t) { return curves->chi1_at(t, 0); };
    } else {
        c.chi1 = [](double) { return 0.0; };
    }
    return c;
}

PdeMesh build_grid(double strike, const PdeGridSpec& spec) {
    if (spec.m_s < 16 || spec.m_y < 16)
        throw std::invalid_argument("build_grid: meshes need at least 16 points per direction");
    PdeMesh mesh;
    const double s_max = spec.s_mult * strike;
    const double c = strike / 5.0;
    const double xi0 = std::asinh(-strike / c);
    const double xi1 = std::asinh((s_max - strike) / c);
    mesh.s.resize(spec.m_s);
    for (int i = 0; i < spec.m_s; ++i) {
        const double xi = xi0 + (xi1 - xi0) * i / (spec.m_s - 1.0);
        mesh.s(i) = strike + c * std::sinh(xi);
    }
    mesh.s(0) = 0.0;
    mesh.s(spec.m_s - 1) = s_max;

    const double d = spec.y_max / 500.0;
    const double eta1 = std::asinh(spec.y_max / d);
    mesh.y.resize(spec.m_y);
    for (int j = 0; j < spec.m_y; ++j)
        mesh.y(j) = d * std::sinh(eta1 * j / (spec.m_y - 1.0));
    mesh.y(0) = 0.0;
    mesh.y(spec.m_y - 1) = spec.y_max;
    return mesh;
}

int PdeSolution::slice_at_tau(double tau) const {
    for (size_t k = 0; k < slice_tau.size(); ++k)
        if (std::abs(slice_tau[k] - tau) < 1e-9 * std::max(1.0, maturity)) return static_cast<int>(k);
    throw std::invalid_argument("slice_at_tau: no stored slice at requested time");
}

double PdeSolution::price_at(double y_sq, double s) const {
    return interpolate(*this, slice_at_tau(maturity), y_sq, s).f;
}

PdeQuery interpolate(const PdeSolution& sol, int slice_idx, double y_sq, double s) {
    if (slice_idx < 0 || slice_idx >= static_cast<int>(sol.slices.size()))
        throw std::invalid_argument("interpolate: bad slice index");
    const MatrixXd& f = sol.slices[slice_idx];
    MatrixXd dfy, dfs;
    derivative_grids(sol.mesh, f, dfy, dfs);
    const BilinearPos pos = locate(sol.mesh, y_sq, s);
    PdeQuery q;
    q.f = bilinear(f, pos);
    q.f_y = bilinear(dfy, pos);
    q.f_s = bilinear(dfs, pos);
    q.clamped = pos.clamped;
    return q;
}

PdeSolution solve_pde(const HestonParams& p, PdeMode mode, const PdeGridSpec& spec) {
    return solve_pde(p, mode, spec, make_pde_coeffs(p, mode).chi1);
}

PdeSolution solve_pde(const HestonParams& p, PdeMode mode, const PdeGridSpec& spec,
                      const std::function<double(double)>& chi1_override) {
    if (p.m != 1) throw std::invalid_argument("solve_pde: one-asset benchmark only");
    if (spec.n_time < 2) throw std::invalid_argument("solve_pde: n_time too small");

    PdeSolution sol;
    sol.mesh = build_grid(p.strike, spec);
    sol.spec = spec;
    sol.coeffs = make_pde_coeffs(p, mode);
    sol.coeffs.chi1 = chi1_override;
    sol.params = p;
    sol.maturity = p.maturity;
    sol.dt = p.maturity / spec.n_time;

    PdeOperator op;
    op.build(p, sol.mesh);

    const int stride = spec.store_stride > 0 ? spec.store_stride : 1;
    const double w = sol.dt / 3.0;  // theta = 1/3
    const double blow_up = 10.0 * spec.s_mult * p.strike;

    // initial data: payoff, cell averaged at the kink
    const VectorXd pay = payoff_slice(sol.mesh, p.strike);
    VectorXd f(static_cast<long>(op.ns) * op.nv);
    for (int j = 0; j < op.nv; ++j)
        for (int i = 1; i < op.ms; ++i) f(op.idx(i, j)) = pay(i);

    {
        MatrixXd slice0 = expand_slice(op, f, false);
        slice0.row(op.my - 1) = pay.transpose();
        sol.slices.push_back(std::move(slice0));
        sol.slice_tau.push_back(0.0);
        sol.slice_step.push_back(0);
    }

    VectorXd b0 = VectorXd::Zero(f.size());
    op.add_b0(b0);
    VectorXd b1 = VectorXd::Zero(f.size());
    op.add_b1(b1);
    auto keff_at = [&](double tau) { return sol.coeffs.kappa_t(p.maturity - tau); };

    VectorXd a0f(f.size()), a1f(f.size()), a2f(f.size()), tmp(f.size());
    for (int step = 0; step < spec.n_time; ++step) {
        const double tau_n = step * sol.dt;
        const double tau_n1 = (step + 1) * sol.dt;
        const double k_n = keff_at(tau_n);
        const double k_n1 = keff_at(tau_n1);

        op.apply_a0(f, a0f);
        op.apply_a1(f, a1f);
        op.apply_a2(f, k_n, a2f);
        VectorXd b2_n = VectorXd::Zero(f.size());
        op.add_b2(k_n, b2_n);
        VectorXd b2_n1 = VectorXd::Zero(f.size());
        op.add_b2(k_n1, b2_n1);

        VectorXd f_old = a0f + a1f + a2f + b0 + b1 + b2_n;
        VectorXd y0 = f + sol.dt * f_old;

        VectorXd y1 = y0 - w * a1f;
        op.solve_dir1(w, y1);
        VectorXd y2 = y1 - w * (a2f + b2_n) + w * b2_n1;
        op.solve_dir2(w, k_n1, y2);

        VectorXd a0y2(f.size());
        op.apply_a0(y2, a0y2);
        VectorXd yh0 = y0 + w * (a0y2 - a0f);

        op.apply_a1(y2, a1f);  // reuse buffers for the new-state evaluation
        op.apply_a2(y2, k_n1, a2f);
        VectorXd f_new = a0y2 + a1f + a2f + b0 + b1 + b2_n1;
        VectorXd yt0 = yh0 + (0.5 - 1.0 / 3.0) * sol.dt * (f_new - f_old);

        op.apply_a1(f, a1f);  // restore A1 f of the old state
        VectorXd yt1 = yt0 - w * a1f;
        op.solve_dir1(w, yt1);
        op.apply_a2(f, k_n, a2f);
        VectorXd yt2 = yt1 - w * (a2f + b2_n) + w * b2_n1;
        op.solve_dir2(w, k_n1, yt2);

        f = yt2;
        if (!f.allFinite() || f.cwiseAbs().maxCoeff() > blow_up)
            throw std::runtime_error("solve_pde: instability detected at step " +
                                     std::to_string(step + 1));

        if ((step + 1) % stride == 0 || step + 1 == spec.n_time) {
            sol.slices.push_back(expand_slice(op, f, true));
            sol.slice_tau.push_back(tau_n1);
            sol.slice_step.push_back(step + 1);
        }
    }
    return sol;
}

HedgeRun benchmark_strategies(const PdeSolution& sol, const PathBatch& paths, PdeMode mode) {
    if (paths.m != 1)
        throw std::invalid_argument("benchmark_strategies: one-asset benchmark only");
    const int N = paths.n_steps;
    const long B = paths.batch();
    const HestonParams& p = sol.params;
    const double rho_sig = p.rho(0) * p.sigma(0);
    const double mu = p.mu_bar(0);

    HedgeRun run;
    run.price.resize(B, N + 1);
    run.xi.assign(N, MatrixXd::Zero(B, 1));
    run.psi.resize(B, N);
    run.claim = discounted_claim(paths, p);
    const bool track_value = (mode == PdeMode::Mvh);
    if (track_value) run.value.resize(B, N + 1);

    // one derivative-grid build per needed slice
    MatrixXd dfy, dfs;
    for (int n = 0; n <= N; ++n) {
        const double tau = sol.maturity - paths.t(n);
        const int k = sol.slice_at_tau(tau);
        const MatrixXd& f = sol.slices[k];
        derivative_grids(sol.mesh, f, dfy, dfs);

        if (n == 0 && track_value) {
            const BilinearPos p0 = locate(sol.mesh, paths.y_sq[0](0, 0), paths.s_tilde[0](0, 0));
            run.value.col(0).setConstant(bilinear(f, p0));
        }

        const double chi1_n = (n < N) ? sol.coeffs.chi1(paths.t(n)) : 0.0;
        for (long bi = 0; bi < B; ++bi) {
            const BilinearPos pos = locate(sol.mesh, paths.y_sq[n](bi, 0), paths.s_tilde[n](bi, 0));
            if (pos.clamped) ++run.singular_steps;
            const double fv = bilinear(f, pos);
            run.price(bi, n) = fv;
            if (n == N) continue;
            const double f2 = bilinear(dfy, pos);
            const double f3 = bilinear(dfs, pos);
            const double s = paths.s_tilde[n](bi, 0);
            double xi = f3 + rho_sig * f2 / s;
            if (mode == PdeMode::Mvh) {
                xi += (mu + rho_sig * chi1_n) / s * (fv - run.value(bi, n));
                run.xi[n](bi, 0) = xi;
                run.psi(bi, n) = run.value(bi, n) - xi * s;
                run.value(bi, n + 1) =
                    run.value(bi, n) + xi * (paths.s_tilde[n + 1](bi, 0) - s);
            } else {
                run.xi[n](bi, 0) = xi;
                run.psi(bi, n) = fv - xi * s;
            }
        }
    }
    return run;
}

}  // namespace qh
