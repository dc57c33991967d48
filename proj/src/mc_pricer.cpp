#include "qh/mc_pricer.hpp"

#include "qh/riccati.hpp"
#include "qh/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace qh {

McEstimate mc_price(const HestonParams& p, Measure measure, const McConfig& cfg) {
    SimConfig sim;
    sim.batch = cfg.batch;
    sim.n_steps = cfg.n_steps;
    sim.seed = cfg.seed;
    sim.measure = measure;
    sim.stream_tag = stream_tag::kMc;
    sim.antithetic = cfg.antithetic;

    MatrixXd kappa_tilde;
    if (measure == Measure::Qmv) {
        kappa_tilde = RiccatiCurves(p).kappa_tilde_table(cfg.n_steps);
        sim.kappa_tilde = &kappa_tilde;
    }

    const TerminalBatch terminal = simulate_terminal(p, sim);
    const VectorXd h = discounted_claim(terminal, p);

    McEstimate est;
    est.batch = cfg.batch;
    est.n_steps = cfg.n_steps;
    est.measure = measure;
    est.seed = cfg.seed;
    est.antithetic = cfg.antithetic;
    est.price = h.mean();
    est.std_err = std::sqrt((h.array() - est.price).square().sum() / (h.size() - 1.0)) /
                  std::sqrt(static_cast<double>(h.size()));
    return est;
}

RelErrReport mc_vs_deep_report(const McEstimate& mc, double deep_price) {
    if (std::abs(mc.price) < 1e-12)
        throw std::invalid_argument("mc_vs_deep_report: reference price is zero");
    RelErrReport r;
    r.reference = mc.price;
    r.candidate = deep_price;
    r.rel_err_pct = 100.0 * std::abs(deep_price - mc.price) / std::abs(mc.price);
    return r;
}

}  // namespace qh
