#pragma once

#include "qh/market.hpp"

#include <cstdint>

namespace qh {

struct McEstimate {
    double price = 0.0;
    double std_err = 0.0;
    long batch = 0;
    int n_steps = 0;
    Measure measure = Measure::P;
    std::uint64_t seed = 0;
    bool antithetic = false;
};

struct McConfig {
    long batch = 100000;
    int n_steps = 100;
    std::uint64_t seed = 7;
    bool antithetic = false;
};

/// Monte Carlo price of the discounted claim under the requested measure.
/// Q_mv builds the Riccati curves internally and requires diagonal A.
McEstimate mc_price(const HestonParams& p, Measure measure, const McConfig& cfg);

struct RelErrReport {
    double reference = 0.0;
    double candidate = 0.0;
    double rel_err_pct = 0.0;
};

/// |deep - mc| / mc in percent; refuses a vanishing reference.
RelErrReport mc_vs_deep_report(const McEstimate& mc, double deep_price);

}  // namespace qh
