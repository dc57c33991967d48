#pragma once

#include "qh/market.hpp"

#include <vector>

namespace qh {

/// Hedging quantities evaluated pathwise on a batch: option price process,
/// hedge ratios, cash account, and (for self-financing strategies) the
/// wealth recursion. Benchmark runs fill the same shape so that deep and
/// benchmark results diff column by column.
struct HedgeRun {
    MatrixXd price;            // batch x (N+1)
    MatrixXd value;            // batch x (N+1), wealth path; empty when not tracked
    std::vector<MatrixXd> xi;  // N slices of batch x m hedge ratios
    MatrixXd psi;              // batch x N cash account units
    MatrixXd cost;             // batch x (N+1) cumulative cost; empty unless tracked
    VectorXd claim;            // discounted claim per path
    long singular_steps = 0;   // (path, step) pairs where sigma_t was singular
};

}  // namespace qh
