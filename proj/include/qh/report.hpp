#pragma once

#include "qh/bsde.hpp"
#include "qh/hedge.hpp"

#include <json.hpp>

#include <string>

namespace qh {

/// Per-step mean squared differences between a deep run and a benchmark
/// run on the same paths.
struct MseSeries {
    VectorXd price;   // N+1 entries
    VectorXd units;   // N entries (cash account)
    VectorXd shares;  // N entries (hedge ratios, averaged over assets)
    double price_mean = 0.0;
    double units_mean = 0.0;
    double shares_mean = 0.0;
};

MseSeries mse_over_time(const HedgeRun& deep, const HedgeRun& bench);

/// Raw result container persisted as report.json; all relative errors are
/// stored next to the raw values they were computed from.
struct RunReport {
    nlohmann::json data;

    void save(const std::string& path) const;
    static RunReport load(const std::string& path);

    /// Summary table, one block per trained equation plus oracle rows.
    std::string table_text() const;
};

void write_loss_csv(const std::vector<double>& trace, const std::string& path);
void write_hedge_csv(const HedgeRun& run, const std::string& path);
void write_mse_csv(const MseSeries& mse, double dt, const std::string& path);

}  // namespace qh
