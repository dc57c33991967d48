#include "qh/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace qh {

MseSeries mse_over_time(const HedgeRun& deep, const HedgeRun& bench) {
    if (deep.price.rows() != bench.price.rows() || deep.price.cols() != bench.price.cols() ||
        deep.xi.size() != bench.xi.size() || deep.psi.cols() != bench.psi.cols())
        throw std::invalid_argument("mse_over_time: mismatched shapes");
    const long B = deep.price.rows();
    const int N = static_cast<int>(deep.xi.size());

    MseSeries mse;
    mse.price.resize(N + 1);
    for (int n = 0; n <= N; ++n)
        mse.price(n) = (deep.price.col(n) - bench.price.col(n)).squaredNorm() / B;
    mse.units.resize(N);
    mse.shares.resize(N);
    for (int n = 0; n < N; ++n) {
        mse.units(n) = (deep.psi.col(n) - bench.psi.col(n)).squaredNorm() / B;
        mse.shares(n) = (deep.xi[n] - bench.xi[n]).squaredNorm() /
                        static_cast<double>(B * deep.xi[n].cols());
    }
    mse.price_mean = mse.price.mean();
    mse.units_mean = mse.units.mean();
    mse.shares_mean = mse.shares.mean();
    return mse;
}

void RunReport::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << data.dump(2) << '\n';
}

RunReport RunReport::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    RunReport r;
    is >> r.data;
    return r;
}

namespace {

void print_row(std::ostringstream& os, const std::string& label, const nlohmann::json& j,
               const std::string& key) {
    if (!j.contains(key)) return;
    os << "  " << std::left << std::setw(34) << label;
    const auto& v = j[key];
    if (v.is_number_float())
        os << std::setprecision(17) << v.get<double>();
    else
        os << v.dump();
    os << '\n';
}

}  // namespace

std::string RunReport::table_text() const {
    std::ostringstream os;
    const auto& j = data;
    os << "== " << j.value("method", "?") << " run";
    if (j.contains("preset")) os << " [" << j["preset"].get<std::string>() << "]";
    os << " ==\n";
    if (j.contains("params"))
        os << "  m = " << j["params"].value("m", 0)
           << ", n_steps = " << (j.contains("solver") ? j["solver"].value("n_steps", 0) : 0)
           << ", seed = " << j.value("seed", 0) << "\n";
    if (j.contains("results")) {
        const auto& r = j["results"];
        print_row(os, "L value (closed form)", r, "l0_closed");
        print_row(os, "BSDE solver L value", r, "l0_deep");
        print_row(os, "Relative error L (%)", r, "l0_rel_err_pct");
        print_row(os, "1st training time (s)", r, "train_seconds_bsre");
        print_row(os, "MC price", r, "mc_price");
        print_row(os, "MC std err", r, "mc_std_err");
        print_row(os, "BSDE solver price", r, "price_deep");
        print_row(os, "Relative error (%)", r, "price_rel_err_pct");
        print_row(os, "2nd training time (s)", r, "train_seconds_price");
        print_row(os, "Training time (s)", r, "train_seconds");
        print_row(os, "PDE price", r, "pde_price");
        print_row(os, "Relative error vs PDE (%)", r, "pde_rel_err_pct");
        print_row(os, "Eval loss", r, "eval_loss");
        print_row(os, "Clamp rate", r, "clamp_rate");
        print_row(os, "Terminal hedge MSE", r, "terminal_hedge_mse");
        print_row(os, "Cost drift mean", r, "cost_drift_mean");
        print_row(os, "Mean MSE price", r, "mse_price_mean");
        print_row(os, "Mean MSE units of cash", r, "mse_units_mean");
        print_row(os, "Mean MSE shares", r, "mse_shares_mean");
        print_row(os, "Price (MVH mode)", r, "pde_price_mvh");
        print_row(os, "Price (LRM mode)", r, "pde_price_lrm");
        print_row(os, "L0", r, "l0");
    }
    if (j.contains("failed_stage"))
        os << "  FAILED at stage: " << j["failed_stage"].get<std::string>() << "\n";
    return os.str();
}

void write_loss_csv(const std::vector<double>& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "iteration,loss,log10_loss\n";
    os << std::setprecision(17);
    for (size_t i = 0; i < trace.size(); ++i)
        os << i << ',' << trace[i] << ',' << (trace[i] > 0 ? std::log10(trace[i]) : -300.0)
           << '\n';
}

void write_hedge_csv(const HedgeRun& run, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    const long B = run.price.rows();
    const int N = static_cast<int>(run.xi.size());
    const int m = N > 0 ? static_cast<int>(run.xi[0].cols()) : 0;
    const bool has_value = run.value.size() > 0;
    const bool has_cost = run.cost.size() > 0;
    os << "path,step,price";
    if (has_value) os << ",value";
    for (int k = 0; k < m; ++k) os << ",xi_" << k;
    os << ",psi";
    if (has_cost) os << ",cost";
    os << '\n';
    os << std::setprecision(12);
    for (long b = 0; b < B; ++b)
        for (int n = 0; n <= N; ++n) {
            os << b << ',' << n << ',' << run.price(b, n);
            if (has_value) os << ',' << run.value(b, n);
            for (int k = 0; k < m; ++k) os << ',' << (n < N ? run.xi[n](b, k) : 0.0);
            os << ',' << (n < N ? run.psi(b, n) : 0.0);
            if (has_cost) os << ',' << run.cost(b, n);
            os << '\n';
        }
}

void write_mse_csv(const MseSeries& mse, double dt, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "step,t,price_mse,units_mse,shares_mse\n";
    os << std::setprecision(17);
    const int N = static_cast<int>(mse.units.size());
    for (int n = 0; n <= N; ++n) {
        os << n << ',' << n * dt << ',' << mse.price(n) << ',';
        if (n < N)
            os << mse.units(n) << ',' << mse.shares(n);
        else
            os << ',';
        os << '\n';
    }
}

}  // namespace qh
