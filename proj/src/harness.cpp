#include "qh/harness.hpp"

#include "qh/lrm.hpp"
#include "qh/mvh.hpp"
#include "qh/riccati.hpp"
#include "qh/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace qh {

namespace {

using nlohmann::json;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json vector_json(const VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

// rounds n_time up to a multiple of the path grid so path times sit on
// stored slices
PdeGridSpec aligned_pde_spec(PdeGridSpec spec, int n_steps) {
    const int k = (spec.n_time + n_steps - 1) / n_steps;
    spec.n_time = std::max(1, k) * n_steps;
    return spec;
}

PathBatch strategy_paths(const ExperimentConfig& cfg) {
    SimConfig sim;
    sim.batch = cfg.solver.eval_batch;
    sim.n_steps = cfg.solver.n_steps;
    sim.seed = cfg.seed;
    sim.measure = Measure::P;
    sim.stream_tag = stream_tag::kStrategy;
    return simulate(cfg.params, sim);
}

void run_riccati(const ExperimentConfig& cfg, json& results) {
    const auto t0 = std::chrono::steady_clock::now();
    const ValidationReport v = validate(cfg.params);
    if (!v.ok_for_mvh())
        throw StageError("validate", v.failures.empty() ? "invalid parameters" : v.failures.front());
    RiccatiCurves curves(cfg.params);
    curves.write_csv(cfg.out_dir + "/riccati_curves.csv");
    results["l0"] = opportunity_process(cfg.params, 0.0, cfg.params.y0_sq);
    VectorXd chi0_0(cfg.params.m), chi1_0(cfg.params.m);
    for (int j = 0; j < cfg.params.m; ++j) {
        const auto [c0, c1] = chi(0.0, cfg.params, j);
        chi0_0(j) = c0;
        chi1_0(j) = c1;
    }
    results["chi0_at_0"] = vector_json(chi0_0);
    results["chi1_at_0"] = vector_json(chi1_0);
    results["wall_seconds"] = seconds_since(t0);
}

void run_mc(const ExperimentConfig& cfg, json& results) {
    McConfig mc = cfg.mc;
    mc.seed = cfg.seed;
    const ValidationReport v = validate(cfg.params);
    if (!v.ok_for_lrm())
        throw StageError("validate", v.failures.empty() ? "invalid parameters" : v.failures.front());
    const McEstimate lr = mc_price(cfg.params, Measure::Qlr, mc);
    results["qlr_price"] = lr.price;
    results["qlr_std_err"] = lr.std_err;
    if (v.rho_half_ok && cfg.params.is_diagonal_a()) {
        const McEstimate mv = mc_price(cfg.params, Measure::Qmv, mc);
        results["qmv_price"] = mv.price;
        results["qmv_std_err"] = mv.std_err;
    } else {
        results["qmv_skipped"] = "requires diagonal A and rho^2 < 1/2";
    }
    results["mc_batch"] = mc.batch;
    results["mc_n_steps"] = mc.n_steps;
}

void run_pde_method(const ExperimentConfig& cfg, json& results) {
    if (cfg.params.m != 1) throw StageError("pde", "PDE benchmark requires m = 1");
    const auto t0 = std::chrono::steady_clock::now();
    for (const PdeMode mode : {PdeMode::Mvh, PdeMode::Lrm}) {
        const bool mvh = (mode == PdeMode::Mvh);
        if (mvh && !validate(cfg.params).rho_half_ok) {
            results["pde_price_mvh_skipped"] = "rho^2 >= 1/2";
            continue;
        }
        const PdeSolution sol = solve_pde(cfg.params, mode, cfg.pde);
        const double price = sol.price_at(cfg.params.y0_sq(0), cfg.params.s0(0));
        results[mvh ? "pde_price_mvh" : "pde_price_lrm"] = price;

        // final slice (t = 0) export
        std::ofstream os(cfg.out_dir + (mvh ? "/pde_slice_mvh.csv" : "/pde_slice_lrm.csv"));
        os << "t,y,s,f\n" << std::setprecision(12);
        const int k = sol.slice_at_tau(sol.maturity);
        const MatrixXd& f = sol.slices[k];
        for (int j = 0; j < sol.mesh.y.size(); ++j)
            for (int i = 0; i < sol.mesh.s.size(); ++i)
                os << 0.0 << ',' << sol.mesh.y(j) << ',' << sol.mesh.s(i) << ',' << f(j, i)
                   << '\n';
    }
    results["wall_seconds"] = seconds_since(t0);
}

void run_mvh_method(const ExperimentConfig& cfg, json& results) {
    const ValidationReport v = validate(cfg.params);
    if (!v.ok_for_mvh())
        throw StageError("validate", v.failures.empty() ? "invalid parameters" : v.failures.front());

    McConfig mccfg = cfg.mc;
    mccfg.seed = cfg.seed;
    McEstimate mc;
    try {
        mc = mc_price(cfg.params, Measure::Qmv, mccfg);
    } catch (const std::exception& e) {
        throw StageError("mc", e.what());
    }
    results["mc_price"] = mc.price;
    results["mc_std_err"] = mc.std_err;

    BsdeConfig bsre_cfg = cfg.solver;
    bsre_cfg.seed = derive_seed(cfg.seed, 1);
    BsdeRunResult bsre;
    try {
        bsre = solve_bsre(cfg.params, bsre_cfg);
        if (bsre.aborted) throw std::runtime_error(bsre.abort_reason);
    } catch (const std::exception& e) {
        throw StageError("bsre", e.what());
    }
    write_loss_csv(bsre.loss_trace, cfg.out_dir + "/loss_bsre.csv");
    const double l0_closed = opportunity_process(cfg.params, 0.0, cfg.params.y0_sq);
    results["l0_closed"] = l0_closed;
    results["l0_deep"] = bsre.y0;
    results["l0_rel_err_pct"] = 100.0 * std::abs(bsre.y0 - l0_closed) / l0_closed;
    results["train_seconds_bsre"] = bsre.train_seconds;
    results["eval_loss_bsre"] = bsre.eval_loss;
    const double clamp_rate = bsre_clamp_rate(bsre, 1e-6, 0.05);
    results["clamp_rate"] = clamp_rate;
    results["unreliable_bsre"] = clamp_rate > 0.01;

    BsdeConfig ext_cfg = cfg.solver;
    ext_cfg.seed = derive_seed(cfg.seed, 2);
    ext_cfg.y0_init_lo = 0.95 * mc.price;
    ext_cfg.y0_init_hi = 1.05 * mc.price;
    BsdeRunResult ext;
    try {
        ext = solve_extended_bsde(cfg.params, ext_cfg, bsre);
        if (ext.aborted) throw std::runtime_error(ext.abort_reason);
    } catch (const std::exception& e) {
        throw StageError("extended_bsde", e.what());
    }
    write_loss_csv(ext.loss_trace, cfg.out_dir + "/loss_extended.csv");
    results["price_deep"] = ext.y0;
    results["price_rel_err_pct"] = mc_vs_deep_report(mc, ext.y0).rel_err_pct;
    results["train_seconds_price"] = ext.train_seconds;
    results["eval_loss"] = ext.eval_loss;

    HedgeRun hedge;
    PathBatch paths;
    try {
        paths = strategy_paths(cfg);
        hedge = extract_mvh_strategy(cfg.params, bsre, ext, paths);
    } catch (const std::exception& e) {
        throw StageError("strategy", e.what());
    }
    write_hedge_csv(hedge, cfg.out_dir + "/hedge_run_mvh.csv");
    results["terminal_hedge_mse"] =
        (hedge.value.col(paths.n_steps) - hedge.claim).squaredNorm() / paths.batch();

    if (cfg.params.m == 1) {
        try {
            const PdeGridSpec spec = aligned_pde_spec(cfg.pde, cfg.solver.n_steps);
            const PdeSolution sol = solve_pde(cfg.params, PdeMode::Mvh, spec);
            const double pde_price = sol.price_at(cfg.params.y0_sq(0), cfg.params.s0(0));
            results["pde_price"] = pde_price;
            results["pde_rel_err_pct"] = 100.0 * std::abs(ext.y0 - pde_price) / pde_price;
            const HedgeRun bench = benchmark_strategies(sol, paths, PdeMode::Mvh);
            const MseSeries mse = mse_over_time(hedge, bench);
            write_mse_csv(mse, paths.dt, cfg.out_dir + "/mse_mvh.csv");
            results["mse_price_mean"] = mse.price_mean;
            results["mse_units_mean"] = mse.units_mean;
            results["mse_shares_mean"] = mse.shares_mean;
        } catch (const std::exception& e) {
            throw StageError("pde", e.what());
        }
    }
}

void run_lrm_method(const ExperimentConfig& cfg, json& results) {
    const ValidationReport v = validate(cfg.params);
    if (!v.ok_for_lrm())
        throw StageError("validate", v.failures.empty() ? "invalid parameters" : v.failures.front());

    McConfig mccfg = cfg.mc;
    mccfg.seed = cfg.seed;
    McEstimate mc;
    try {
        mc = mc_price(cfg.params, Measure::Qlr, mccfg);
    } catch (const std::exception& e) {
        throw StageError("mc", e.what());
    }
    results["mc_price"] = mc.price;
    results["mc_std_err"] = mc.std_err;

    BsdeConfig cfg_bsde = cfg.solver;
    cfg_bsde.seed = derive_seed(cfg.seed, 3);
    cfg_bsde.y0_init_lo = 0.95 * mc.price;
    cfg_bsde.y0_init_hi = 1.05 * mc.price;
    BsdeRunResult run;
    try {
        run = solve_fs_bsde(cfg.params, cfg_bsde);
        if (run.aborted) throw std::runtime_error(run.abort_reason);
    } catch (const std::exception& e) {
        throw StageError("fs_bsde", e.what());
    }
    write_loss_csv(run.loss_trace, cfg.out_dir + "/loss_lrm.csv");
    results["price_deep"] = run.y0;
    results["price_rel_err_pct"] = mc_vs_deep_report(mc, run.y0).rel_err_pct;
    results["train_seconds"] = run.train_seconds;
    results["eval_loss"] = run.eval_loss;

    HedgeRun hedge;
    PathBatch paths;
    try {
        paths = strategy_paths(cfg);
        hedge = extract_lrm_strategy(cfg.params, run, paths);
    } catch (const std::exception& e) {
        throw StageError("strategy", e.what());
    }
    write_hedge_csv(hedge, cfg.out_dir + "/hedge_run_lrm.csv");
    const VectorXd drift = hedge.cost.col(paths.n_steps) - hedge.cost.col(0);
    results["cost_drift_mean"] = drift.mean();
    results["cost_drift_se"] =
        std::sqrt((drift.array() - drift.mean()).square().sum() / (drift.size() - 1.0) /
                  drift.size());

    if (cfg.params.m == 1) {
        try {
            const PdeGridSpec spec = aligned_pde_spec(cfg.pde, cfg.solver.n_steps);
            const PdeSolution sol = solve_pde(cfg.params, PdeMode::Lrm, spec);
            const double pde_price = sol.price_at(cfg.params.y0_sq(0), cfg.params.s0(0));
            results["pde_price"] = pde_price;
            results["pde_rel_err_pct"] = 100.0 * std::abs(run.y0 - pde_price) / pde_price;
            const HedgeRun bench = benchmark_strategies(sol, paths, PdeMode::Lrm);
            const MseSeries mse = mse_over_time(hedge, bench);
            write_mse_csv(mse, paths.dt, cfg.out_dir + "/mse_lrm.csv");
            results["mse_price_mean"] = mse.price_mean;
            results["mse_units_mean"] = mse.units_mean;
            results["mse_shares_mean"] = mse.shares_mean;
        } catch (const std::exception& e) {
            throw StageError("pde", e.what());
        }
    }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    RunReport report;
    report.data["method"] = cfg.method;
    if (!cfg.preset.empty()) report.data["preset"] = cfg.preset;
    report.data["seed"] = cfg.seed;
    report.data["params"] = nlohmann::json::parse(cfg.to_json_text())["params"];
    report.data["solver"] = nlohmann::json::parse(cfg.to_json_text())["solver"];
    json results;

    try {
        if (cfg.method == "riccati")
            run_riccati(cfg, results);
        else if (cfg.method == "mc")
            run_mc(cfg, results);
        else if (cfg.method == "pde")
            run_pde_method(cfg, results);
        else if (cfg.method == "mvh")
            run_mvh_method(cfg, results);
        else if (cfg.method == "lrm")
            run_lrm_method(cfg, results);
        else
            throw StageError("config", "unknown method: " + cfg.method);
    } catch (const StageError& e) {
        report.data["results"] = results;
        report.data["failed_stage"] = e.stage;
        report.data["error"] = e.what();
        report.save(cfg.out_dir + "/report.json");
        throw;
    }

    report.data["results"] = results;
    report.save(cfg.out_dir + "/report.json");
    return report;
}

}  // namespace qh
