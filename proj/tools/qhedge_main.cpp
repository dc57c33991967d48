#include "qh/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

struct CommonArgs {
    std::string config_file;
    std::string preset;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string out_dir;
    int steps = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "JSON config file");
    cmd->add_option("--preset", args.preset,
                    "named preset (table1-m1, table1-m5, table1-m20, table1-m100, quick)");
    cmd->add_option("--seed", args.seed, "base seed")->each([&args](const std::string&) {
        args.has_seed = true;
    });
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--steps", args.steps, "number of time steps N");
}

qh::ExperimentConfig build_config(const CommonArgs& args, const std::string& method) {
    qh::ExperimentConfig cfg;
    if (!args.config_file.empty())
        cfg = qh::ExperimentConfig::from_json_file(args.config_file);
    else if (!args.preset.empty())
        cfg = qh::ExperimentConfig::from_preset(args.preset);
    else
        cfg = qh::ExperimentConfig::from_preset("quick");
    if (!args.preset.empty() && !args.config_file.empty())
        throw std::invalid_argument("pass either --config or --preset, not both");
    cfg.method = method;
    if (args.has_seed) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.steps > 0) cfg.solver.n_steps = args.steps;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep quadratic hedging engine for the multi-asset Heston market"};
    app.require_subcommand(1);

    CommonArgs args;
    const char* methods[] = {"mvh", "lrm", "mc", "pde", "riccati"};
    for (const char* name : methods) {
        CLI::App* cmd = app.add_subcommand(
            name, std::string("run the ") + name + " method and write report.json");
        add_common(cmd, args);
    }
    CLI::App* report_cmd =
        app.add_subcommand("report", "reprint the summary table of a stored report.json");
    std::string report_dir = "out";
    report_cmd->add_option("--out", report_dir, "directory holding report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub->get_name() == "report") {
            const qh::RunReport report = qh::RunReport::load(report_dir + "/report.json");
            std::cout << report.table_text();
            return 0;
        }
        const qh::ExperimentConfig cfg = build_config(args, sub->get_name());
        const qh::RunReport report = qh::run_experiment(cfg);
        std::cout << report.table_text();
        std::cout << "report written to " << cfg.out_dir << "/report.json\n";
        return 0;
    } catch (const qh::StageError& e) {
        std::cerr << "stage: " << e.stage << "\nerror: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
