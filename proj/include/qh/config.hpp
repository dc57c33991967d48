#pragma once

#include "qh/bsde.hpp"
#include "qh/market.hpp"
#include "qh/mc_pricer.hpp"
#include "qh/pde.hpp"

#include <string>

namespace qh {

/// One experiment: model, solver, oracle settings and the method to run.
struct ExperimentConfig {
    std::string method = "mvh";  // mvh | lrm | mc | pde | riccati
    std::string preset;
    std::uint64_t seed = 1;
    std::string out_dir = "out";

    HestonParams params = HestonParams::reference(1);
    BsdeConfig solver;       // shared by every trained equation of the run
    McConfig mc;
    PdeGridSpec pde;

    // named presets: table1-m1, table1-m5, table1-m20, table1-m100, quick
    static ExperimentConfig from_preset(const std::string& name);

    static ExperimentConfig from_json_file(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

}  // namespace qh
