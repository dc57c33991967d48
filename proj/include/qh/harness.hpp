#pragma once

#include "qh/config.hpp"
#include "qh/report.hpp"

#include <stdexcept>
#include <string>

namespace qh {

/// Failure of one named stage of an experiment; the harness persists the
/// partial report before rethrowing.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error(what), stage(std::move(stage_name)) {}

    std::string stage;
};

/// Executes the configured method, persists report.json plus the CSV
/// artifacts into cfg.out_dir and returns the report.
RunReport run_experiment(const ExperimentConfig& cfg);

}  // namespace qh
