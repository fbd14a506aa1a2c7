#pragma once

#include <string>
#include <vector>

#include "comhom/config.hpp"

namespace comhom::runner {

struct GridPoint {
    model::HeadsKind heads = model::HeadsKind::Small;
    model::OperatorKind op = model::OperatorKind::CondMlp;
    train::MiningKind mining = train::MiningKind::Basic;
};

// directory-safe identifier, e.g. "small_cond_mlp_basic"
std::string grid_slug(const GridPoint& g);

std::vector<GridPoint> expand_grid(const cfg::ExperimentConfig& config);

struct RunOutcome {
    int completed = 0;
    std::vector<std::string> failures;  // "slug/foldF-seedS: message"
};

// Executes every (grid point, fold, seed) run: pretrain once, evaluate all
// three supervision modes on the identical test split, write one report per
// (mode, algorithm) under out_dir/<slug>/fold<F>-seed<S>/, then rewrite the
// aggregate tables. Failures land in error.json and the outcome, never
// throw. jobs > 1 distributes whole runs across threads.
RunOutcome run_experiment(const cfg::ExperimentConfig& config, int jobs = 1);

// Re-reads every report under out_dir and rewrites out_dir/aggregate/*.csv.
// Returns the number of reports; none at all raises ConfigError.
int aggregate_reports(const std::string& out_dir);

// "0.50 ± 0.10": mean and population standard deviation, two decimals.
std::string format_mean_std(const std::vector<double>& values);

}  // namespace comhom::runner
