#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "comhom/downstream.hpp"
#include "comhom/losses.hpp"
#include "comhom/model.hpp"
#include "comhom/synth.hpp"

namespace comhom::cfg {

// Either a saved dataset directory or a procedural cohort.
struct DatasetSource {
    bool synthetic = false;
    std::string path;
    data::SynthCohortSpec synth;
    std::uint64_t synth_seed = 1;
};

// One experiment: every (grid point, fold, seed) gets a pretraining run and
// all three supervision modes are evaluated on that run's test split.
struct ExperimentConfig {
    DatasetSource dataset;
    std::vector<int> folds = {0};
    std::vector<std::uint64_t> seeds = {0};

    std::vector<model::HeadsKind> heads_grid = {model::HeadsKind::Small};
    std::vector<model::OperatorKind> operator_grid = {model::OperatorKind::CondMlp};
    std::vector<train::MiningKind> mining_grid = {train::MiningKind::Basic};

    train::LossToggles toggles;
    std::optional<double> snr_db = 20.0;

    int max_epochs = 300;
    int patience = 30;
    int per_class_per_batch = 2;
    int val_max_batches = 0;
    float learning_rate = 3e-4f;
    float weight_decay = 1e-2f;

    std::vector<cal::Algorithm> algorithms = {cal::Algorithm::RandomForest};
    int n_synth_per_class = cal::kDefaultSynthPerClass;
    double calib_fraction = 0.8;
    std::string out_dir = "out";
};

// Strict JSON parsing: unknown keys anywhere raise ConfigError, as do empty
// lists, bad enum names, and out-of-range scalars.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Cohort spec document for the synth-data subcommand: the SynthCohortSpec
// fields plus "seed".
std::pair<data::SynthCohortSpec, std::uint64_t> parse_synth_spec(const std::string& json_text);
std::pair<data::SynthCohortSpec, std::uint64_t> load_synth_spec(const std::string& path);

void validate(const ExperimentConfig& config);

}  // namespace comhom::cfg
