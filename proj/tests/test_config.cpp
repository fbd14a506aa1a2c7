#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "comhom/config.hpp"
#include "comhom/error.hpp"
#include "comhom/runner.hpp"
#include "doctest.h"

using namespace comhom;

namespace {

const char* kFullDocument = R"({
  "dataset": {"synth": {"subjects": 4, "singles_per_class": 6, "combos_per_class": 5,
                        "channels": 3, "samples_per_window": 32, "template_noise_scale": 0.1,
                        "subject_mixing_strength": 0.2, "nonlinearity_gain": 1.5, "seed": 9}},
  "folds": [0, 2],
  "seeds": [1, 2, 3],
  "grid": {"heads": ["small", "large"], "operator": ["avg", "mlp"],
           "mining": ["basic", "hard", "centroids"]},
  "loss_toggles": {"triplet": true, "real_ce": false, "synth_ce": true},
  "snr_db": 12.5,
  "pretrain": {"max_epochs": 7, "patience": 3, "per_class_per_batch": 1, "val_max_batches": 2,
               "learning_rate": 0.001, "weight_decay": 0.05},
  "algorithms": ["random_forest", "knn"],
  "n_synth_per_class": 17,
  "calib_fraction": 0.6,
  "out_dir": "exp-out"
})";

}  // namespace

TEST_CASE("a full document fills every field") {
    const cfg::ExperimentConfig c = cfg::parse_experiment_config(kFullDocument);
    CHECK(c.dataset.synthetic);
    CHECK(c.dataset.synth.subjects == 4);
    CHECK(c.dataset.synth.singles_per_class == 6);
    CHECK(c.dataset.synth.combos_per_class == 5);
    CHECK(c.dataset.synth.channels == 3);
    CHECK(c.dataset.synth.samples_per_window == 32);
    CHECK(c.dataset.synth.template_noise_scale == doctest::Approx(0.1));
    CHECK(c.dataset.synth.subject_mixing_strength == doctest::Approx(0.2));
    CHECK(c.dataset.synth.nonlinearity_gain == doctest::Approx(1.5));
    CHECK(c.dataset.synth_seed == 9);
    CHECK(c.folds == std::vector<int>{0, 2});
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
    REQUIRE(c.heads_grid.size() == 2);
    CHECK(c.heads_grid[0] == model::HeadsKind::Small);
    CHECK(c.heads_grid[1] == model::HeadsKind::Large);
    REQUIRE(c.operator_grid.size() == 2);
    CHECK(c.operator_grid[0] == model::OperatorKind::Average);
    CHECK(c.operator_grid[1] == model::OperatorKind::CondMlp);
    REQUIRE(c.mining_grid.size() == 3);
    CHECK(c.mining_grid[2] == train::MiningKind::Centroids);
    CHECK(c.toggles.triplet);
    CHECK(!c.toggles.real_ce);
    CHECK(c.toggles.synth_ce);
    REQUIRE(c.snr_db.has_value());
    CHECK(*c.snr_db == doctest::Approx(12.5));
    CHECK(c.max_epochs == 7);
    CHECK(c.patience == 3);
    CHECK(c.per_class_per_batch == 1);
    CHECK(c.val_max_batches == 2);
    CHECK(c.learning_rate == doctest::Approx(0.001f));
    CHECK(c.weight_decay == doctest::Approx(0.05f));
    REQUIRE(c.algorithms.size() == 2);
    CHECK(c.algorithms[0] == cal::Algorithm::RandomForest);
    CHECK(c.algorithms[1] == cal::Algorithm::Knn);
    CHECK(c.n_synth_per_class == 17);
    CHECK(c.calib_fraction == doctest::Approx(0.6));
    CHECK(c.out_dir == "exp-out");
}

TEST_CASE("a minimal document keeps the defaults") {
    const cfg::ExperimentConfig c = cfg::parse_experiment_config(R"({"dataset": {"synth": {}}})");
    CHECK(c.dataset.synthetic);
    CHECK(c.dataset.synth.subjects == 10);
    CHECK(c.dataset.synth_seed == 1);
    CHECK(c.folds == std::vector<int>{0});
    CHECK(c.seeds == std::vector<std::uint64_t>{0});
    CHECK(c.heads_grid == std::vector<model::HeadsKind>{model::HeadsKind::Small});
    CHECK(c.operator_grid == std::vector<model::OperatorKind>{model::OperatorKind::CondMlp});
    CHECK(c.mining_grid == std::vector<train::MiningKind>{train::MiningKind::Basic});
    CHECK(c.toggles.triplet);
    CHECK(c.toggles.real_ce);
    CHECK(c.toggles.synth_ce);
    REQUIRE(c.snr_db.has_value());
    CHECK(*c.snr_db == doctest::Approx(20.0));
    CHECK(c.max_epochs == 300);
    CHECK(c.patience == 30);
    CHECK(c.algorithms == std::vector<cal::Algorithm>{cal::Algorithm::RandomForest});
    CHECK(c.n_synth_per_class == 500);
    CHECK(c.calib_fraction == doctest::Approx(0.8));
    CHECK(c.out_dir == "out");

    const cfg::ExperimentConfig d =
        cfg::parse_experiment_config(R"({"dataset": {"path": "somewhere"}})");
    CHECK(!d.dataset.synthetic);
    CHECK(d.dataset.path == "somewhere");
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_WITH_AS(cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "bogus": 1})"),
                         "unknown key 'bogus' in config", ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_experiment_config(R"({"dataset": {"synth": {}, "extra": 1}})"),
                         "unknown key 'extra' in dataset", ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_experiment_config(R"({"dataset": {"synth": {"subject": 3}}})"),
                         "unknown key 'subject' in dataset.synth", ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "grid": {"head": ["small"]}})"),
        "unknown key 'head' in grid", ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "loss_toggles": {"ce": true}})"),
        "unknown key 'ce' in loss_toggles", ConfigError);
    CHECK_THROWS_WITH_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "pretrain": {"epochs": 5}})"),
        "unknown key 'epochs' in pretrain", ConfigError);
}

TEST_CASE("the dataset source must be exactly one of path or synth") {
    CHECK_THROWS_AS(cfg::parse_experiment_config(R"({"dataset": {}})"), ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"path": "x", "synth": {}}})"),
        ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config(R"({"dataset": {"path": ""}})"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config(R"({})"), ConfigError);
}

TEST_CASE("bad values are rejected") {
    // malformed documents
    CHECK_THROWS_AS(cfg::parse_experiment_config("not json"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config("[1, 2]"), ConfigError);
    // empty or mistyped lists
    CHECK_THROWS_AS(cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "folds": []})"),
                    ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "folds": [0.5]})"),
        ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "grid": {"heads": []}})"),
        ConfigError);
    // unknown enum names
    CHECK_THROWS_AS(cfg::parse_experiment_config(
                        R"({"dataset": {"synth": {}}, "grid": {"mining": ["hardest"]}})"),
                    ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config(
                        R"({"dataset": {"synth": {}}, "grid": {"heads": ["medium"]}})"),
                    ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "algorithms": ["svm"]})"),
        ConfigError);
    // out-of-range scalars
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "calib_fraction": 1.0})"),
        ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "n_synth_per_class": 0})"),
        ConfigError);
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "folds": [-1]})"),
        ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config(
                        R"({"dataset": {"synth": {}}, "pretrain": {"max_epochs": 0}})"),
                    ConfigError);
    CHECK_THROWS_AS(cfg::parse_experiment_config(
                        R"({"dataset": {"synth": {}}, "snr_db": "loud"})"),
                    ConfigError);
    // every loss term disabled
    CHECK_THROWS_AS(
        cfg::parse_experiment_config(
            R"({"dataset": {"synth": {}},
                "loss_toggles": {"triplet": false, "real_ce": false, "synth_ce": false}})"),
        ConfigError);
}

TEST_CASE("snr_db null disables noise injection") {
    const cfg::ExperimentConfig c =
        cfg::parse_experiment_config(R"({"dataset": {"synth": {}}, "snr_db": null})");
    CHECK(!c.snr_db.has_value());
}

TEST_CASE("config files load from disk") {
    const std::string path = "test_config_doc.json";
    {
        std::ofstream out(path);
        out << R"({"dataset": {"synth": {"subjects": 3}}})";
    }
    const cfg::ExperimentConfig c = cfg::load_experiment_config(path);
    CHECK(c.dataset.synth.subjects == 3);
    std::remove(path.c_str());
    CHECK_THROWS_AS(cfg::load_experiment_config("no_such_config.json"), LoadError);
}

TEST_CASE("cohort spec documents parse with their own seed") {
    const auto [spec, seed] = cfg::parse_synth_spec(
        R"({"subjects": 5, "channels": 2, "samples_per_window": 48, "seed": 123})");
    CHECK(spec.subjects == 5);
    CHECK(spec.channels == 2);
    CHECK(spec.samples_per_window == 48);
    CHECK(spec.singles_per_class == 40);
    CHECK(seed == 123);

    const auto [dspec, dseed] = cfg::parse_synth_spec(R"({})");
    CHECK(dspec.subjects == 10);
    CHECK(dseed == 1);

    CHECK_THROWS_WITH_AS(cfg::parse_synth_spec(R"({"subjcts": 5})"),
                         "unknown key 'subjcts' in cohort spec", ConfigError);
}

TEST_CASE("the grid expands heads-major and slugs are directory names") {
    const cfg::ExperimentConfig c = cfg::parse_experiment_config(kFullDocument);
    const std::vector<runner::GridPoint> grid = runner::expand_grid(c);
    REQUIRE(grid.size() == 12);  // 2 heads x 2 operators x 3 mining
    CHECK(runner::grid_slug(grid.front()) == "small_average_basic");
    CHECK(runner::grid_slug(grid[1]) == "small_average_hard");
    CHECK(runner::grid_slug(grid[3]) == "small_cond_mlp_basic");
    CHECK(runner::grid_slug(grid[6]) == "large_average_basic");
    CHECK(runner::grid_slug(grid.back()) == "large_cond_mlp_centroids");
}

TEST_CASE("mean and population deviation format to two decimals") {
    CHECK(runner::format_mean_std({0.4, 0.6}) == "0.50 ± 0.10");
    CHECK(runner::format_mean_std({0.7}) == "0.70 ± 0.00");
    CHECK(runner::format_mean_std({1.0, 0.0, 0.5}) == "0.50 ± 0.41");
    CHECK_THROWS_AS(runner::format_mean_std({}), ConfigError);
}
