#include "comhom/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "comhom/error.hpp"
#include "json.hpp"

namespace comhom::cfg {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& ctx, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items())
        if (allowed.count(key) == 0)
            throw ConfigError("unknown key '" + key + "' in " + ctx);
}

json parse_document(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(what + " is not valid JSON");
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename T>
T number_at(const json& obj, const std::string& ctx, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("'" + key + "' in " + ctx + " must be a number");
    return v.get<T>();
}

bool bool_at(const json& obj, const std::string& ctx, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError("'" + key + "' in " + ctx + " must be a boolean");
    return v.get<bool>();
}

std::string string_at(const json& obj, const std::string& ctx, const std::string& key,
                      const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError("'" + key + "' in " + ctx + " must be a string");
    return v.get<std::string>();
}

std::vector<std::string> string_list_at(const json& obj, const std::string& ctx,
                                        const std::string& key) {
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty())
        throw ConfigError("'" + key + "' in " + ctx + " must be a non-empty array");
    std::vector<std::string> out;
    for (const json& item : v) {
        if (!item.is_string())
            throw ConfigError("'" + key + "' in " + ctx + " must hold strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

// the grid shorthand the config accepts alongside the canonical names
model::OperatorKind parse_operator_alias(const std::string& s) {
    if (s == "avg") return model::OperatorKind::Average;
    if (s == "mlp") return model::OperatorKind::CondMlp;
    return model::parse_operator_kind(s);
}

data::SynthCohortSpec parse_cohort_fields(const json& obj, const std::string& ctx) {
    reject_unknown(obj, ctx,
                   {"subjects", "singles_per_class", "combos_per_class", "channels",
                    "samples_per_window", "template_noise_scale", "subject_mixing_strength",
                    "nonlinearity_gain", "seed"});
    data::SynthCohortSpec spec;
    spec.subjects = number_at(obj, ctx, "subjects", spec.subjects);
    spec.singles_per_class = number_at(obj, ctx, "singles_per_class", spec.singles_per_class);
    spec.combos_per_class = number_at(obj, ctx, "combos_per_class", spec.combos_per_class);
    spec.channels = number_at(obj, ctx, "channels", spec.channels);
    spec.samples_per_window = number_at(obj, ctx, "samples_per_window", spec.samples_per_window);
    spec.template_noise_scale =
        number_at(obj, ctx, "template_noise_scale", spec.template_noise_scale);
    spec.subject_mixing_strength =
        number_at(obj, ctx, "subject_mixing_strength", spec.subject_mixing_strength);
    spec.nonlinearity_gain = number_at(obj, ctx, "nonlinearity_gain", spec.nonlinearity_gain);
    return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    const json root = parse_document(json_text, "experiment config");
    reject_unknown(root, "config",
                   {"dataset", "folds", "seeds", "grid", "loss_toggles", "snr_db", "pretrain",
                    "algorithms", "n_synth_per_class", "calib_fraction", "out_dir"});
    ExperimentConfig config;

    if (!root.contains("dataset") || !root.at("dataset").is_object())
        throw ConfigError("config needs a 'dataset' object");
    const json& ds = root.at("dataset");
    reject_unknown(ds, "dataset", {"path", "synth"});
    if (ds.contains("path") == ds.contains("synth"))
        throw ConfigError("'dataset' must hold exactly one of 'path' or 'synth'");
    if (ds.contains("path")) {
        config.dataset.synthetic = false;
        config.dataset.path = string_at(ds, "dataset", "path", "");
        if (config.dataset.path.empty()) throw ConfigError("'dataset.path' must not be empty");
    } else {
        config.dataset.synthetic = true;
        const json& synth = ds.at("synth");
        if (!synth.is_object()) throw ConfigError("'dataset.synth' must be an object");
        config.dataset.synth = parse_cohort_fields(synth, "dataset.synth");
        config.dataset.synth_seed =
            number_at<std::uint64_t>(synth, "dataset.synth", "seed", config.dataset.synth_seed);
    }

    const auto int_list = [&](const std::string& key, auto& out) {
        if (!root.contains(key)) return;
        const json& v = root.at(key);
        if (!v.is_array() || v.empty())
            throw ConfigError("'" + key + "' must be a non-empty array");
        out.clear();
        for (const json& item : v) {
            if (!item.is_number_integer())
                throw ConfigError("'" + key + "' must hold integers");
            out.push_back(item.get<typename std::decay_t<decltype(out)>::value_type>());
        }
    };
    int_list("folds", config.folds);
    int_list("seeds", config.seeds);

    if (root.contains("grid")) {
        const json& grid = root.at("grid");
        if (!grid.is_object()) throw ConfigError("'grid' must be an object");
        reject_unknown(grid, "grid", {"heads", "operator", "mining"});
        if (grid.contains("heads")) {
            config.heads_grid.clear();
            for (const std::string& s : string_list_at(grid, "grid", "heads"))
                config.heads_grid.push_back(model::parse_heads_kind(s));
        }
        if (grid.contains("operator")) {
            config.operator_grid.clear();
            for (const std::string& s : string_list_at(grid, "grid", "operator"))
                config.operator_grid.push_back(parse_operator_alias(s));
        }
        if (grid.contains("mining")) {
            config.mining_grid.clear();
            for (const std::string& s : string_list_at(grid, "grid", "mining"))
                config.mining_grid.push_back(train::parse_mining_kind(s));
        }
    }

    if (root.contains("loss_toggles")) {
        const json& t = root.at("loss_toggles");
        if (!t.is_object()) throw ConfigError("'loss_toggles' must be an object");
        reject_unknown(t, "loss_toggles", {"triplet", "real_ce", "synth_ce"});
        config.toggles.triplet = bool_at(t, "loss_toggles", "triplet", config.toggles.triplet);
        config.toggles.real_ce = bool_at(t, "loss_toggles", "real_ce", config.toggles.real_ce);
        config.toggles.synth_ce = bool_at(t, "loss_toggles", "synth_ce", config.toggles.synth_ce);
    }

    if (root.contains("snr_db")) {
        const json& v = root.at("snr_db");
        if (v.is_null())
            config.snr_db.reset();
        else if (v.is_number())
            config.snr_db = v.get<double>();
        else
            throw ConfigError("'snr_db' must be a number or null");
    }

    if (root.contains("pretrain")) {
        const json& p = root.at("pretrain");
        if (!p.is_object()) throw ConfigError("'pretrain' must be an object");
        reject_unknown(p, "pretrain",
                       {"max_epochs", "patience", "per_class_per_batch", "val_max_batches",
                        "learning_rate", "weight_decay"});
        config.max_epochs = number_at(p, "pretrain", "max_epochs", config.max_epochs);
        config.patience = number_at(p, "pretrain", "patience", config.patience);
        config.per_class_per_batch =
            number_at(p, "pretrain", "per_class_per_batch", config.per_class_per_batch);
        config.val_max_batches =
            number_at(p, "pretrain", "val_max_batches", config.val_max_batches);
        config.learning_rate = number_at(p, "pretrain", "learning_rate", config.learning_rate);
        config.weight_decay = number_at(p, "pretrain", "weight_decay", config.weight_decay);
    }

    if (root.contains("algorithms")) {
        config.algorithms.clear();
        for (const std::string& s : string_list_at(root, "config", "algorithms"))
            config.algorithms.push_back(cal::parse_algorithm(s));
    }

    config.n_synth_per_class =
        number_at(root, "config", "n_synth_per_class", config.n_synth_per_class);
    config.calib_fraction = number_at(root, "config", "calib_fraction", config.calib_fraction);
    config.out_dir = string_at(root, "config", "out_dir", config.out_dir);

    validate(config);
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(read_file(path));
}

std::pair<data::SynthCohortSpec, std::uint64_t> parse_synth_spec(const std::string& json_text) {
    const json root = parse_document(json_text, "cohort spec");
    const data::SynthCohortSpec spec = parse_cohort_fields(root, "cohort spec");
    const auto seed = number_at<std::uint64_t>(root, "cohort spec", "seed", 1);
    return {spec, seed};
}

std::pair<data::SynthCohortSpec, std::uint64_t> load_synth_spec(const std::string& path) {
    return parse_synth_spec(read_file(path));
}

void validate(const ExperimentConfig& config) {
    if (!config.dataset.synthetic && config.dataset.path.empty())
        throw ConfigError("dataset path is empty");
    if (config.folds.empty()) throw ConfigError("'folds' must not be empty");
    if (config.seeds.empty()) throw ConfigError("'seeds' must not be empty");
    for (const int f : config.folds)
        if (f < 0) throw ConfigError("folds must be non-negative");
    if (config.heads_grid.empty() || config.operator_grid.empty() || config.mining_grid.empty())
        throw ConfigError("every grid axis needs at least one entry");
    if (config.algorithms.empty()) throw ConfigError("'algorithms' must not be empty");
    if (config.max_epochs < 1 || config.patience < 1 || config.per_class_per_batch < 1)
        throw ConfigError("pretrain settings must be positive");
    if (config.val_max_batches < 0) throw ConfigError("'val_max_batches' must be >= 0");
    if (!(config.learning_rate > 0.0f) || config.weight_decay < 0.0f)
        throw ConfigError("optimizer settings out of range");
    if (config.n_synth_per_class < 1) throw ConfigError("'n_synth_per_class' must be positive");
    if (!(config.calib_fraction > 0.0) || !(config.calib_fraction < 1.0))
        throw ConfigError("'calib_fraction' must lie in (0, 1)");
    if (config.out_dir.empty()) throw ConfigError("'out_dir' must not be empty");
    if (!config.toggles.triplet && !config.toggles.real_ce && !config.toggles.synth_ce)
        throw ConfigError("at least one loss term must stay enabled");
}

}  // namespace comhom::cfg
