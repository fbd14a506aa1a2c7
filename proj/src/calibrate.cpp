#include "comhom/calibrate.hpp"

#include <algorithm>
#include <cstring>

#include "comhom/error.hpp"
#include "comhom/log.hpp"
#include "comhom/model.hpp"

namespace comhom::cal {

namespace {

const std::string kSupervisionNames[] = {"partial", "augmented", "full"};

void append_rows(nn::Tensor& dst, const nn::Tensor& src, const std::vector<int>& rows) {
    const int dim = src.shape[1];
    for (const int r : rows) {
        const float* p = src.values.data() + static_cast<std::size_t>(r) * dim;
        dst.values.insert(dst.values.end(), p, p + dim);
    }
    dst.shape[0] += static_cast<int>(rows.size());
}

}  // namespace

const std::string& supervision_name(SupervisionMode m) {
    return kSupervisionNames[static_cast<int>(m)];
}

SupervisionMode parse_supervision(const std::string& s) {
    for (int i = 0; i < 3; ++i)
        if (s == kSupervisionNames[i]) return static_cast<SupervisionMode>(i);
    throw ConfigError("unknown supervision mode '" + s + "'");
}

CalibrationSet build_calibration_set(SupervisionMode mode, const train::TrainedBundle& bundle,
                                     const data::Dataset& ds, const data::IndexList& calib,
                                     int n_synth_per_class, RngStream& rng) {
    if (mode == SupervisionMode::Augmented && n_synth_per_class < 1)
        throw ConfigError("n_synth_per_class must be at least 1");

    data::IndexList singles, combos;
    for (const int i : calib) {
        const data::GestureLabel& l = ds.windows[static_cast<std::size_t>(i)].label;
        (l.is_single() ? singles : combos).push_back(i);
    }
    if (singles.empty()) throw ConfigError("calibration pool holds no single-gesture windows");

    const model::Model m = model::make_model(bundle.model_spec);
    const nn::Tensor enc_singles = model::encode_windows(m, bundle.params, ds, singles);

    CalibrationSet set;
    set.features = nn::Tensor({0, model::kEmbeddingDim});
    std::vector<int> all_rows(singles.size());
    for (std::size_t r = 0; r < singles.size(); ++r) all_rows[r] = static_cast<int>(r);
    append_rows(set.features, enc_singles, all_rows);
    for (const int i : singles) {
        set.labels.push_back(ds.windows[static_cast<std::size_t>(i)].label);
        set.provenance.push_back(Provenance::RealSingle);
    }

    if (mode == SupervisionMode::Full) {
        if (!combos.empty()) {
            const nn::Tensor enc_combos = model::encode_windows(m, bundle.params, ds, combos);
            std::vector<int> rows(combos.size());
            for (std::size_t r = 0; r < combos.size(); ++r) rows[r] = static_cast<int>(r);
            append_rows(set.features, enc_combos, rows);
            for (const int i : combos) {
                set.labels.push_back(ds.windows[static_cast<std::size_t>(i)].label);
                set.provenance.push_back(Provenance::RealCombo);
            }
        }
        return set;
    }
    if (mode == SupervisionMode::Partial) return set;

    // Augmented: fuse every direction single with every modifier single and
    // subsample per combination class.
    std::vector<int> dir_rows, mod_rows;
    std::vector<data::Direction> dirs;
    std::vector<data::Modifier> mods;
    for (std::size_t r = 0; r < singles.size(); ++r) {
        const data::GestureLabel& l = ds.windows[static_cast<std::size_t>(singles[r])].label;
        if (l.is_direction_single()) {
            dir_rows.push_back(static_cast<int>(r));
            dirs.push_back(l.direction);
        } else {
            mod_rows.push_back(static_cast<int>(r));
            mods.push_back(l.modifier);
        }
    }
    for (int d = 0; d < data::kActiveDirections; ++d)
        if (std::count(dirs.begin(), dirs.end(), static_cast<data::Direction>(d)) == 0)
            throw ConfigError("cannot synthesize combinations: no " +
                              data::direction_name(static_cast<data::Direction>(d)) +
                              " single in the calibration pool");
    for (int md = 0; md < data::kActiveModifiers; ++md)
        if (std::count(mods.begin(), mods.end(), static_cast<data::Modifier>(md)) == 0)
            throw ConfigError("cannot synthesize combinations: no " +
                              data::modifier_name(static_cast<data::Modifier>(md)) +
                              " single in the calibration pool");

    nn::Tensor dir_feats({0, model::kEmbeddingDim}), mod_feats({0, model::kEmbeddingDim});
    append_rows(dir_feats, enc_singles, dir_rows);
    append_rows(mod_feats, enc_singles, mod_rows);
    const nn::ParameterSet& frozen = bundle.params;
    nn::Tape<float> tape(frozen);
    const int zd = tape.input(dir_feats, "z_dir");
    const int zm = tape.input(mod_feats, "z_mod");
    std::vector<data::GestureLabel> pool_labels;
    const int pool_node = model::combine_all_pairs(tape, m, zd, dirs, zm, mods, &pool_labels);
    const nn::Tensor& pool = tape.value(pool_node);

    std::vector<std::vector<int>> by_class(data::kNumComboClasses);
    for (std::size_t r = 0; r < pool_labels.size(); ++r)
        by_class[data::combo_class_index(pool_labels[r])].push_back(static_cast<int>(r));

    for (int c = 0; c < data::kNumComboClasses; ++c) {
        const std::vector<int>& rows = by_class[c];
        std::vector<int> keep;
        if (static_cast<int>(rows.size()) > n_synth_per_class) {
            RngStream pick_rng = rng.fork("subsample", static_cast<std::uint64_t>(c));
            std::vector<int> picks = pick_rng.sample_without_replacement(
                static_cast<int>(rows.size()), n_synth_per_class);
            std::sort(picks.begin(), picks.end());
            for (const int p : picks) keep.push_back(rows[static_cast<std::size_t>(p)]);
        } else {
            keep = rows;
            log::info("synthetic pool for " +
                      data::label_name(data::label_from_combo_index(c)) + " holds only " +
                      std::to_string(rows.size()) + " items, keeping all");
        }
        append_rows(set.features, pool, keep);
        for (const int r : keep) {
            set.labels.push_back(pool_labels[static_cast<std::size_t>(r)]);
            set.provenance.push_back(Provenance::SyntheticCombo);
        }
    }
    return set;
}

}  // namespace comhom::cal
