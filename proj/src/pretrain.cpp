#include "comhom/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "comhom/checkpoint.hpp"
#include "comhom/error.hpp"
#include "comhom/log.hpp"

namespace comhom::train {

void validate(const PretrainConfig& cfg) {
    if (cfg.max_epochs < 1) throw ConfigError("max epochs must be at least 1");
    if (cfg.patience < 1) throw ConfigError("patience must be at least 1");
    if (cfg.per_class_per_batch < 1) throw ConfigError("per-class batch count must be at least 1");
    if (cfg.val_max_batches < 0) throw ConfigError("validation batch cap cannot be negative");
    validate(cfg.triplet);
    if (!cfg.toggles.triplet && !cfg.toggles.real_ce && !cfg.toggles.synth_ce)
        throw ConfigError("every loss term is disabled; enable at least one");
}

EpochBatcher::EpochBatcher(const data::Dataset& ds, const data::IndexList& pool, int per_class)
    : ds_(&ds), per_class_(per_class), by_class_(data::kNumStoredClasses) {
    if (per_class < 1) throw ConfigError("per-class batch count must be at least 1");
    for (const int i : pool) {
        const data::Window& w = ds.windows.at(static_cast<std::size_t>(i));
        by_class_[static_cast<std::size_t>(data::class_index(w.label))].push_back(i);
    }
    batches_per_epoch_ = 0;
    for (int cls = 0; cls < data::kNumStoredClasses; ++cls) {
        const int n = static_cast<int>(by_class_[static_cast<std::size_t>(cls)].size());
        if (n < per_class)
            throw ConfigError("batching needs at least " + std::to_string(per_class) +
                              " items of class " +
                              data::label_name(data::label_from_class_index(cls)) + ", found " +
                              std::to_string(n));
        batches_per_epoch_ = std::max(batches_per_epoch_, (n + per_class - 1) / per_class);
    }
}

int EpochBatcher::full_batch_size() const { return per_class_ * data::kNumStoredClasses; }

std::vector<data::IndexList> EpochBatcher::epoch_batches(RngStream& rng) const {
    std::vector<data::IndexList> shuffled = by_class_;
    for (int cls = 0; cls < data::kNumStoredClasses; ++cls) {
        RngStream s = rng.fork("class", static_cast<std::uint64_t>(cls));
        s.shuffle(shuffled[static_cast<std::size_t>(cls)]);
    }
    std::vector<data::IndexList> batches(static_cast<std::size_t>(batches_per_epoch_));
    for (int b = 0; b < batches_per_epoch_; ++b) {
        data::IndexList& batch = batches[static_cast<std::size_t>(b)];
        for (int cls = 0; cls < data::kNumStoredClasses; ++cls) {
            const data::IndexList& items = shuffled[static_cast<std::size_t>(cls)];
            const std::size_t lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(per_class_);
            for (std::size_t k = lo; k < lo + static_cast<std::size_t>(per_class_) && k < items.size(); ++k)
                batch.push_back(items[k]);
        }
    }
    return batches;
}

std::vector<data::Window> make_batch(const data::Dataset& ds, const data::IndexList& batch,
                                     std::optional<double> snr_db, RngStream& rng) {
    std::vector<data::Window> out;
    out.reserve(batch.size());
    std::size_t i = 0;
    while (i < batch.size()) {
        // contiguous same-class run (epoch_batches groups by class)
        const int cls = data::class_index(
            ds.windows.at(static_cast<std::size_t>(batch[i])).label);
        std::vector<data::Window> group;
        while (i < batch.size() &&
               data::class_index(ds.windows.at(static_cast<std::size_t>(batch[i])).label) == cls) {
            group.push_back(ds.windows.at(static_cast<std::size_t>(batch[i])));
            ++i;
        }
        RngStream s = rng.fork("class-noise", static_cast<std::uint64_t>(cls));
        std::vector<data::Window> noisy = data::inject_noise(std::move(group), snr_db, s);
        for (auto& w : noisy) out.push_back(std::move(w));
    }
    return out;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::observe(int epoch, double val_loss) {
    if (best_epoch_ < 0 || val_loss < best_loss_) {
        best_epoch_ = epoch;
        best_loss_ = val_loss;
    }
    return epoch - best_epoch_ >= patience_;
}

namespace {

struct StepOutcome {
    double total = 0.0;
    double triplet = 0.0;
    double real_ce = 0.0;
    double synth_ce = 0.0;
    int mined = 0;
    int skipped = 0;
    int loss_node = -1;
};

// Shared by training and validation. Builds the loss for one materialized
// batch on the given tape; training additionally folds the batch into the
// centroid bank before mining (update precedes mining, so the very first
// step already has usable centroids).
StepOutcome build_step_loss(nn::Tape<float>& tape, const model::Model& m,
                            const std::vector<data::Window>& batch, CentroidBank* bank_mut,
                            const CentroidBank& bank, const PretrainConfig& cfg,
                            RngStream& mine_rng) {
    std::vector<const data::Window*> ptrs;
    ptrs.reserve(batch.size());
    for (const data::Window& w : batch) ptrs.push_back(&w);
    const int x = tape.input(model::batch_input(ptrs), "batch");
    const int feats = nn::apply_layers(tape, m.encoder, x);

    std::vector<data::GestureLabel> labels;
    std::vector<int> dir_rows, mod_rows, combo_rows;
    std::vector<data::Direction> dirs;
    std::vector<data::Modifier> mods;
    std::vector<int> combo_cls;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const data::GestureLabel& l = batch[i].label;
        labels.push_back(l);
        if (l.is_direction_single()) {
            dir_rows.push_back(static_cast<int>(i));
            dirs.push_back(l.direction);
        } else if (l.is_modifier_single()) {
            mod_rows.push_back(static_cast<int>(i));
            mods.push_back(l.modifier);
        } else {
            combo_rows.push_back(static_cast<int>(i));
            combo_cls.push_back(data::combo_class_index(l));
        }
    }

    // synthetic combinations come from this batch's singles
    int synth_node = -1;
    std::vector<data::GestureLabel> synth_labels;
    std::vector<int> synth_cls;
    if (!dirs.empty() && !mods.empty()) {
        const int zd = tape.gather_rows(feats, dir_rows);
        const int zm = tape.gather_rows(feats, mod_rows);
        synth_node = model::combine_all_pairs(tape, m, zd, dirs, zm, mods, &synth_labels);
        synth_cls.reserve(synth_labels.size());
        for (const data::GestureLabel& l : synth_labels)
            synth_cls.push_back(data::combo_class_index(l));
    }

    int combo_node = -1;
    if (!combo_rows.empty()) combo_node = tape.gather_rows(feats, combo_rows);

    if (bank_mut) {
        if (combo_node >= 0) bank_mut->update(Side::Real, tape.value(combo_node), combo_cls);
        if (synth_node >= 0) bank_mut->update(Side::Synth, tape.value(synth_node), synth_cls);
    }

    MiningResult mined;
    if (cfg.toggles.triplet && combo_node >= 0 && synth_node >= 0) {
        const MiningBatch mb{&tape.value(combo_node), &combo_cls, &tape.value(synth_node),
                             &synth_cls};
        mined = mine_triplets(cfg.triplet, mb, bank, mine_rng);
    }

    // a partial batch may lack the singles the synthetic term needs; the
    // triplet term degrades to the empty-mining zero on its own
    LossToggles toggles = cfg.toggles;
    if (synth_node < 0) {
        toggles.synth_ce = false;
        if (!toggles.real_ce && !toggles.triplet)
            throw ConfigError("batch provides no rows for any enabled loss term");
        synth_node = feats;
        synth_labels = labels;
    }
    if (combo_node < 0) combo_node = feats;

    const LossTerms terms = total_loss(tape, m, feats, labels, synth_node, synth_labels,
                                       combo_node, mined, bank, cfg.triplet, toggles);
    StepOutcome out;
    out.loss_node = terms.total;
    out.total = tape.scalar(terms.total);
    if (terms.triplet >= 0) out.triplet = tape.scalar(terms.triplet);
    if (terms.real_ce >= 0) out.real_ce = tape.scalar(terms.real_ce);
    if (terms.synth_ce >= 0) out.synth_ce = tape.scalar(terms.synth_ce);
    out.mined = static_cast<int>(mined.triplets.size());
    out.skipped = mined.skipped_anchors;
    return out;
}

}  // namespace

PretrainResult pretrain(const data::Dataset& ds, const data::IndexList& pretrain_pool,
                        const data::IndexList& val_pool, const PretrainConfig& cfg) {
    validate(cfg);
    const model::Model m = model::make_model({ds.channels, cfg.op, cfg.heads});
    RngStream root(cfg.seed, "pretrain");

    nn::ParameterSet params;
    RngStream init_rng = root.fork("init");
    model::init_model_params(m, params, init_rng);

    const EpochBatcher train_batcher(ds, pretrain_pool, cfg.per_class_per_batch);
    const EpochBatcher val_batcher(ds, val_pool, cfg.per_class_per_batch);

    nn::AdamW opt(cfg.optim);
    CentroidBank bank(cfg.triplet.momentum);
    EarlyStopper stopper(cfg.patience);

    PretrainResult result;
    nn::ParameterSet best_params = params;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        RngStream epoch_rng = root.fork("epoch", static_cast<std::uint64_t>(epoch));
        RngStream batch_rng = epoch_rng.fork("batches");
        const std::vector<data::IndexList> batches = train_batcher.epoch_batches(batch_rng);

        EpochTrace trace;
        trace.epoch = epoch;
        double weight_sum = 0.0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            RngStream noise_rng = epoch_rng.fork("noise", static_cast<std::uint64_t>(step));
            const std::vector<data::Window> batch =
                make_batch(ds, batches[step], cfg.snr_db, noise_rng);
            RngStream mine_rng = epoch_rng.fork("mine", static_cast<std::uint64_t>(step));

            nn::Tape<float> tape(params);
            StepOutcome outcome;
            try {
                outcome = build_step_loss(tape, m, batch, &bank, bank, cfg, mine_rng);
                tape.backward(outcome.loss_node);
            } catch (const NumericError& e) {
                throw NumericError("pretraining diverged at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step) + " (triplet " +
                                   std::to_string(outcome.triplet) + ", real ce " +
                                   std::to_string(outcome.real_ce) + ", synth ce " +
                                   std::to_string(outcome.synth_ce) + "): " + e.what());
            }
            opt.step(params);
            params.zero_grads();

            const double w = static_cast<double>(batch.size());
            weight_sum += w;
            trace.train_total += w * outcome.total;
            trace.train_triplet += w * outcome.triplet;
            trace.train_real_ce += w * outcome.real_ce;
            trace.train_synth_ce += w * outcome.synth_ce;
            trace.mined_triplets += outcome.mined;
            trace.skipped_anchors += outcome.skipped;
        }
        if (weight_sum > 0.0) {
            trace.train_total /= weight_sum;
            trace.train_triplet /= weight_sum;
            trace.train_real_ce /= weight_sum;
            trace.train_synth_ce /= weight_sum;
        }

        // clean stratified validation pass, size-weighted
        RngStream val_rng = root.fork("val", static_cast<std::uint64_t>(epoch));
        RngStream val_batch_rng = val_rng.fork("batches");
        std::vector<data::IndexList> val_batches = val_batcher.epoch_batches(val_batch_rng);
        if (cfg.val_max_batches > 0 &&
            static_cast<int>(val_batches.size()) > cfg.val_max_batches)
            val_batches.resize(static_cast<std::size_t>(cfg.val_max_batches));
        double val_total = 0.0, val_weight = 0.0;
        const nn::ParameterSet& frozen = params;
        for (std::size_t step = 0; step < val_batches.size(); ++step) {
            RngStream none(0, "unused");
            const std::vector<data::Window> batch =
                make_batch(ds, val_batches[step], std::nullopt, none);
            RngStream mine_rng = val_rng.fork("mine", static_cast<std::uint64_t>(step));
            nn::Tape<float> tape(frozen);
            const StepOutcome outcome =
                build_step_loss(tape, m, batch, nullptr, bank, cfg, mine_rng);
            if (!std::isfinite(outcome.total))
                throw NumericError("validation loss is not finite at epoch " +
                                   std::to_string(epoch));
            val_total += static_cast<double>(batch.size()) * outcome.total;
            val_weight += static_cast<double>(batch.size());
        }
        trace.val_total = val_weight > 0.0 ? val_total / val_weight : 0.0;

        result.bundle.val_trace.push_back(trace.val_total);
        result.trace.push_back(trace);
        result.epochs_run = epoch + 1;

        const bool stop = stopper.observe(epoch, trace.val_total);
        if (stopper.best_epoch() == epoch) best_params = params;
        log::info("epoch " + std::to_string(epoch) + " train " +
                  std::to_string(trace.train_total) + " val " + std::to_string(trace.val_total) +
                  " (best epoch " + std::to_string(stopper.best_epoch()) + ")");
        if (stop) break;
    }

    result.bundle.model_spec = m.spec;
    result.bundle.params = std::move(best_params);
    result.bundle.best_epoch = stopper.best_epoch();
    result.bundle.config = cfg;
    return result;
}

void save_bundle(const TrainedBundle& bundle, const std::string& dir) {
    nn::CheckpointMeta meta;
    meta.set("in_channels", std::to_string(bundle.model_spec.in_channels));
    meta.set("operator", model::operator_kind_name(bundle.model_spec.op));
    meta.set("heads", model::heads_kind_name(bundle.model_spec.heads));
    meta.set("best_epoch", std::to_string(bundle.best_epoch));
    meta.set("epochs_trained", std::to_string(bundle.val_trace.size()));
    meta.set("parameter_count", std::to_string(bundle.params.total_parameters()));
    nn::save_checkpoint(dir, bundle.params, meta);
}

TrainedBundle load_bundle(const std::string& dir) {
    nn::LoadedCheckpoint loaded = nn::load_checkpoint(dir);
    TrainedBundle bundle;
    bundle.model_spec.in_channels = std::stoi(loaded.meta.require("in_channels"));
    bundle.model_spec.op = model::parse_operator_kind(loaded.meta.require("operator"));
    bundle.model_spec.heads = model::parse_heads_kind(loaded.meta.require("heads"));
    bundle.best_epoch = std::stoi(loaded.meta.require("best_epoch"));
    bundle.params = std::move(loaded.params);
    return bundle;
}

void save_trace_csv(const std::vector<EpochTrace>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write trace file: " + path);
    out << "epoch,train_total,train_triplet,train_real_ce,train_synth_ce,val_total,"
           "mined_triplets,skipped_anchors\n";
    out << std::setprecision(9);
    for (const EpochTrace& t : trace)
        out << t.epoch << ',' << t.train_total << ',' << t.train_triplet << ','
            << t.train_real_ce << ',' << t.train_synth_ce << ',' << t.val_total << ','
            << t.mined_triplets << ',' << t.skipped_anchors << '\n';
    if (!out) throw LoadError("failed writing trace file: " + path);
}

}  // namespace comhom::train
