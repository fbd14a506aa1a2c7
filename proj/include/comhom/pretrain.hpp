#pragma once

#include <optional>
#include <string>
#include <vector>

#include "comhom/dataset.hpp"
#include "comhom/losses.hpp"
#include "comhom/model.hpp"
#include "comhom/optim.hpp"

namespace comhom::train {

struct PretrainConfig {
    int max_epochs = 300;
    int patience = 30;
    int per_class_per_batch = 2;
    std::optional<double> snr_db = 20.0;
    int val_max_batches = 0;  // 0 = evaluate every validation batch
    nn::AdamWConfig optim;
    TripletConfig triplet;
    LossToggles toggles;
    model::OperatorKind op = model::OperatorKind::CondMlp;
    model::HeadsKind heads = model::HeadsKind::Small;
    std::uint64_t seed = 0;
};

// max_epochs >= 1, patience >= 1, per_class_per_batch >= 1, plus the
// triplet config bounds; ConfigError otherwise.
void validate(const PretrainConfig& cfg);

// Stratified without-replacement batch scheduler. Every epoch reshuffles
// each class's pool; batch b takes up to per_class items from every class,
// so classes with fewer items fall out of the later (partial) batches.
class EpochBatcher {
public:
    // Every one of the 24 classes must appear in the pool at least
    // per_class times; ConfigError otherwise.
    EpochBatcher(const data::Dataset& ds, const data::IndexList& pool, int per_class);

    // The epoch's batches in order. Indices within one batch are grouped by
    // class (class 0 items first), which lets per-class noise injection work
    // on contiguous runs.
    std::vector<data::IndexList> epoch_batches(RngStream& rng) const;

    int batches_per_epoch() const { return batches_per_epoch_; }
    int full_batch_size() const;

private:
    const data::Dataset* ds_;
    int per_class_;
    int batches_per_epoch_;
    std::vector<data::IndexList> by_class_;
};

// Materializes a scheduled batch: copies the windows and injects noise per
// class at the target SNR (no target = clean copies).
std::vector<data::Window> make_batch(const data::Dataset& ds, const data::IndexList& batch,
                                     std::optional<double> snr_db, RngStream& rng);

// Stops once `patience` epochs pass without a strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience);
    // Returns true when training should stop after this epoch.
    bool observe(int epoch, double val_loss);
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = -1;
    double best_loss_ = 0.0;
};

struct TrainedBundle {
    model::ModelSpec model_spec;
    nn::ParameterSet params;  // parameters of the best validation epoch
    int best_epoch = -1;      // index into val_trace
    std::vector<double> val_trace;
    PretrainConfig config;
};

struct EpochTrace {
    int epoch = 0;
    double train_total = 0.0;
    double train_triplet = 0.0;
    double train_real_ce = 0.0;
    double train_synth_ce = 0.0;
    double val_total = 0.0;
    int mined_triplets = 0;
    int skipped_anchors = 0;
};

struct PretrainResult {
    TrainedBundle bundle;
    std::vector<EpochTrace> trace;
    int epochs_run = 0;
};

// Joint pretraining of encoder, combination operator, and classifier heads.
// Per step: encode a stratified noisy batch, split the features into
// singles and combinations, build synthetic combinations from the batch's
// singles, refresh the centroid bank, mine triplets, and take one AdamW
// step on the total loss. Per epoch: evaluate the total loss on clean
// stratified validation batches (size-weighted mean) and keep the best
// parameters. Stops early after `patience` epochs without improvement.
// A non-finite loss aborts with NumericError naming epoch and step.
PretrainResult pretrain(const data::Dataset& ds, const data::IndexList& pretrain_pool,
                        const data::IndexList& val_pool, const PretrainConfig& cfg);

// Serializes the bundle parameters plus identifying metadata; the loader
// rejects a manifest whose model spec fields are missing.
void save_bundle(const TrainedBundle& bundle, const std::string& dir);
TrainedBundle load_bundle(const std::string& dir);

// epoch,train_total,train_triplet,train_real_ce,train_synth_ce,val_total,
// mined_triplets,skipped_anchors
void save_trace_csv(const std::vector<EpochTrace>& trace, const std::string& path);

}  // namespace comhom::train
