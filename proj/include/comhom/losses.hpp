#pragma once

#include <array>
#include <string>
#include <vector>

#include "comhom/gesture.hpp"
#include "comhom/model.hpp"
#include "comhom/rng.hpp"
#include "comhom/tape.hpp"

namespace comhom::train {

// Which bank a feature row belongs to. Triplet candidates always come from
// the side opposite the anchor.
enum class Side { Real = 0, Synth = 1 };

enum class MiningKind { Basic = 0, Hard = 1, Centroids = 2 };

const std::string& mining_kind_name(MiningKind k);
MiningKind parse_mining_kind(const std::string& s);

struct TripletConfig {
    MiningKind variant = MiningKind::Basic;
    double margin = 1.0;
    int pairs_per_anchor = 3;  // Basic only
    double momentum = 0.9;     // Centroids only
};

// margin > 0, pairs_per_anchor >= 1, momentum in [0, 1]; ConfigError otherwise.
void validate(const TripletConfig& cfg);

// Exponential-moving-average class centroids, one 64-vector per combination
// class and side. A class's first observed batch mean becomes its centroid;
// afterwards C <- M C + (1 - M) mean.
class CentroidBank {
public:
    explicit CentroidBank(double momentum = 0.9);

    // feats is [n, 64]; classes gives each row's combination class.
    void update(Side side, const nn::Tensor& feats, const std::vector<int>& classes);

    bool has(Side side, int combo_class) const;
    int ready_count(Side side) const;
    // Centroid row copy; ConfigError when the class was never observed.
    std::vector<float> centroid(Side side, int combo_class) const;
    double momentum() const { return momentum_; }

private:
    double momentum_;
    std::array<nn::Tensor, 2> banks_;
    std::array<std::array<bool, data::kNumComboClasses>, 2> ready_{};
};

struct TripletRef {
    enum class Kind { Item, Centroid };
    Kind kind = Kind::Item;
    // Opposite-side feature row for Item; combination class for Centroid.
    int index = 0;

    bool operator==(const TripletRef&) const = default;
};

struct Triplet {
    Side anchor_side = Side::Real;
    int anchor = 0;  // row in the anchor side's feature matrix
    TripletRef positive;
    TripletRef negative;

    bool operator==(const Triplet&) const = default;
};

struct MiningResult {
    std::vector<Triplet> triplets;
    int skipped_anchors = 0;
};

struct MiningBatch {
    const nn::Tensor* real = nullptr;  // [n_real, 64] combination features
    const std::vector<int>* real_classes = nullptr;
    const nn::Tensor* synth = nullptr;  // [n_synth, 64]
    const std::vector<int>* synth_classes = nullptr;
};

// Walks every anchor in row order, real side first. Basic draws up to
// pairs_per_anchor positive/negative pairs without replacement (fewer when
// a pool is exhausted); Hard picks the farthest positive and the closest
// negative (ties resolve to the lowest row); Centroids compares against the
// positive class's centroid and one uniformly random other initialized
// centroid, both on the opposite side. Anchors with no usable positive or
// negative are skipped and counted. Both sides must be non-empty.
MiningResult mine_triplets(const TripletConfig& cfg, const MiningBatch& batch,
                           const CentroidBank& bank, RngStream& rng);

// Squared Euclidean distance between two feature rows.
double row_distance(const nn::Tensor& a, int row_a, const nn::Tensor& b, int row_b);

// Mean over triplets of max(d(a,p) - d(a,n) + margin, 0), d = squared
// Euclidean. Anchor rows come from real_combo_node or synth_node per the
// triplet's side; item references index the opposite node. Centroid
// references enter as constants: they steer the loss but get no gradient.
// An empty mining result contributes a constant zero and sets *empty_flag.
template <typename T>
int triplet_loss(nn::Tape<T>& tape, const MiningResult& mined, int real_combo_node,
                 int synth_node, const CentroidBank& bank, double margin,
                 bool* empty_flag = nullptr);

struct HeadLoss {
    int direction = -1;  // tape node ids, each a mean cross-entropy
    int modifier = -1;
    int sum = -1;
};

// Runs both classifier heads on the feature rows. Targets are the label
// components; an inactive component maps to the fifth class of its head.
template <typename T>
HeadLoss heads_cross_entropy(nn::Tape<T>& tape, const model::Model& m, int feats,
                             const std::vector<data::GestureLabel>& labels);

struct LossToggles {
    bool triplet = true;
    bool real_ce = true;
    bool synth_ce = true;
};

struct LossTerms {
    int total = -1;     // always set
    int triplet = -1;   // term node ids; -1 when toggled off
    int real_ce = -1;
    int synth_ce = -1;
    bool triplet_empty = false;
};

// Unweighted sum of the enabled terms: the triplet loss over the mined
// result, cross-entropy on all real feature rows, cross-entropy on the
// synthetic combination rows. Disabling every term is a ConfigError.
template <typename T>
LossTerms total_loss(nn::Tape<T>& tape, const model::Model& m, int real_node,
                     const std::vector<data::GestureLabel>& real_labels, int synth_node,
                     const std::vector<data::GestureLabel>& synth_labels, int real_combo_node,
                     const MiningResult& mined, const CentroidBank& bank,
                     const TripletConfig& cfg, const LossToggles& toggles);

}  // namespace comhom::train
