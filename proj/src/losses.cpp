#include "comhom/losses.hpp"

#include <algorithm>
#include <cstddef>

#include "comhom/error.hpp"

namespace comhom::train {

namespace {

const std::string kMiningNames[] = {"basic", "hard", "centroids"};

Side opposite(Side s) { return s == Side::Real ? Side::Synth : Side::Real; }

void check_rows(const nn::Tensor* feats, const std::vector<int>* classes, const char* side) {
    if (!feats || !classes)
        throw ConfigError(std::string("mining batch is missing the ") + side + " side");
    if (feats->rank() != 2 || feats->dim(1) != model::kEmbeddingDim)
        throw ConfigError(std::string(side) + " features must be [n, 64], got " +
                          feats->shape_str());
    if (static_cast<std::size_t>(feats->dim(0)) != classes->size())
        throw ConfigError(std::string(side) + " feature rows and class labels disagree");
    if (feats->dim(0) < 1)
        throw ConfigError(std::string("mining needs at least one ") + side + " feature row");
    for (const int c : *classes)
        if (c < 0 || c >= data::kNumComboClasses)
            throw ConfigError(std::string(side) + " combination class out of range: " +
                              std::to_string(c));
}

}  // namespace

const std::string& mining_kind_name(MiningKind k) { return kMiningNames[static_cast<int>(k)]; }

MiningKind parse_mining_kind(const std::string& s) {
    if (s == "basic") return MiningKind::Basic;
    if (s == "hard") return MiningKind::Hard;
    if (s == "centroids") return MiningKind::Centroids;
    throw ConfigError("unknown triplet variant '" + s + "' (basic|hard|centroids)");
}

void validate(const TripletConfig& cfg) {
    if (!(cfg.margin > 0.0)) throw ConfigError("triplet margin must be positive");
    if (cfg.pairs_per_anchor < 1) throw ConfigError("pairs per anchor must be at least 1");
    if (cfg.momentum < 0.0 || cfg.momentum > 1.0)
        throw ConfigError("centroid momentum must lie in [0, 1]");
}

CentroidBank::CentroidBank(double momentum) : momentum_(momentum) {
    if (momentum_ < 0.0 || momentum_ > 1.0)
        throw ConfigError("centroid momentum must lie in [0, 1]");
    for (auto& bank : banks_)
        bank = nn::Tensor({data::kNumComboClasses, model::kEmbeddingDim});
}

void CentroidBank::update(Side side, const nn::Tensor& feats, const std::vector<int>& classes) {
    check_rows(&feats, &classes, side == Side::Real ? "real" : "synthetic");
    nn::Tensor& bank = banks_[static_cast<std::size_t>(side)];
    auto& ready = ready_[static_cast<std::size_t>(side)];
    for (int cls = 0; cls < data::kNumComboClasses; ++cls) {
        std::array<double, model::kEmbeddingDim> sum{};
        int count = 0;
        for (std::size_t r = 0; r < classes.size(); ++r) {
            if (classes[r] != cls) continue;
            ++count;
            for (int c = 0; c < model::kEmbeddingDim; ++c)
                sum[static_cast<std::size_t>(c)] += feats.at2(static_cast<int>(r), c);
        }
        if (count == 0) continue;
        for (int c = 0; c < model::kEmbeddingDim; ++c) {
            const double mean = sum[static_cast<std::size_t>(c)] / count;
            const double old = bank.at2(cls, c);
            bank.at2(cls, c) = static_cast<float>(
                ready[static_cast<std::size_t>(cls)] ? momentum_ * old + (1.0 - momentum_) * mean
                                                     : mean);
        }
        ready[static_cast<std::size_t>(cls)] = true;
    }
}

bool CentroidBank::has(Side side, int combo_class) const {
    if (combo_class < 0 || combo_class >= data::kNumComboClasses)
        throw ConfigError("combination class out of range: " + std::to_string(combo_class));
    return ready_[static_cast<std::size_t>(side)][static_cast<std::size_t>(combo_class)];
}

int CentroidBank::ready_count(Side side) const {
    int n = 0;
    for (const bool b : ready_[static_cast<std::size_t>(side)]) n += b ? 1 : 0;
    return n;
}

std::vector<float> CentroidBank::centroid(Side side, int combo_class) const {
    if (!has(side, combo_class))
        throw ConfigError("centroid requested before any observation of class " +
                          std::to_string(combo_class));
    const nn::Tensor& bank = banks_[static_cast<std::size_t>(side)];
    std::vector<float> out(model::kEmbeddingDim);
    for (int c = 0; c < model::kEmbeddingDim; ++c)
        out[static_cast<std::size_t>(c)] = bank.at2(combo_class, c);
    return out;
}

double row_distance(const nn::Tensor& a, int row_a, const nn::Tensor& b, int row_b) {
    double d = 0.0;
    for (int c = 0; c < model::kEmbeddingDim; ++c) {
        const double diff =
            static_cast<double>(a.at2(row_a, c)) - static_cast<double>(b.at2(row_b, c));
        d += diff * diff;
    }
    return d;
}

MiningResult mine_triplets(const TripletConfig& cfg, const MiningBatch& batch,
                           const CentroidBank& bank, RngStream& rng) {
    validate(cfg);
    check_rows(batch.real, batch.real_classes, "real");
    check_rows(batch.synth, batch.synth_classes, "synthetic");

    MiningResult out;
    for (const Side side : {Side::Real, Side::Synth}) {
        const bool real_anchor = side == Side::Real;
        const nn::Tensor& anchors = real_anchor ? *batch.real : *batch.synth;
        const std::vector<int>& anchor_cls =
            real_anchor ? *batch.real_classes : *batch.synth_classes;
        const nn::Tensor& cand = real_anchor ? *batch.synth : *batch.real;
        const std::vector<int>& cand_cls =
            real_anchor ? *batch.synth_classes : *batch.real_classes;
        const Side cand_side = opposite(side);

        for (int a = 0; a < anchors.dim(0); ++a) {
            const int cls = anchor_cls[static_cast<std::size_t>(a)];
            if (cfg.variant == MiningKind::Centroids) {
                if (!bank.has(cand_side, cls)) {
                    ++out.skipped_anchors;
                    continue;
                }
                std::vector<int> neg_classes;
                for (int c = 0; c < data::kNumComboClasses; ++c)
                    if (c != cls && bank.has(cand_side, c)) neg_classes.push_back(c);
                if (neg_classes.empty()) {
                    ++out.skipped_anchors;
                    continue;
                }
                const int neg = neg_classes[static_cast<std::size_t>(
                    rng.uniform_int(neg_classes.size()))];
                out.triplets.push_back({side, a,
                                        {TripletRef::Kind::Centroid, cls},
                                        {TripletRef::Kind::Centroid, neg}});
                continue;
            }

            std::vector<int> pos, neg;
            for (std::size_t r = 0; r < cand_cls.size(); ++r)
                (cand_cls[r] == cls ? pos : neg).push_back(static_cast<int>(r));
            if (pos.empty() || neg.empty()) {
                ++out.skipped_anchors;
                continue;
            }

            if (cfg.variant == MiningKind::Hard) {
                int best_pos = pos.front();
                double best_pos_d = row_distance(anchors, a, cand, best_pos);
                for (const int p : pos) {
                    const double d = row_distance(anchors, a, cand, p);
                    if (d > best_pos_d) {
                        best_pos_d = d;
                        best_pos = p;
                    }
                }
                int best_neg = neg.front();
                double best_neg_d = row_distance(anchors, a, cand, best_neg);
                for (const int n : neg) {
                    const double d = row_distance(anchors, a, cand, n);
                    if (d < best_neg_d) {
                        best_neg_d = d;
                        best_neg = n;
                    }
                }
                out.triplets.push_back({side, a,
                                        {TripletRef::Kind::Item, best_pos},
                                        {TripletRef::Kind::Item, best_neg}});
                continue;
            }

            const int k = std::min<int>(cfg.pairs_per_anchor,
                                        std::min<int>(static_cast<int>(pos.size()),
                                                      static_cast<int>(neg.size())));
            const std::vector<int> pos_pick =
                rng.sample_without_replacement(static_cast<int>(pos.size()), k);
            const std::vector<int> neg_pick =
                rng.sample_without_replacement(static_cast<int>(neg.size()), k);
            for (int i = 0; i < k; ++i)
                out.triplets.push_back(
                    {side, a,
                     {TripletRef::Kind::Item, pos[static_cast<std::size_t>(pos_pick[static_cast<std::size_t>(i)])]},
                     {TripletRef::Kind::Item, neg[static_cast<std::size_t>(neg_pick[static_cast<std::size_t>(i)])]}});
        }
    }
    return out;
}

namespace {

template <typename T>
int centroid_matrix(nn::Tape<T>& tape, const CentroidBank& bank, Side side,
                    const std::vector<int>& classes, const char* label) {
    nn::TensorT<T> m({static_cast<int>(classes.size()), model::kEmbeddingDim});
    for (std::size_t r = 0; r < classes.size(); ++r) {
        const std::vector<float> row = bank.centroid(side, classes[r]);
        for (int c = 0; c < model::kEmbeddingDim; ++c)
            m.at2(static_cast<int>(r), c) = static_cast<T>(row[static_cast<std::size_t>(c)]);
    }
    return tape.input(std::move(m), label);
}

}  // namespace

template <typename T>
int triplet_loss(nn::Tape<T>& tape, const MiningResult& mined, int real_combo_node,
                 int synth_node, const CentroidBank& bank, double margin, bool* empty_flag) {
    if (empty_flag) *empty_flag = mined.triplets.empty();
    if (mined.triplets.empty()) return tape.input(nn::TensorT<T>({1}), "triplet_zero");

    std::vector<int> term_nodes;
    std::vector<double> term_weights;
    const double total = static_cast<double>(mined.triplets.size());
    std::size_t grouped = 0;

    // One gather group per (anchor side, reference kinds) combination; the
    // group means recombine into the overall mean by triplet-count weights.
    for (const Side side : {Side::Real, Side::Synth}) {
        for (const TripletRef::Kind pos_kind :
             {TripletRef::Kind::Item, TripletRef::Kind::Centroid}) {
            std::vector<const Triplet*> group;
            for (const Triplet& t : mined.triplets)
                if (t.anchor_side == side && t.positive.kind == pos_kind &&
                    t.negative.kind == pos_kind)
                    group.push_back(&t);
            if (group.empty()) continue;

            const int anchor_node = side == Side::Real ? real_combo_node : synth_node;
            const int opp_node = side == Side::Real ? synth_node : real_combo_node;
            const Side opp_side = opposite(side);

            std::vector<int> a_rows, p_idx, n_idx;
            for (const Triplet* t : group) {
                a_rows.push_back(t->anchor);
                p_idx.push_back(t->positive.index);
                n_idx.push_back(t->negative.index);
            }
            const int a = tape.gather_rows(anchor_node, a_rows);
            int p, n;
            if (pos_kind == TripletRef::Kind::Item) {
                p = tape.gather_rows(opp_node, p_idx);
                n = tape.gather_rows(opp_node, n_idx);
            } else {
                p = centroid_matrix(tape, bank, opp_side, p_idx, "pos_centroids");
                n = centroid_matrix(tape, bank, opp_side, n_idx, "neg_centroids");
            }
            const int hinge = tape.relu(
                tape.add_const(tape.sub(tape.row_sqdist(a, p), tape.row_sqdist(a, n)), margin));
            term_nodes.push_back(tape.mean_all(hinge));
            term_weights.push_back(static_cast<double>(group.size()) / total);
            grouped += group.size();
        }
    }
    if (grouped != mined.triplets.size())
        throw ConfigError("triplet with mixed item/centroid references");
    if (term_nodes.size() == 1) return term_nodes.front();
    return tape.weighted_sum(term_nodes, term_weights);
}

template <typename T>
HeadLoss heads_cross_entropy(nn::Tape<T>& tape, const model::Model& m, int feats,
                             const std::vector<data::GestureLabel>& labels) {
    const auto& v = tape.value(feats);
    if (v.rank() != 2 || static_cast<std::size_t>(v.dim(0)) != labels.size())
        throw ConfigError("head loss needs one label per feature row, got " + v.shape_str() +
                          " and " + std::to_string(labels.size()) + " labels");
    std::vector<int> dir_targets, mod_targets;
    dir_targets.reserve(labels.size());
    mod_targets.reserve(labels.size());
    for (const data::GestureLabel& l : labels) {
        dir_targets.push_back(static_cast<int>(l.direction));
        mod_targets.push_back(static_cast<int>(l.modifier));
    }
    HeadLoss h;
    h.direction =
        tape.softmax_cross_entropy(nn::apply_layers(tape, m.dir_head, feats), dir_targets);
    h.modifier =
        tape.softmax_cross_entropy(nn::apply_layers(tape, m.mod_head, feats), mod_targets);
    h.sum = tape.add(h.direction, h.modifier);
    return h;
}

template <typename T>
LossTerms total_loss(nn::Tape<T>& tape, const model::Model& m, int real_node,
                     const std::vector<data::GestureLabel>& real_labels, int synth_node,
                     const std::vector<data::GestureLabel>& synth_labels, int real_combo_node,
                     const MiningResult& mined, const CentroidBank& bank,
                     const TripletConfig& cfg, const LossToggles& toggles) {
    validate(cfg);
    if (!toggles.triplet && !toggles.real_ce && !toggles.synth_ce)
        throw ConfigError("every loss term is disabled; enable at least one");
    LossTerms terms;
    std::vector<int> nodes;
    if (toggles.triplet) {
        terms.triplet = triplet_loss(tape, mined, real_combo_node, synth_node, bank, cfg.margin,
                                     &terms.triplet_empty);
        nodes.push_back(terms.triplet);
    }
    if (toggles.real_ce) {
        terms.real_ce = heads_cross_entropy(tape, m, real_node, real_labels).sum;
        nodes.push_back(terms.real_ce);
    }
    if (toggles.synth_ce) {
        terms.synth_ce = heads_cross_entropy(tape, m, synth_node, synth_labels).sum;
        nodes.push_back(terms.synth_ce);
    }
    terms.total = nodes.size() == 1
                      ? nodes.front()
                      : tape.weighted_sum(nodes, std::vector<double>(nodes.size(), 1.0));
    return terms;
}

template int triplet_loss<float>(nn::Tape<float>&, const MiningResult&, int, int,
                                 const CentroidBank&, double, bool*);
template int triplet_loss<double>(nn::Tape<double>&, const MiningResult&, int, int,
                                  const CentroidBank&, double, bool*);
template HeadLoss heads_cross_entropy<float>(nn::Tape<float>&, const model::Model&, int,
                                             const std::vector<data::GestureLabel>&);
template HeadLoss heads_cross_entropy<double>(nn::Tape<double>&, const model::Model&, int,
                                              const std::vector<data::GestureLabel>&);
template LossTerms total_loss<float>(nn::Tape<float>&, const model::Model&, int,
                                     const std::vector<data::GestureLabel>&, int,
                                     const std::vector<data::GestureLabel>&, int,
                                     const MiningResult&, const CentroidBank&,
                                     const TripletConfig&, const LossToggles&);
template LossTerms total_loss<double>(nn::Tape<double>&, const model::Model&, int,
                                      const std::vector<data::GestureLabel>&, int,
                                      const std::vector<data::GestureLabel>&, int,
                                      const MiningResult&, const CentroidBank&,
                                      const TripletConfig&, const LossToggles&);

}  // namespace comhom::train
