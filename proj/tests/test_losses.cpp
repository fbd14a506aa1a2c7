#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "comhom/error.hpp"
#include "comhom/gradcheck.hpp"
#include "comhom/losses.hpp"
#include "comhom/model.hpp"
#include "doctest.h"

using namespace comhom;
using namespace comhom::train;
using model::kEmbeddingDim;

namespace {

// Rows are zero except column 0, which carries the given scalars; keeps the
// squared distances equal to scalar differences squared.
nn::Tensor scalar_rows(const std::vector<float>& col0) {
    nn::Tensor t({static_cast<int>(col0.size()), kEmbeddingDim});
    for (std::size_t r = 0; r < col0.size(); ++r) t.at2(static_cast<int>(r), 0) = col0[r];
    return t;
}

nn::Tensor random_rows(int n, RngStream& rng) {
    nn::Tensor t({n, kEmbeddingDim});
    for (auto& v : t.values) v = static_cast<float>(rng.normal());
    return t;
}

std::vector<int> random_classes(int n, int num_classes, RngStream& rng) {
    std::vector<int> c(static_cast<std::size_t>(n));
    for (auto& v : c) v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_classes)));
    return c;
}

// Exhaustive reference for the hard variant, written independently of the
// mining code: max-distance positive, min-distance negative, lowest row on
// ties, anchors in row order with real anchors first.
MiningResult brute_force_hard(const MiningBatch& b) {
    MiningResult out;
    for (const Side side : {Side::Real, Side::Synth}) {
        const nn::Tensor& anchors = side == Side::Real ? *b.real : *b.synth;
        const std::vector<int>& acls = side == Side::Real ? *b.real_classes : *b.synth_classes;
        const nn::Tensor& cand = side == Side::Real ? *b.synth : *b.real;
        const std::vector<int>& ccls = side == Side::Real ? *b.synth_classes : *b.real_classes;
        for (int a = 0; a < anchors.dim(0); ++a) {
            int bp = -1, bn = -1;
            double bpd = -1.0, bnd = 0.0;
            for (int r = 0; r < cand.dim(0); ++r) {
                const double d = row_distance(anchors, a, cand, r);
                if (ccls[static_cast<std::size_t>(r)] == acls[static_cast<std::size_t>(a)]) {
                    if (bp < 0 || d > bpd) {
                        bp = r;
                        bpd = d;
                    }
                } else if (bn < 0 || d < bnd) {
                    bn = r;
                    bnd = d;
                }
            }
            if (bp < 0 || bn < 0) {
                ++out.skipped_anchors;
                continue;
            }
            out.triplets.push_back({side, a,
                                    {TripletRef::Kind::Item, bp},
                                    {TripletRef::Kind::Item, bn}});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("triplet config bounds are enforced") {
    TripletConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.margin = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = {};
    cfg.pairs_per_anchor = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = {};
    cfg.momentum = 1.5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    CHECK_THROWS_AS(CentroidBank(-0.1), ConfigError);
}

TEST_CASE("centroid bank follows the moving-average closed form") {
    CentroidBank bank(0.9);
    CHECK(bank.ready_count(Side::Real) == 0);
    CHECK_FALSE(bank.has(Side::Real, 0));
    CHECK_THROWS_AS(bank.centroid(Side::Real, 0), ConfigError);

    SUBCASE("first observation adopts the batch mean, then C <- 0.9 C + 0.1 mean") {
        bank.update(Side::Real, scalar_rows({0.0f, 0.0f}), {0, 0});
        CHECK(bank.centroid(Side::Real, 0)[0] == 0.0f);
        bank.update(Side::Real, scalar_rows({1.0f, 1.0f}), {0, 0});
        CHECK(bank.centroid(Side::Real, 0)[0] == doctest::Approx(0.1).epsilon(1e-6));
        CHECK(bank.ready_count(Side::Real) == 1);
        CHECK_FALSE(bank.has(Side::Synth, 0));
    }

    SUBCASE("momentum 1 freezes the centroid after initialization") {
        CentroidBank frozen(1.0);
        frozen.update(Side::Synth, scalar_rows({2.0f}), {3});
        frozen.update(Side::Synth, scalar_rows({55.0f}), {3});
        CHECK(frozen.centroid(Side::Synth, 3)[0] == 2.0f);
    }

    SUBCASE("a repeated batch mean is a fixed point") {
        for (int t = 0; t < 4; ++t) bank.update(Side::Real, scalar_rows({2.5f, 2.5f}), {1, 1});
        CHECK(bank.centroid(Side::Real, 1)[0] == 2.5f);
    }

    SUBCASE("three-step trajectory matches a hand-rolled average") {
        const double means[] = {1.0, -2.0, 0.5};
        double c = 0.0;
        bool ready = false;
        for (const double m : means) {
            bank.update(Side::Real, scalar_rows({static_cast<float>(m)}), {7});
            c = ready ? 0.9 * c + 0.1 * m : m;
            ready = true;
        }
        CHECK(bank.centroid(Side::Real, 7)[0] == doctest::Approx(c).epsilon(1e-6));
    }

    SUBCASE("classes update independently within one batch") {
        bank.update(Side::Real, scalar_rows({1.0f, 3.0f, 10.0f}), {0, 0, 5});
        CHECK(bank.centroid(Side::Real, 0)[0] == 2.0f);
        CHECK(bank.centroid(Side::Real, 5)[0] == 10.0f);
        CHECK(bank.ready_count(Side::Real) == 2);
    }
}

TEST_CASE("mining respects label and side constraints") {
    RngStream rng(4, "test-mining");

    SUBCASE("single anchor with one positive and one negative candidate") {
        // real (Up,Pinch); synth {(Up,Pinch), (Up,Thumb)}
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor synth = scalar_rows({1.0f, 2.0f});
        const int cls_up_pinch = data::combo_class_index({data::Direction::Up,
                                                          data::Modifier::Pinch});
        const int cls_up_thumb = data::combo_class_index({data::Direction::Up,
                                                          data::Modifier::Thumb});
        const std::vector<int> rc = {cls_up_pinch};
        const std::vector<int> sc = {cls_up_pinch, cls_up_thumb};
        const MiningBatch batch{&real, &rc, &synth, &sc};
        CentroidBank bank;
        TripletConfig cfg;
        const MiningResult mined = mine_triplets(cfg, batch, bank, rng);
        REQUIRE(mined.triplets.size() == 1);
        CHECK(mined.triplets[0] ==
              Triplet{Side::Real, 0, {TripletRef::Kind::Item, 0}, {TripletRef::Kind::Item, 1}});
        // both synth anchors lack a positive or a negative on the real side
        CHECK(mined.skipped_anchors == 2);
    }

    SUBCASE("hard mining picks the farthest positive and closest negative") {
        // anchor at 0; positives at {1, 3}; negatives at {2, 5}
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor synth = scalar_rows({1.0f, 3.0f, 2.0f, 5.0f});
        const std::vector<int> rc = {0};
        const std::vector<int> sc = {0, 0, 1, 1};
        const MiningBatch batch{&real, &rc, &synth, &sc};
        CentroidBank bank;
        TripletConfig cfg;
        cfg.variant = MiningKind::Hard;
        const MiningResult mined = mine_triplets(cfg, batch, bank, rng);
        REQUIRE(mined.triplets.size() == 1);
        CHECK(mined.triplets[0] ==
              Triplet{Side::Real, 0, {TripletRef::Kind::Item, 1}, {TripletRef::Kind::Item, 2}});
        CHECK(mined.skipped_anchors == 4);
    }

    SUBCASE("basic mining stops early when candidates run out") {
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor synth = scalar_rows({1.0f, 2.0f, 3.0f, 4.0f, 5.0f});
        const std::vector<int> rc = {0};
        const std::vector<int> sc = {0, 0, 1, 1, 1};  // two positives, three negatives
        const MiningBatch batch{&real, &rc, &synth, &sc};
        CentroidBank bank;
        TripletConfig cfg;  // pairs_per_anchor = 3
        const MiningResult mined = mine_triplets(cfg, batch, bank, rng);
        int real_anchor_triplets = 0;
        for (const Triplet& t : mined.triplets)
            if (t.anchor_side == Side::Real) ++real_anchor_triplets;
        CHECK(real_anchor_triplets == 2);
    }

    SUBCASE("every emitted triplet is valid, all variants") {
        RngStream data_rng(8, "test-mining-data");
        for (int trial = 0; trial < 20; ++trial) {
            RngStream t = data_rng.fork("trial", static_cast<std::uint64_t>(trial));
            const int nr = 1 + static_cast<int>(t.uniform_int(24));
            const int ns = 1 + static_cast<int>(t.uniform_int(24));
            const nn::Tensor real = random_rows(nr, t);
            const nn::Tensor synth = random_rows(ns, t);
            const std::vector<int> rc = random_classes(nr, 5, t);
            const std::vector<int> sc = random_classes(ns, 5, t);
            const MiningBatch batch{&real, &rc, &synth, &sc};
            CentroidBank bank;
            bank.update(Side::Real, real, rc);
            bank.update(Side::Synth, synth, sc);
            for (const MiningKind kind :
                 {MiningKind::Basic, MiningKind::Hard, MiningKind::Centroids}) {
                TripletConfig cfg;
                cfg.variant = kind;
                RngStream m = t.fork("mine", static_cast<std::uint64_t>(kind));
                const MiningResult mined = mine_triplets(cfg, batch, bank, m);
                for (const Triplet& tr : mined.triplets) {
                    const bool real_anchor = tr.anchor_side == Side::Real;
                    const std::vector<int>& acls = real_anchor ? rc : sc;
                    const std::vector<int>& ccls = real_anchor ? sc : rc;
                    const int cls = acls[static_cast<std::size_t>(tr.anchor)];
                    if (tr.positive.kind == TripletRef::Kind::Item) {
                        CHECK(ccls[static_cast<std::size_t>(tr.positive.index)] == cls);
                        CHECK(ccls[static_cast<std::size_t>(tr.negative.index)] != cls);
                    } else {
                        const Side opp = real_anchor ? Side::Synth : Side::Real;
                        CHECK(tr.positive.index == cls);
                        CHECK(tr.negative.index != cls);
                        CHECK(bank.has(opp, tr.positive.index));
                        CHECK(bank.has(opp, tr.negative.index));
                    }
                }
            }
        }
    }

    SUBCASE("hard mining equals an exhaustive search") {
        RngStream data_rng(9, "test-mining-brute");
        for (int trial = 0; trial < 25; ++trial) {
            RngStream t = data_rng.fork("trial", static_cast<std::uint64_t>(trial));
            const int nr = 1 + static_cast<int>(t.uniform_int(32));
            const int ns = 1 + static_cast<int>(t.uniform_int(32));
            const nn::Tensor real = random_rows(nr, t);
            const nn::Tensor synth = random_rows(ns, t);
            const std::vector<int> rc = random_classes(nr, 4, t);
            const std::vector<int> sc = random_classes(ns, 4, t);
            const MiningBatch batch{&real, &rc, &synth, &sc};
            CentroidBank bank;
            TripletConfig cfg;
            cfg.variant = MiningKind::Hard;
            RngStream m = t.fork("mine", 0);
            const MiningResult mined = mine_triplets(cfg, batch, bank, m);
            const MiningResult ref = brute_force_hard(batch);
            REQUIRE(mined.triplets.size() == ref.triplets.size());
            CHECK(mined.skipped_anchors == ref.skipped_anchors);
            for (std::size_t i = 0; i < ref.triplets.size(); ++i)
                CHECK(mined.triplets[i] == ref.triplets[i]);
        }
    }

    SUBCASE("basic mining is deterministic per stream and covers all pairs") {
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor synth = scalar_rows({1.0f, 2.0f, 3.0f, 4.0f});
        const std::vector<int> rc = {2};
        const std::vector<int> sc = {2, 2, 3, 3};  // positives {0,1}, negatives {2,3}
        const MiningBatch batch{&real, &rc, &synth, &sc};
        CentroidBank bank;
        TripletConfig cfg;

        RngStream s1(123, "mine");
        RngStream s2(123, "mine");
        const MiningResult a = mine_triplets(cfg, batch, bank, s1);
        const MiningResult b = mine_triplets(cfg, batch, bank, s2);
        REQUIRE(a.triplets.size() == b.triplets.size());
        for (std::size_t i = 0; i < a.triplets.size(); ++i) CHECK(a.triplets[i] == b.triplets[i]);

        std::set<std::pair<int, int>> seen;
        RngStream root(7, "coverage");
        for (int draw = 0; draw < 1000; ++draw) {
            RngStream s = root.fork("draw", static_cast<std::uint64_t>(draw));
            const MiningResult mined = mine_triplets(cfg, batch, bank, s);
            for (const Triplet& t : mined.triplets)
                if (t.anchor_side == Side::Real)
                    seen.insert({t.positive.index, t.negative.index});
        }
        CHECK(seen.size() == 4);  // {0,1} x {2,3}
    }

    SUBCASE("centroid mining uses the positive class and a random ready class") {
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor synth = scalar_rows({1.0f});
        const std::vector<int> rc = {0};
        const std::vector<int> sc = {0};
        const MiningBatch batch{&real, &rc, &synth, &sc};
        TripletConfig cfg;
        cfg.variant = MiningKind::Centroids;

        CentroidBank bank;
        bank.update(Side::Synth, scalar_rows({1.0f, 5.0f, 9.0f}), {0, 4, 9});
        bank.update(Side::Real, scalar_rows({0.0f}), {0});

        std::set<int> negatives;
        RngStream root(11, "centroid-mine");
        for (int draw = 0; draw < 200; ++draw) {
            RngStream s = root.fork("draw", static_cast<std::uint64_t>(draw));
            const MiningResult mined = mine_triplets(cfg, batch, bank, s);
            for (const Triplet& t : mined.triplets) {
                if (t.anchor_side != Side::Real) continue;
                CHECK(t.positive == TripletRef{TripletRef::Kind::Centroid, 0});
                negatives.insert(t.negative.index);
            }
        }
        CHECK(negatives == std::set<int>{4, 9});

        // with no opposite-side centroid ready, every anchor is skipped
        CentroidBank empty_bank;
        RngStream s(1, "mine");
        const MiningResult none = mine_triplets(cfg, batch, empty_bank, s);
        CHECK(none.triplets.empty());
        CHECK(none.skipped_anchors == 2);
    }

    SUBCASE("an empty side is rejected") {
        const nn::Tensor real = scalar_rows({0.0f});
        const nn::Tensor empty({0, kEmbeddingDim});
        const std::vector<int> rc = {0};
        const std::vector<int> ec = {};
        CentroidBank bank;
        TripletConfig cfg;
        const MiningBatch batch{&real, &rc, &empty, &ec};
        CHECK_THROWS_AS(mine_triplets(cfg, batch, bank, rng), ConfigError);
    }
}

TEST_CASE("triplet loss evaluates the hinge in closed form") {
    nn::Tape<float> tape;

    SUBCASE("satisfied margin gives zero, violated margin the gap") {
        // anchor 0; positive at distance 0 and 9; negative at distance 2 and 4
        const int real = tape.input(scalar_rows({0.0f}), "real");
        const int synth = tape.input(scalar_rows({0.0f, 1.4142135f, 3.0f, -2.0f}), "synth");
        CentroidBank bank;
        MiningResult satisfied;
        satisfied.triplets.push_back(
            {Side::Real, 0, {TripletRef::Kind::Item, 0}, {TripletRef::Kind::Item, 1}});
        CHECK(tape.scalar(triplet_loss(tape, satisfied, real, synth, bank, 1.0)) ==
              doctest::Approx(0.0));

        MiningResult violated;
        violated.triplets.push_back(
            {Side::Real, 0, {TripletRef::Kind::Item, 2}, {TripletRef::Kind::Item, 3}});
        CHECK(tape.scalar(triplet_loss(tape, violated, real, synth, bank, 1.0)) ==
              doctest::Approx(6.0).epsilon(1e-5));

        MiningResult both;
        both.triplets = {satisfied.triplets[0], violated.triplets[0]};
        CHECK(tape.scalar(triplet_loss(tape, both, real, synth, bank, 1.0)) ==
              doctest::Approx(3.0).epsilon(1e-5));
    }

    SUBCASE("a collapsed embedding pays exactly the margin") {
        const int real = tape.input(scalar_rows({0.7f}), "real");
        const int synth = tape.input(scalar_rows({0.7f, 0.7f}), "synth");
        CentroidBank bank;
        MiningResult mined;
        mined.triplets.push_back(
            {Side::Real, 0, {TripletRef::Kind::Item, 0}, {TripletRef::Kind::Item, 1}});
        CHECK(tape.scalar(triplet_loss(tape, mined, real, synth, bank, 1.0)) ==
              doctest::Approx(1.0));
    }

    SUBCASE("an empty mining result contributes zero and raises the flag") {
        const int real = tape.input(scalar_rows({0.0f}), "real");
        const int synth = tape.input(scalar_rows({1.0f}), "synth");
        CentroidBank bank;
        bool empty = false;
        CHECK(tape.scalar(triplet_loss(tape, MiningResult{}, real, synth, bank, 1.0, &empty)) ==
              0.0f);
        CHECK(empty);
    }

    SUBCASE("centroid references read the bank") {
        const int real = tape.input(scalar_rows({0.0f}), "real");
        const int synth = tape.input(scalar_rows({0.0f}), "synth");
        CentroidBank bank;
        bank.update(Side::Synth, scalar_rows({1.0f, -2.0f}), {0, 1});
        MiningResult mined;
        mined.triplets.push_back(
            {Side::Real, 0, {TripletRef::Kind::Centroid, 0}, {TripletRef::Kind::Centroid, 1}});
        // d(a, C0)=1, d(a, C1)=4 -> max(1 - 4 + 1, 0) = 0; margin 5 -> 2
        CHECK(tape.scalar(triplet_loss(tape, mined, real, synth, bank, 1.0)) == 0.0f);
        CHECK(tape.scalar(triplet_loss(tape, mined, real, synth, bank, 5.0)) ==
              doctest::Approx(2.0));
    }
}

TEST_CASE("triplet loss gradients match finite differences off the hinge") {
    // both feature sides derive from one dense parameter layer
    nn::ParameterSet pf;
    RngStream rng(21, "test-loss-grad");
    nn::LayerGraph g;
    g.dense("feat", 8, kEmbeddingDim);
    init_layer_params(g, pf, rng);
    nn::ParameterSet64 p = nn::cast_params<double>(pf);

    nn::Tensor64 x({4, 8});
    for (auto& v : x.values) v = rng.normal();

    CentroidBank bank;
    bank.update(Side::Synth, scalar_rows({0.5f, -0.5f}), {0, 1});

    MiningResult item_mined;
    item_mined.triplets.push_back(
        {Side::Real, 0, {TripletRef::Kind::Item, 0}, {TripletRef::Kind::Item, 1}});
    item_mined.triplets.push_back(
        {Side::Synth, 1, {TripletRef::Kind::Item, 1}, {TripletRef::Kind::Item, 0}});
    MiningResult centroid_mined;
    centroid_mined.triplets.push_back(
        {Side::Real, 1, {TripletRef::Kind::Centroid, 1}, {TripletRef::Kind::Centroid, 0}});

    for (const MiningResult* mined : {&item_mined, &centroid_mined}) {
        const auto build = [&](nn::Tape<double>& tape) {
            const int feats = nn::apply_layers(tape, g, tape.input(x, "x"));
            const int real = tape.gather_rows(feats, {0, 1});
            const int synth = tape.gather_rows(feats, {2, 3});
            // margin 25 keeps every hinge strictly active
            return triplet_loss(tape, *mined, real, synth, bank, 25.0);
        };
        const nn::GradCheckReport report = nn::grad_check(build, p);
        CHECK(report.passed);
        CHECK(report.max_rel_err < 1e-4);
    }
}

TEST_CASE("head cross-entropy targets the label components") {
    const model::Model m = model::make_model({2, model::OperatorKind::Average,
                                              model::HeadsKind::Small});
    nn::ParameterSet p;
    RngStream rng(3, "test-heads");
    model::init_model_params(m, p, rng);

    SUBCASE("uniform heads score ln 5 per component") {
        p.value("heads.dir.w").fill(0.0f);
        p.value("heads.mod.w").fill(0.0f);
        nn::Tape<float> tape(p);
        const int feats = tape.input(random_rows(6, rng), "z");
        const std::vector<data::GestureLabel> labels(6, {data::Direction::Up,
                                                         data::Modifier::Pinch});
        const HeadLoss h = heads_cross_entropy(tape, m, feats, labels);
        CHECK(tape.scalar(h.direction) == doctest::Approx(std::log(5.0)).epsilon(1e-6));
        CHECK(tape.scalar(h.modifier) == doctest::Approx(std::log(5.0)).epsilon(1e-6));
        CHECK(tape.scalar(h.sum) == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-6));
    }

    SUBCASE("inactive components map to the fifth class") {
        p.value("heads.dir.w").fill(0.0f);
        p.value("heads.mod.w").fill(0.0f);
        // bias the modifier head hard toward its inactive class
        p.value("heads.mod.b").values = {0.0f, 0.0f, 0.0f, 0.0f, 30.0f};
        nn::Tape<float> tape(p);
        const int feats = tape.input(random_rows(2, rng), "z");
        const std::vector<data::GestureLabel> singles(2, {data::Direction::Left,
                                                          data::Modifier::NoMod});
        const HeadLoss h = heads_cross_entropy(tape, m, feats, singles);
        // direction singles carry NoMod, which that bias predicts perfectly
        CHECK(tape.scalar(h.modifier) == doctest::Approx(0.0).epsilon(1e-5));
        const std::vector<data::GestureLabel> combos(2, {data::Direction::Left,
                                                         data::Modifier::Fist});
        const HeadLoss hc = heads_cross_entropy(tape, m, feats, combos);
        CHECK(tape.scalar(hc.modifier) == doctest::Approx(30.0).epsilon(1e-3));
    }

    SUBCASE("label count must match the feature rows") {
        nn::Tape<float> tape(p);
        const int feats = tape.input(random_rows(3, rng), "z");
        const std::vector<data::GestureLabel> labels(2);
        CHECK_THROWS_AS(heads_cross_entropy(tape, m, feats, labels), ConfigError);
    }
}

TEST_CASE("total loss sums exactly the enabled terms") {
    const model::Model m = model::make_model({2, model::OperatorKind::Average,
                                              model::HeadsKind::Small});
    nn::ParameterSet p;
    RngStream rng(5, "test-total");
    model::init_model_params(m, p, rng);

    const nn::Tensor real_t = random_rows(4, rng);
    const nn::Tensor synth_t = random_rows(4, rng);
    const std::vector<data::GestureLabel> real_labels = {
        {data::Direction::Up, data::Modifier::NoMod},
        {data::Direction::NoDir, data::Modifier::Fist},
        {data::Direction::Up, data::Modifier::Fist},
        {data::Direction::Down, data::Modifier::Pinch},
    };
    const std::vector<data::GestureLabel> synth_labels = {
        {data::Direction::Up, data::Modifier::Fist},
        {data::Direction::Down, data::Modifier::Pinch},
        {data::Direction::Left, data::Modifier::Open},
        {data::Direction::Right, data::Modifier::Thumb},
    };
    const std::vector<int> real_combo_cls = {data::combo_class_index(real_labels[2]),
                                             data::combo_class_index(real_labels[3])};
    const std::vector<int> synth_cls = {
        data::combo_class_index(synth_labels[0]), data::combo_class_index(synth_labels[1]),
        data::combo_class_index(synth_labels[2]), data::combo_class_index(synth_labels[3])};

    CentroidBank bank;
    TripletConfig cfg;

    const auto build_terms = [&](const LossToggles& toggles, nn::Tape<float>& tape) {
        const int real = tape.input(real_t, "real");
        const int synth = tape.input(synth_t, "synth");
        const int real_combo = tape.gather_rows(real, {2, 3});
        nn::Tensor combo_t({2, kEmbeddingDim});
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < kEmbeddingDim; ++c) combo_t.at2(r, c) = real_t.at2(r + 2, c);
        RngStream mine_rng(17, "mine");
        const MiningBatch batch{&combo_t, &real_combo_cls, &synth_t, &synth_cls};
        const MiningResult mined = mine_triplets(cfg, batch, bank, mine_rng);
        return total_loss(tape, m, real, real_labels, synth, synth_labels, real_combo, mined,
                          bank, cfg, toggles);
    };

    SUBCASE("disabling everything is a configuration error") {
        nn::Tape<float> tape(p);
        CHECK_THROWS_AS(build_terms({false, false, false}, tape), ConfigError);
    }

    SUBCASE("single-term toggles reproduce each term alone") {
        nn::Tape<float> t_all(p);
        const LossTerms all = build_terms({true, true, true}, t_all);
        nn::Tape<float> t_trip(p);
        const LossTerms trip = build_terms({true, false, false}, t_trip);
        nn::Tape<float> t_real(p);
        const LossTerms real_only = build_terms({false, true, false}, t_real);
        nn::Tape<float> t_synth(p);
        const LossTerms synth_only = build_terms({false, false, true}, t_synth);

        CHECK(t_trip.scalar(trip.total) == t_all.scalar(all.triplet));
        CHECK(t_real.scalar(real_only.total) == t_all.scalar(all.real_ce));
        CHECK(t_synth.scalar(synth_only.total) == t_all.scalar(all.synth_ce));
        const double sum = static_cast<double>(t_all.scalar(all.triplet)) +
                           t_all.scalar(all.real_ce) + t_all.scalar(all.synth_ce);
        CHECK(t_all.scalar(all.total) == doctest::Approx(sum).epsilon(1e-6));
        CHECK(trip.real_ce == -1);
        CHECK(real_only.triplet == -1);
    }

    SUBCASE("triplet-only total is zero when every margin is satisfied") {
        nn::Tape<float> tape(p);
        const int real = tape.input(scalar_rows({0.0f}), "real");
        const int synth = tape.input(scalar_rows({0.0f, 100.0f}), "synth");
        MiningResult mined;
        mined.triplets.push_back(
            {Side::Real, 0, {TripletRef::Kind::Item, 0}, {TripletRef::Kind::Item, 1}});
        const LossTerms terms =
            total_loss(tape, m, real, real_labels, synth, synth_labels, real, mined, bank, cfg,
                       {true, false, false});
        CHECK(tape.scalar(terms.total) == 0.0f);
    }

    SUBCASE("uniform heads make the real term 2 ln 5") {
        p.value("heads.dir.w").fill(0.0f);
        p.value("heads.mod.w").fill(0.0f);
        nn::Tape<float> tape(p);
        const LossTerms terms = build_terms({false, true, false}, tape);
        CHECK(tape.scalar(terms.total) == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-6));
    }
}
