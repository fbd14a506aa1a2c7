#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <sstream>

#include "comhom/error.hpp"
#include "comhom/metrics.hpp"
#include "comhom/rng.hpp"
#include "doctest.h"

using namespace comhom;
using namespace comhom::metrics;

namespace {

// n items of every stored class, truth order class-major
std::vector<data::GestureLabel> full_truth(int per_class) {
    std::vector<data::GestureLabel> truth;
    for (int c = 0; c < data::kNumStoredClasses; ++c)
        for (int i = 0; i < per_class; ++i) truth.push_back(data::label_from_class_index(c));
    return truth;
}

nn::Tensor point_set(int n, int dim, float value) {
    nn::Tensor t({n, dim});
    t.fill(value);
    return t;
}

}  // namespace

TEST_CASE("balanced accuracy averages per-class recall") {
    const std::vector<data::GestureLabel> truth = full_truth(3);

    SUBCASE("perfect predictions score 1 on every subset") {
        for (const ClassSubset s : {ClassSubset::Single, ClassSubset::Combo, ClassSubset::All}) {
            CHECK(balanced_accuracy(truth, truth, s) == doctest::Approx(1.0));
        }
    }

    SUBCASE("fully correct and fully wrong classes average to one half") {
        std::vector<data::GestureLabel> pred = truth;
        // break all predictions for the first 4 single and the first 8 combo
        // classes: half of each subset
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const int c = data::class_index(truth[i]);
            if (c < 4 || (c >= 8 && c < 16))
                pred[i] = {data::Direction::NoDir, data::Modifier::NoMod};
        }
        CHECK(balanced_accuracy(truth, pred, ClassSubset::Single) == doctest::Approx(0.5));
        CHECK(balanced_accuracy(truth, pred, ClassSubset::Combo) == doctest::Approx(0.5));
        CHECK(balanced_accuracy(truth, pred, ClassSubset::All) == doctest::Approx(0.5));
    }

    SUBCASE("out-of-subset predictions are plain errors") {
        std::vector<data::GestureLabel> pred = truth;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (truth[i].is_combination()) pred[i] = {data::Direction::Up, data::Modifier::NoMod};
        CHECK(balanced_accuracy(truth, pred, ClassSubset::Combo) == doctest::Approx(0.0));
        CHECK(balanced_accuracy(truth, pred, ClassSubset::Single) == doctest::Approx(1.0));
        CHECK(balanced_accuracy(truth, pred, ClassSubset::All) ==
              doctest::Approx(8.0 / 24.0));
    }

    SUBCASE("an absent subset class is rejected") {
        std::vector<data::GestureLabel> some(truth.begin(), truth.begin() + 6);
        CHECK_THROWS_AS(balanced_accuracy(some, some, ClassSubset::Single), ConfigError);
        CHECK_THROWS_AS(balanced_accuracy(some, some, ClassSubset::All), ConfigError);
    }

    SUBCASE("argument validation") {
        std::vector<data::GestureLabel> pred = truth;
        pred.pop_back();
        CHECK_THROWS_AS(balanced_accuracy(truth, pred, ClassSubset::All), ConfigError);
        CHECK_THROWS_AS(balanced_accuracy({}, {}, ClassSubset::All), ConfigError);
        std::vector<data::GestureLabel> rest_truth = {
            {data::Direction::NoDir, data::Modifier::NoMod}};
        CHECK_THROWS_AS(balanced_accuracy(rest_truth, rest_truth, ClassSubset::All), LabelError);
    }

    SUBCASE("subset names round-trip") {
        for (const ClassSubset s : {ClassSubset::Single, ClassSubset::Combo, ClassSubset::All})
            CHECK(parse_class_subset(class_subset_name(s)) == s);
        CHECK_THROWS_AS(parse_class_subset("everything"), ConfigError);
    }
}

TEST_CASE("confusion matrix layout") {
    const std::vector<data::GestureLabel> truth = full_truth(2);

    SUBCASE("correct predictions land on the diagonal") {
        const ConfusionMatrix cm = confusion_matrix(truth, truth);
        for (int t = 0; t < data::kNumStoredClasses; ++t) {
            CHECK(cm.row_sum(t) == 2);
            for (int p = 0; p < data::kNumPredictionClasses; ++p)
                CHECK(cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] ==
                      (t == p ? 2 : 0));
            CHECK(cm.normalized(t, t) == doctest::Approx(1.0));
        }
    }

    SUBCASE("rest predictions fill the outlier column") {
        const std::vector<data::GestureLabel> pred(
            truth.size(), {data::Direction::NoDir, data::Modifier::NoMod});
        const ConfusionMatrix cm = confusion_matrix(truth, pred);
        for (int t = 0; t < data::kNumStoredClasses; ++t) {
            CHECK(cm.counts[static_cast<std::size_t>(t)][data::kRestClassIndex] == 2);
            CHECK(cm.normalized(t, data::kRestClassIndex) == doctest::Approx(1.0));
        }
    }

    SUBCASE("normalized rows sum to one") {
        RngStream rng(3, "confusion");
        std::vector<data::GestureLabel> pred;
        for (std::size_t i = 0; i < truth.size(); ++i)
            pred.push_back(data::label_from_class_index(rng.uniform_int(24)));
        const ConfusionMatrix cm = confusion_matrix(truth, pred);
        for (int t = 0; t < data::kNumStoredClasses; ++t) {
            double sum = 0.0;
            for (int p = 0; p < data::kNumPredictionClasses; ++p) sum += cm.normalized(t, p);
            CHECK(sum == doctest::Approx(1.0));
        }
    }

    SUBCASE("balanced accuracy cross-checks against the matrix") {
        RngStream rng(9, "cross");
        const std::vector<data::GestureLabel> many = full_truth(7);
        std::vector<data::GestureLabel> pred;
        for (std::size_t i = 0; i < many.size(); ++i) {
            const int c = rng.uniform_int(25);
            pred.push_back(c == 24 ? data::GestureLabel{data::Direction::NoDir,
                                                        data::Modifier::NoMod}
                                   : data::label_from_class_index(c));
        }
        const ConfusionMatrix cm = confusion_matrix(many, pred);
        double mean_recall = 0.0;
        for (int t = 0; t < data::kNumStoredClasses; ++t)
            mean_recall += cm.normalized(t, t);
        mean_recall /= data::kNumStoredClasses;
        CHECK(std::fabs(balanced_accuracy(many, pred, ClassSubset::All) - mean_recall) < 1e-12);
    }

    SUBCASE("csv serialization carries both views") {
        const ConfusionMatrix cm = confusion_matrix(truth, truth);
        const std::string counts_csv = confusion_csv(cm, false);
        std::istringstream in(counts_csv);
        std::string header;
        REQUIRE(std::getline(in, header));
        CHECK(header.substr(0, 9) == "true\\pred");
        CHECK(header.find("Up+Thumb") != std::string::npos);
        CHECK(header.find(",Rest") != std::string::npos);
        int rows = 0;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == data::kNumStoredClasses);
        CHECK(confusion_csv(cm, true).find("true\\pred") == 0);
    }
}

TEST_CASE("kernel similarity values") {
    std::vector<float> a(64, 0.0f);

    SUBCASE("identical vectors score one") {
        CHECK(rbf_similarity(a, a) == doctest::Approx(1.0));
    }

    SUBCASE("squared distance 128 at the default width gives 1/e") {
        std::vector<float> b(64, 0.0f);
        for (int j = 0; j < 32; ++j) b[static_cast<std::size_t>(j)] = 2.0f;  // 32 * 4 = 128
        CHECK(std::fabs(rbf_similarity(a, b) - std::exp(-1.0)) < 1e-9);
    }

    SUBCASE("distance drives similarity toward zero") {
        std::vector<float> far(64, 100.0f);
        CHECK(rbf_similarity(a, far) < 1e-30);
    }

    SUBCASE("dimension mismatch is rejected") {
        std::vector<float> three(3, 0.0f);
        CHECK_THROWS_AS(rbf_similarity(a, three), ConfigError);
        CHECK_THROWS_AS(rbf_similarity({}, {}), ConfigError);
    }
}

TEST_CASE("set similarity") {
    SUBCASE("distinct singleton sets with equal vectors score one") {
        const nn::Tensor z1 = point_set(1, 8, 3.0f);
        const nn::Tensor z2 = point_set(1, 8, 3.0f);
        CHECK(set_sim(z1, z2) == doctest::Approx(1.0));
    }

    SUBCASE("a within-set pair at squared distance 128 gives 1/e") {
        nn::Tensor z({2, 64});
        for (int j = 0; j < 32; ++j) z.at2(1, j) = 2.0f;
        CHECK(std::fabs(set_sim_within(z) - std::exp(-1.0)) < 1e-9);
    }

    SUBCASE("permuting rows changes nothing") {
        RngStream rng(21, "perm");
        nn::Tensor z1({5, 16}), z2({7, 16});
        for (float& v : z1.values) v = static_cast<float>(rng.normal());
        for (float& v : z2.values) v = static_cast<float>(rng.normal());
        const double base = set_sim(z1, z2);
        const double within = set_sim_within(z2);
        nn::Tensor z1p = z1, z2p = z2;
        // rotate rows by two
        std::rotate(z1p.values.begin(), z1p.values.begin() + 2 * 16, z1p.values.end());
        std::rotate(z2p.values.begin(), z2p.values.begin() + 3 * 16, z2p.values.end());
        CHECK(std::fabs(set_sim(z1p, z2p) - base) < 1e-12);
        CHECK(std::fabs(set_sim_within(z2p) - within) < 1e-12);
    }

    SUBCASE("far translation kills similarity") {
        const nn::Tensor z1 = point_set(3, 8, 0.0f);
        const nn::Tensor z2 = point_set(3, 8, 1000.0f);
        CHECK(set_sim(z1, z2) < 1e-30);
    }

    SUBCASE("degenerate sets are rejected") {
        const nn::Tensor one = point_set(1, 8, 0.0f);
        CHECK_THROWS_AS(set_sim_within(one), ConfigError);
        const nn::Tensor empty({0, 8});
        CHECK_THROWS_AS(set_sim(empty, one), ConfigError);
        const nn::Tensor other_dim = point_set(2, 4, 0.0f);
        CHECK_THROWS_AS(set_sim(one, other_dim), ConfigError);
    }
}

TEST_CASE("similarity matrix regions") {
    SUBCASE("identical features everywhere give all ones") {
        const std::vector<nn::Tensor> side(16, point_set(3, 8, 1.5f));
        const auto [m, s] = similarity_matrix(side, side);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j)
                CHECK(m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
                      doctest::Approx(1.0));
        CHECK(s.real_within == doctest::Approx(1.0));
        CHECK(s.synth_within == doctest::Approx(1.0));
        CHECK(s.matching == doctest::Approx(1.0));
        CHECK(s.non_matching == doctest::Approx(1.0));
    }

    SUBCASE("separated classes isolate the matching band") {
        // real and synth class c share a tight location, classes far apart
        std::vector<nn::Tensor> real, synth;
        for (int c = 0; c < 16; ++c) {
            real.push_back(point_set(2, 8, 100.0f * static_cast<float>(c + 1)));
            synth.push_back(point_set(2, 8, 100.0f * static_cast<float>(c + 1)));
        }
        const auto [m, s] = similarity_matrix(real, synth);
        CHECK(s.real_within == doctest::Approx(1.0));
        CHECK(s.synth_within == doctest::Approx(1.0));
        CHECK(s.matching == doctest::Approx(1.0));
        CHECK(s.non_matching < 1e-12);
        CHECK(s.matching > s.non_matching);

        // symmetry; far pairs may underflow the kernel to exactly zero
        for (int i = 0; i < 32; ++i) {
            for (int j = 0; j < 32; ++j) {
                const double v =
                    m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                CHECK(std::fabs(
                          v - m.values[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) <
                      1e-6);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }

    SUBCASE("region accounting puts every lower cell in exactly one bucket") {
        RngStream rng(33, "msim");
        std::vector<nn::Tensor> real, synth;
        for (int c = 0; c < 16; ++c) {
            nn::Tensor r({3, 8}), s({3, 8});
            for (float& v : r.values) v = static_cast<float>(rng.normal());
            for (float& v : s.values) v = static_cast<float>(rng.normal());
            real.push_back(r);
            synth.push_back(s);
        }
        const auto [m, s] = similarity_matrix(real, synth);
        double diag_sum = 0.0, match_sum = 0.0, other_sum = 0.0;
        int other_n = 0;
        for (int i = 0; i < 32; ++i) diag_sum += m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        for (int i = 0; i < 16; ++i)
            match_sum += m.values[static_cast<std::size_t>(i + 16)][static_cast<std::size_t>(i)];
        for (int i = 1; i < 32; ++i)
            for (int j = 0; j < i; ++j)
                if (i - j != 16) {
                    other_sum += m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                    ++other_n;
                }
        CHECK(other_n == 32 * 31 / 2 - 16);
        CHECK(std::fabs(s.real_within + s.synth_within - diag_sum / 16.0) < 1e-12);
        CHECK(std::fabs(s.matching - match_sum / 16.0) < 1e-12);
        CHECK(std::fabs(s.non_matching - other_sum / other_n) < 1e-12);

        // moderate distances keep every entry strictly inside (0, 1]
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const double v =
                    m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                CHECK(v > 0.0);
                CHECK(v <= 1.0);
            }
    }

    SUBCASE("missing or singleton classes are rejected") {
        std::vector<nn::Tensor> fifteen(15, point_set(2, 8, 0.0f));
        const std::vector<nn::Tensor> ok(16, point_set(2, 8, 0.0f));
        CHECK_THROWS_AS(similarity_matrix(fifteen, ok), ConfigError);
        std::vector<nn::Tensor> singleton(16, point_set(2, 8, 0.0f));
        singleton[4] = point_set(1, 8, 0.0f);
        CHECK_THROWS_AS(similarity_matrix(singleton, ok), ConfigError);
    }

    SUBCASE("csv names both sides") {
        const std::vector<nn::Tensor> side(16, point_set(2, 8, 0.0f));
        const std::string csv = similarity_csv(similarity_matrix(side, side).first);
        CHECK(csv.find("real:Up+Thumb") != std::string::npos);
        CHECK(csv.find("synth:Right+Open") != std::string::npos);
        std::istringstream in(csv);
        int lines = 0;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 33);
    }
}
