#include "comhom/metrics.hpp"

#include <cmath>
#include <sstream>

#include "comhom/error.hpp"

namespace comhom::metrics {

namespace {

const std::string kSubsetNames[] = {"single", "combo", "all"};

void check_label_rows(const std::vector<data::GestureLabel>& truth,
                      const std::vector<data::GestureLabel>& pred) {
    if (truth.empty()) throw ConfigError("no labels to score");
    if (truth.size() != pred.size())
        throw ConfigError("label count " + std::to_string(truth.size()) +
                          " does not match prediction count " + std::to_string(pred.size()));
    for (const data::GestureLabel& l : truth)
        if (l.is_rest()) throw LabelError("true labels cannot be the rest gesture");
}

bool in_subset(int class_idx, ClassSubset subset) {
    switch (subset) {
        case ClassSubset::Single:
            return class_idx < 2 * data::kActiveDirections;
        case ClassSubset::Combo:
            return class_idx >= 2 * data::kActiveDirections;
        case ClassSubset::All:
            return true;
    }
    return false;
}

double pair_kernel(const float* a, const float* b, int dim, double delta) {
    double sq = 0.0;
    for (int j = 0; j < dim; ++j) {
        const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
        sq += d * d;
    }
    return std::exp(-delta * sq);
}

void check_set(const nn::Tensor& z, const char* which) {
    if (z.rank() != 2 || z.shape[0] < 1)
        throw ConfigError(std::string(which) + " set must be a non-empty [n, dim] tensor");
}

}  // namespace

const std::string& class_subset_name(ClassSubset s) { return kSubsetNames[static_cast<int>(s)]; }

ClassSubset parse_class_subset(const std::string& s) {
    for (int i = 0; i < 3; ++i)
        if (s == kSubsetNames[i]) return static_cast<ClassSubset>(i);
    throw ConfigError("unknown class subset '" + s + "'");
}

double balanced_accuracy(const std::vector<data::GestureLabel>& truth,
                         const std::vector<data::GestureLabel>& pred, ClassSubset subset) {
    check_label_rows(truth, pred);
    int total[data::kNumStoredClasses] = {0};
    int correct[data::kNumStoredClasses] = {0};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int c = data::class_index(truth[i]);
        ++total[c];
        if (pred[i] == truth[i]) ++correct[c];
    }
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < data::kNumStoredClasses; ++c) {
        if (!in_subset(c, subset)) continue;
        if (total[c] == 0)
            throw ConfigError("class " + data::label_name(data::label_from_class_index(c)) +
                              " is absent from the true labels");
        sum += static_cast<double>(correct[c]) / total[c];
        ++classes;
    }
    return sum / classes;
}

int ConfusionMatrix::row_sum(int true_class) const {
    int sum = 0;
    for (const int v : counts[static_cast<std::size_t>(true_class)]) sum += v;
    return sum;
}

double ConfusionMatrix::normalized(int true_class, int pred_class) const {
    const int sum = row_sum(true_class);
    if (sum == 0) return 0.0;
    return static_cast<double>(
               counts[static_cast<std::size_t>(true_class)][static_cast<std::size_t>(pred_class)]) /
           sum;
}

ConfusionMatrix confusion_matrix(const std::vector<data::GestureLabel>& truth,
                                 const std::vector<data::GestureLabel>& pred) {
    check_label_rows(truth, pred);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++cm.counts[static_cast<std::size_t>(data::class_index(truth[i]))]
                   [static_cast<std::size_t>(data::class_index(pred[i]))];
    return cm;
}

std::string confusion_csv(const ConfusionMatrix& cm, bool normalized) {
    std::ostringstream out;
    out << "true\\pred";
    for (int p = 0; p < data::kNumStoredClasses; ++p)
        out << ',' << data::label_name(data::label_from_class_index(p));
    out << ",Rest\n";
    out.precision(9);
    for (int t = 0; t < data::kNumStoredClasses; ++t) {
        out << data::label_name(data::label_from_class_index(t));
        for (int p = 0; p < data::kNumPredictionClasses; ++p) {
            out << ',';
            if (normalized)
                out << cm.normalized(t, p);
            else
                out << cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        }
        out << '\n';
    }
    return out.str();
}

double rbf_similarity(const std::vector<float>& a, const std::vector<float>& b, double delta) {
    if (a.size() != b.size())
        throw ConfigError("kernel arguments differ in dimension: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
    if (a.empty()) throw ConfigError("kernel arguments are empty");
    return pair_kernel(a.data(), b.data(), static_cast<int>(a.size()), delta);
}

double set_sim(const nn::Tensor& z1, const nn::Tensor& z2, double delta) {
    check_set(z1, "first");
    check_set(z2, "second");
    if (z1.shape[1] != z2.shape[1]) throw ConfigError("set dimensions differ");
    const int n1 = z1.shape[0], n2 = z2.shape[0], dim = z1.shape[1];
    double sum = 0.0;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            sum += pair_kernel(z1.values.data() + static_cast<std::size_t>(i) * dim,
                               z2.values.data() + static_cast<std::size_t>(j) * dim, dim, delta);
    return sum / (static_cast<double>(n1) * n2);
}

double set_sim_within(const nn::Tensor& z, double delta) {
    check_set(z, "within");
    const int n = z.shape[0], dim = z.shape[1];
    if (n < 2) throw ConfigError("within-set similarity needs at least two items");
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            sum += pair_kernel(z.values.data() + static_cast<std::size_t>(i) * dim,
                               z.values.data() + static_cast<std::size_t>(j) * dim, dim, delta);
    return sum / (static_cast<double>(n) * (n - 1) / 2.0);
}

std::pair<SimilarityMatrix, SimilaritySummary> similarity_matrix(
    const std::vector<nn::Tensor>& real_by_class, const std::vector<nn::Tensor>& synth_by_class,
    double delta) {
    if (real_by_class.size() != data::kNumComboClasses ||
        synth_by_class.size() != data::kNumComboClasses)
        throw ConfigError("similarity matrix needs all 16 combination classes on both sides");
    const auto set_of = [&](int idx) -> const nn::Tensor& {
        return idx < data::kNumComboClasses
                   ? real_by_class[static_cast<std::size_t>(idx)]
                   : synth_by_class[static_cast<std::size_t>(idx - data::kNumComboClasses)];
    };

    SimilarityMatrix m;
    for (int i = 0; i < 32; ++i) {
        for (int j = i; j < 32; ++j) {
            const double v = i == j ? set_sim_within(set_of(i), delta)
                                    : set_sim(set_of(i), set_of(j), delta);
            m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
            m.values[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
        }
    }

    SimilaritySummary s;
    double non_matching_sum = 0.0;
    int non_matching_count = 0;
    for (int i = 0; i < data::kNumComboClasses; ++i) {
        s.real_within += m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        s.synth_within +=
            m.values[static_cast<std::size_t>(i + 16)][static_cast<std::size_t>(i + 16)];
        s.matching += m.values[static_cast<std::size_t>(i + 16)][static_cast<std::size_t>(i)];
    }
    s.real_within /= data::kNumComboClasses;
    s.synth_within /= data::kNumComboClasses;
    s.matching /= data::kNumComboClasses;
    for (int i = 1; i < 32; ++i) {
        for (int j = 0; j < i; ++j) {
            if (i - j == 16) continue;  // the matching sub-diagonal
            non_matching_sum += m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            ++non_matching_count;
        }
    }
    s.non_matching = non_matching_sum / non_matching_count;
    return {m, s};
}

std::string similarity_csv(const SimilarityMatrix& m) {
    std::ostringstream out;
    out.precision(9);
    const auto name = [](int idx) {
        const std::string side = idx < data::kNumComboClasses ? "real:" : "synth:";
        return side + data::label_name(data::label_from_combo_index(idx % data::kNumComboClasses));
    };
    for (int j = 0; j < 32; ++j) out << ',' << name(j);
    out << '\n';
    for (int i = 0; i < 32; ++i) {
        out << name(i);
        for (int j = 0; j < 32; ++j)
            out << ',' << m.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        out << '\n';
    }
    return out.str();
}

}  // namespace comhom::metrics
