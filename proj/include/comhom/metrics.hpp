#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "comhom/gesture.hpp"
#include "comhom/tensor.hpp"

namespace comhom::metrics {

enum class ClassSubset { Single, Combo, All };

const std::string& class_subset_name(ClassSubset s);
ClassSubset parse_class_subset(const std::string& s);

// Mean per-class recall over the subset's classes. A prediction is correct
// only when it matches the true label exactly, so predictions outside the
// subset (including the rest label) count as errors for their true class.
// Every class of the subset must appear among the true labels.
double balanced_accuracy(const std::vector<data::GestureLabel>& truth,
                         const std::vector<data::GestureLabel>& pred, ClassSubset subset);

// 24 true rows by 25 predicted columns; the extra column holds rest
// predictions (the outlier label).
struct ConfusionMatrix {
    std::array<std::array<int, data::kNumPredictionClasses>, data::kNumStoredClasses> counts{};

    int row_sum(int true_class) const;
    double normalized(int true_class, int pred_class) const;  // 0 for an empty row
};

ConfusionMatrix confusion_matrix(const std::vector<data::GestureLabel>& truth,
                                 const std::vector<data::GestureLabel>& pred);

std::string confusion_csv(const ConfusionMatrix& cm, bool normalized);

inline constexpr double kDefaultRbfDelta = 1.0 / 128.0;

// exp(-delta * squared distance); 1 at zero distance.
double rbf_similarity(const std::vector<float>& a, const std::vector<float>& b,
                      double delta = kDefaultRbfDelta);

// Mean pairwise kernel between two distinct sets of embedding rows.
double set_sim(const nn::Tensor& z1, const nn::Tensor& z2, double delta = kDefaultRbfDelta);

// Mean pairwise kernel inside one set, identical-index pairs excluded; needs
// at least two rows.
double set_sim_within(const nn::Tensor& z, double delta = kDefaultRbfDelta);

// Rows/cols 0-15: real combination classes, 16-31: synthetic, both
// direction-major. Entries are set similarities, so they live in (0, 1].
struct SimilarityMatrix {
    std::array<std::array<double, 32>, 32> values{};
};

struct SimilaritySummary {
    double real_within = 0.0;   // mean of diagonal entries 0-15
    double synth_within = 0.0;  // mean of diagonal entries 16-31
    double matching = 0.0;      // mean of the 16th sub-diagonal
    double non_matching = 0.0;  // mean of every other below-diagonal entry
};

// Each side provides one [n_c, dim] tensor per combination class in
// direction-major order; every class needs at least two rows (the diagonal
// is a within-set similarity). Computed once per unordered pair.
std::pair<SimilarityMatrix, SimilaritySummary> similarity_matrix(
    const std::vector<nn::Tensor>& real_by_class, const std::vector<nn::Tensor>& synth_by_class,
    double delta = kDefaultRbfDelta);

std::string similarity_csv(const SimilarityMatrix& m);

}  // namespace comhom::metrics
