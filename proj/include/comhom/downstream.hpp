#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "comhom/calibrate.hpp"
#include "comhom/gesture.hpp"
#include "comhom/tensor.hpp"

namespace comhom::cal {

enum class Algorithm { RandomForest, Knn, DecisionTree, Lda, LogisticRegression };

const std::string& algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

// Fixed classifier hyperparameters; only the algorithm and seed vary in the
// experiments. Forest splits consider floor(sqrt(64)) candidate features.
struct DownstreamSpec {
    Algorithm algorithm = Algorithm::RandomForest;
    std::uint64_t seed = 0;
    int forest_trees = 100;
    int forest_split_candidates = 8;
    int knn_k = 5;
    double lda_ridge = 1e-6;  // scaled by trace/dim before use
    double logreg_l2 = 1e-4;
    int logreg_max_iters = 1000;
    double logreg_tolerance = 1e-6;
};

// One fitted 5-way classifier. Immutable after fitting; safe to share.
class Head {
  public:
    virtual ~Head() = default;
    virtual int predict_one(const float* row, int dim) const = 0;
    virtual void serialize(std::string& out) const = 0;
};

// Two independent per-component classifiers over the 64-d embedding: the
// direction head scores the 5 direction values, the modifier head the 5
// modifier values; the inactive marker is an ordinary fifth class.
struct TwoHeadModel {
    DownstreamSpec spec;
    std::unique_ptr<Head> direction;
    std::unique_ptr<Head> modifier;
};

// Fits both heads on the calibration set from scratch. Deterministic given
// spec.seed. A head whose targets hold a single distinct class raises
// DegenerateFitError.
TwoHeadModel fit_downstream(const DownstreamSpec& spec, const CalibrationSet& calib);

// Per-row label: (direction argmax, modifier argmax). Ties break toward the
// lowest class index; (NoDir, NoMod) is a legal outlier prediction.
std::vector<data::GestureLabel> predict(const TwoHeadModel& model, const nn::Tensor& features);

// Self-describing binary: magic, algorithm tag, then both head payloads.
std::string serialize_downstream(const TwoHeadModel& model);
TwoHeadModel deserialize_downstream(const std::string& blob);
void save_downstream(const TwoHeadModel& model, const std::string& path);
TwoHeadModel load_downstream(const std::string& path);

}  // namespace comhom::cal
