#pragma once

#include <string>
#include <vector>

#include "comhom/dataset.hpp"
#include "comhom/pretrain.hpp"
#include "comhom/rng.hpp"
#include "comhom/tensor.hpp"

namespace comhom::cal {

// What the downstream classifier is allowed to train on. Partial sees only
// the calibration singles, Full additionally the real combination windows,
// Augmented the singles plus synthetic combination embeddings fused from
// them. The test set never changes across modes.
enum class SupervisionMode { Partial, Augmented, Full };

const std::string& supervision_name(SupervisionMode m);
SupervisionMode parse_supervision(const std::string& s);

enum class Provenance { RealSingle, RealCombo, SyntheticCombo };

inline constexpr int kDefaultSynthPerClass = 500;

struct CalibrationSet {
    nn::Tensor features;  // [n, 64]
    std::vector<data::GestureLabel> labels;
    std::vector<Provenance> provenance;

    int size() const { return static_cast<int>(labels.size()); }
};

// Encodes the calibration windows with the frozen bundle and assembles the
// supervision regime. Augmented fuses every encoded direction single with
// every encoded modifier single and keeps n_synth_per_class embeddings per
// combination class, subsampled without replacement; a pool smaller than
// that is kept whole. Real combination windows never enter Augmented.
// Augmented requires every direction and every modifier class among the
// calibration singles, else ConfigError.
CalibrationSet build_calibration_set(SupervisionMode mode, const train::TrainedBundle& bundle,
                                     const data::Dataset& ds, const data::IndexList& calib,
                                     int n_synth_per_class, RngStream& rng);

}  // namespace comhom::cal
