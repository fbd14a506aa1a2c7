#pragma once

#include <cstdint>

#include "comhom/dataset.hpp"

namespace comhom::data {

// Procedural cohort for end-to-end verification at desk scale. Each single
// class owns a smooth global template; each subject applies a near-identity
// channel-mixing map; combinations pass the gain-weighted template sum
// through tanh, so a combination window is deliberately NOT the average of
// its component singles.
struct SynthCohortSpec {
    int subjects = 10;
    int singles_per_class = 40;   // classes 0..7
    int combos_per_class = 40;    // classes 8..23
    int channels = 4;
    int samples_per_window = 64;
    double template_noise_scale = 0.05;    // additive per-window noise, templates have RMS 1
    double subject_mixing_strength = 0.1;  // off-identity magnitude of the mixing map
    double nonlinearity_gain = 2.0;        // scales the pre-tanh template sum
};

// Deterministic in (spec, seed). Window order: subjects ascending, classes
// in fixed class order, windows consecutive per class.
Dataset generate_synth_cohort(const SynthCohortSpec& spec, std::uint64_t seed);

}  // namespace comhom::data
