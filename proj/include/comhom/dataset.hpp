#pragma once

#include <optional>
#include <string>
#include <vector>

#include "comhom/gesture.hpp"
#include "comhom/rng.hpp"
#include "comhom/tensor.hpp"

namespace comhom::data {

// One windowed sEMG recording: [channels x samples] at a fixed rate.
struct Window {
    nn::Tensor samples;  // shape [channels, window_samples]
    GestureLabel label;
    int subject = 0;
};

struct Dataset {
    int sample_rate_hz = 1926;
    int channels = 8;
    int window_samples = 963;  // 500 ms at 1926 Hz for the recorded corpus
    std::vector<Window> windows;

    std::vector<int> roster() const;  // sorted unique subject ids
    std::vector<int> indices_of_subject(int subject) const;
    int count_of(int subject, const GestureLabel& label) const;
};

// Directory layout:
//   manifest.json   {schema_version, sample_rate_hz, channels, window_samples,
//                    subjects: [{id, data_file, labels_file, count}]}
//   data_<id>.bin   little-endian float32, row-major [count, channels, samples]
//   labels_<id>.csv header "index,direction,modifier"
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& ds, const std::string& dir);

using IndexList = std::vector<int>;

// Leave-one-subject-out split. The fold picks the evaluation subject from
// the sorted roster; the smallest remaining id becomes the validation
// subject; everyone else pretrains. The evaluation subject's data is split
// per class into calibration (floor of calib_fraction) and test.
struct LosoSplit {
    int eval_subject = -1;
    int val_subject = -1;
    IndexList pretrain;
    IndexList validation;
    IndexList calibration;
    IndexList test;
};

LosoSplit split_loso(const Dataset& ds, int fold, double calib_fraction, RngStream& rng);

// Additive Gaussian noise scaled to a target SNR in dB against the batch's
// own statistics: sigma_noise = sigma_batch / 10^(snr_db/20). The batch must
// hold windows of one class. No target, or a zero-variance batch, returns
// the input unchanged.
std::vector<Window> inject_noise(std::vector<Window> batch, std::optional<double> snr_db,
                                 RngStream& rng);

}  // namespace comhom::data
