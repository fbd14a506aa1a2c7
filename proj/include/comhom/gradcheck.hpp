#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "comhom/layers.hpp"
#include "comhom/params.hpp"
#include "comhom/tape.hpp"

namespace comhom::nn {

struct GradCheckOptions {
    double epsilon = 1e-5;           // central-difference step
    double tolerance = 1e-4;         // max allowed relative error
    double absolute_floor = 1e-7;    // differences below this are FD noise
    int max_coords_per_param = 24;   // tensors above this size are subsampled
    std::uint64_t coord_seed = 0;    // seeds the coordinate subsample
};

struct GradCheckParamReport {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int coords_checked = 0;
    bool flagged = false;
};

struct GradCheckReport {
    std::vector<GradCheckParamReport> params;
    double max_rel_err = 0.0;
    bool passed = true;
};

// Builds the graph on the given tape and returns the loss node id. The
// builder is invoked repeatedly on fresh tapes while parameters are nudged.
using LossBuilder = std::function<int(Tape<double>&)>;

// Compares reverse-mode gradients against central finite differences
// (f(p+eps) - f(p-eps)) / (2 eps), both evaluated in double. Relative error
// uses max(|analytic|, |numeric|, 1e-6) as the scale.
GradCheckReport grad_check(const LossBuilder& build, ParameterSet64& params,
                           const GradCheckOptions& opt = {});

// Same comparison against caller-supplied gradients; lets tests verify that
// a corrupted gradient is flagged.
GradCheckReport grad_check_against(const LossBuilder& build, ParameterSet64& params,
                                   const std::map<std::string, Tensor64>& analytic,
                                   const GradCheckOptions& opt = {});

// Convenience wrapper for sequential graphs: converts float params to the
// double shadow set and checks the whole graph + loss head.
GradCheckReport grad_check_layers(const LayerGraph& graph, const ParameterSet& params,
                                  const Tensor& input, const LossHead& loss,
                                  const GradCheckOptions& opt = {});

}  // namespace comhom::nn
