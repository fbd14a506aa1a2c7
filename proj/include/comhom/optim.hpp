#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "comhom/params.hpp"

namespace comhom::nn {

struct AdamWConfig {
    float learning_rate = 3e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float weight_decay = 0.01f;  // decoupled: p *= (1 - lr*wd) before the moment update
};

// AdamW over a ParameterSet. Consumes whatever sits in the gradient
// accumulators; zeroing them between steps is the caller's job.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(ParameterSet& params);

    std::int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamWConfig cfg_;
    std::map<std::string, Moments> moments_;
    std::int64_t step_ = 0;
};

}  // namespace comhom::nn
