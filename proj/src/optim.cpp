#include "comhom/optim.hpp"

#include <cmath>

namespace comhom::nn {

void AdamW::step(ParameterSet& params) {
    ++step_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double lr = cfg_.learning_rate, eps = cfg_.epsilon, wd = cfg_.weight_decay;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const float decay = static_cast<float>(1.0 - lr * wd);

    for (auto& [name, entry] : params) {
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            Moments mo;
            mo.m = Tensor(entry.value.shape);
            mo.v = Tensor(entry.value.shape);
            it = moments_.emplace(name, std::move(mo)).first;
        }
        float* p = entry.value.data();
        const float* g = entry.grad.data();
        float* m = it->second.m.data();
        float* v = it->second.v.data();
        const std::size_t count = entry.value.numel();
        for (std::size_t i = 0; i < count; ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            double pi = static_cast<double>(p[i]) * decay;
            pi -= lr * mhat / (std::sqrt(vhat) + eps);
            p[i] = static_cast<float>(pi);
        }
    }
}

}  // namespace comhom::nn
