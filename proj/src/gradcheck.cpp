#include "comhom/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "comhom/rng.hpp"

namespace comhom::nn {

namespace {

double eval_loss(const LossBuilder& build, ParameterSet64& params) {
    Tape<double> tape(params);
    const int loss = build(tape);
    return tape.scalar(loss);
}

GradCheckReport compare(const LossBuilder& build, ParameterSet64& params,
                        const std::map<std::string, Tensor64>& analytic,
                        const GradCheckOptions& opt) {
    GradCheckReport report;
    for (auto& [name, entry] : params) {
        const Tensor64& grad = analytic.at(name);
        GradCheckParamReport pr;
        pr.name = name;

        const int numel = static_cast<int>(entry.value.numel());
        std::vector<int> coords;
        if (numel <= opt.max_coords_per_param) {
            coords.resize(static_cast<std::size_t>(numel));
            for (int i = 0; i < numel; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            RngStream rng(opt.coord_seed, "gradcheck-coords");
            coords = rng.fork(name).sample_without_replacement(numel, opt.max_coords_per_param);
        }

        for (const int c : coords) {
            double& slot = entry.value.values[static_cast<std::size_t>(c)];
            const double saved = slot;
            slot = saved + opt.epsilon;
            const double up = eval_loss(build, params);
            slot = saved - opt.epsilon;
            const double down = eval_loss(build, params);
            slot = saved;
            const double numeric = (up - down) / (2.0 * opt.epsilon);
            const double exact = grad.values[static_cast<std::size_t>(c)];
            const double abs_err = std::fabs(exact - numeric);
            ++pr.coords_checked;
            pr.max_abs_err = std::max(pr.max_abs_err, abs_err);
            // below the absolute floor the difference is finite-difference
            // rounding noise, not a gradient discrepancy
            if (abs_err <= opt.absolute_floor) continue;
            const double scale = std::max({std::fabs(exact), std::fabs(numeric), 1e-6});
            pr.max_rel_err = std::max(pr.max_rel_err, abs_err / scale);
        }
        pr.flagged = pr.max_rel_err >= opt.tolerance;
        report.max_rel_err = std::max(report.max_rel_err, pr.max_rel_err);
        if (pr.flagged) report.passed = false;
        report.params.push_back(std::move(pr));
    }
    return report;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, ParameterSet64& params,
                           const GradCheckOptions& opt) {
    params.zero_grads();
    {
        Tape<double> tape(params);
        const int loss = build(tape);
        tape.backward(loss);
    }
    std::map<std::string, Tensor64> analytic;
    for (const auto& [name, entry] : params) analytic.emplace(name, entry.grad);
    params.zero_grads();
    return compare(build, params, analytic, opt);
}

GradCheckReport grad_check_against(const LossBuilder& build, ParameterSet64& params,
                                   const std::map<std::string, Tensor64>& analytic,
                                   const GradCheckOptions& opt) {
    return compare(build, params, analytic, opt);
}

GradCheckReport grad_check_layers(const LayerGraph& graph, const ParameterSet& params,
                                  const Tensor& input, const LossHead& loss,
                                  const GradCheckOptions& opt) {
    ParameterSet64 shadow = cast_params<double>(params);
    const Tensor64 input64 = cast_tensor<double>(input);
    LossBuilder build = [&](Tape<double>& tape) {
        const int x = tape.input(input64, "batch");
        const int y = apply_layers(tape, graph, x);
        if (const auto* se = std::get_if<SquaredErrorHead>(&loss))
            return tape.squared_error_sum(y, cast_tensor<double>(se->target));
        return tape.softmax_cross_entropy(y, std::get<SoftmaxCEHead>(loss).targets);
    };
    return grad_check(build, shadow, opt);
}

}  // namespace comhom::nn
