#include "comhom/audit.hpp"

#include <utility>

#include "comhom/layers.hpp"
#include "comhom/model.hpp"
#include "comhom/rng.hpp"

namespace comhom::audit {
namespace {

nn::Tensor random_input(std::vector<int> shape, RngStream rng) {
    nn::Tensor t(std::move(shape));
    for (float& v : t.values) v = static_cast<float>(rng.normal());
    return t;
}

nn::Tensor64 random_input64(std::vector<int> shape, RngStream rng) {
    nn::Tensor64 t(std::move(shape));
    for (double& v : t.values) v = rng.normal();
    return t;
}

struct LayerCase {
    std::string name;
    nn::LayerGraph graph;
    std::vector<int> in_shape;
    nn::LossHead loss;
};

// Zero-initialized biases let relu inputs land exactly on the hinge: a dead
// receptive field in a residual body outputs exactly its zero bias, and
// adding a zeroed skip keeps the sum at 0.0, where the one-sided derivatives
// disagree and no difference step matches the chosen subgradient. The audit
// nudges every bias off zero so its probe points stay differentiable.
void scatter_biases(nn::ParameterSet& params, RngStream rng) {
    for (auto& [name, entry] : params) {
        if (name.size() < 2 || name.compare(name.size() - 2, 2, ".b") != 0) continue;
        RngStream s = rng.fork(name);
        for (float& v : entry.value.values) v = static_cast<float>(0.1 * s.normal());
    }
}

// A correct gradient can still fail a finite-difference probe when the step
// straddles a relu hinge. Shrinking the step moves the probe off the kink,
// while a genuine gradient error keeps failing at every step size, so
// failing checks get two retries with an 8x smaller step each.
template <typename Runner>
nn::GradCheckReport check_with_retry(const nn::GradCheckOptions& opt, Runner&& run) {
    nn::GradCheckOptions o = opt;
    nn::GradCheckReport r = run(o);
    for (int attempt = 0; attempt < 2 && !r.passed; ++attempt) {
        o.epsilon /= 8.0;
        r = run(o);
    }
    return r;
}

std::vector<LayerCase> layer_cases() {
    std::vector<LayerCase> cases;
    {
        nn::LayerGraph g;
        g.dense("d1", 6, 5).dense("d2", 5, 4);
        cases.push_back({"dense", std::move(g), {3, 6}, nn::SquaredErrorHead{nn::Tensor({3, 4})}});
    }
    {
        nn::LayerGraph g;
        g.dense("in", 5, 6).relu().dense("out", 6, 4);
        cases.push_back({"relu", std::move(g), {3, 5}, nn::SoftmaxCEHead{{0, 1, 3}}});
    }
    {
        nn::LayerGraph g;
        g.conv1d("c1", 2, 5, 5, 2, 2).relu().conv1d("c2", 5, 4, 3, 1, 1);
        cases.push_back({"conv1d", std::move(g), {2, 2, 14}, nn::SquaredErrorHead{nn::Tensor({2, 4, 7})}});
    }
    {
        nn::LayerGraph g;
        g.conv1d("c", 3, 6, 3, 1, 1).relu().global_avg_pool().dense("fc", 6, 4);
        cases.push_back({"global_avg_pool", std::move(g), {2, 3, 10}, nn::SoftmaxCEHead{{2, 0}}});
    }
    {
        nn::LayerGraph body;
        body.conv1d("r.c1", 4, 4, 3, 1, 1).relu().conv1d("r.c2", 4, 4, 3, 1, 1);
        nn::LayerGraph g;
        g.conv1d("stem", 2, 4, 3, 1, 1).relu().residual(std::move(body)).relu().global_avg_pool().dense(
            "fc", 4, 3);
        cases.push_back({"residual", std::move(g), {2, 2, 12}, nn::SoftmaxCEHead{{1, 2}}});
    }
    return cases;
}

// Training-shaped loss over the full model: encode direction and modifier
// singles, fuse every pair through the operator, score singles and fused
// rows with both heads, and add a triplet hinge kept in its active region
// by the unit margin.
AuditCheck composed_check(std::uint64_t seed, int point, const nn::GradCheckOptions& opt) {
    model::ModelSpec spec;
    spec.in_channels = 2;  // window shape only scales the runtime, not the graph
    spec.op = model::OperatorKind::CondMlp;
    spec.heads = model::HeadsKind::Small;
    const model::Model m = model::make_model(spec);

    nn::ParameterSet params32;
    RngStream init =
        RngStream(seed, "audit-composed-init").fork("point", static_cast<std::uint64_t>(point));
    model::init_model_params(m, params32, init);
    scatter_biases(params32,
                   RngStream(seed, "audit-composed-bias").fork("point", static_cast<std::uint64_t>(point)));
    nn::ParameterSet64 params = nn::cast_params<double>(params32);

    const int len = 32;
    const RngStream in_rng =
        RngStream(seed, "audit-composed-input").fork("point", static_cast<std::uint64_t>(point));
    const nn::Tensor64 x_dir = random_input64({2, spec.in_channels, len}, in_rng.fork("dir"));
    const nn::Tensor64 x_mod = random_input64({2, spec.in_channels, len}, in_rng.fork("mod"));
    const std::vector<data::Direction> dirs = {data::Direction::Up, data::Direction::Left};
    const std::vector<data::Modifier> mods = {data::Modifier::Thumb, data::Modifier::Fist};

    const nn::LossBuilder build = [&](nn::Tape<double>& t) {
        const int z_dir = nn::apply_layers(t, m.encoder, t.input(x_dir, "x_dir"));
        const int z_mod = nn::apply_layers(t, m.encoder, t.input(x_mod, "x_mod"));
        const int z_synth = model::combine_all_pairs(t, m, z_dir, dirs, z_mod, mods);
        const int z_real = t.concat_rows({z_dir, z_mod});

        const int kD = data::kNumDirections - 1;  // NoDir
        const int kM = data::kNumModifiers - 1;   // NoMod
        const std::vector<int> real_dir = {0, 2, kD, kD};  // Up, Left, then modifier singles
        const std::vector<int> real_mod = {kM, kM, 0, 2};  // then Thumb, Fist
        const std::vector<int> synth_dir = {0, 0, 2, 2};   // direction-major pairs
        const std::vector<int> synth_mod = {0, 2, 0, 2};

        const int ce_real =
            t.add(t.softmax_cross_entropy(nn::apply_layers(t, m.dir_head, z_real), real_dir),
                  t.softmax_cross_entropy(nn::apply_layers(t, m.mod_head, z_real), real_mod));
        const int ce_synth =
            t.add(t.softmax_cross_entropy(nn::apply_layers(t, m.dir_head, z_synth), synth_dir),
                  t.softmax_cross_entropy(nn::apply_layers(t, m.mod_head, z_synth), synth_mod));

        const int anchor = t.gather_rows(z_real, {0});
        const int positive = t.gather_rows(z_synth, {0});
        const int negative = t.gather_rows(z_synth, {3});
        const int gap = t.add_const(t.sub(t.row_sqdist(anchor, positive), t.row_sqdist(anchor, negative)), 1.0);
        const int hinge = t.mean_all(t.relu(gap));

        return t.add(t.add(ce_real, ce_synth), hinge);
    };

    const nn::GradCheckReport report = check_with_retry(
        opt, [&](const nn::GradCheckOptions& o) { return nn::grad_check(build, params, o); });
    return {"composed", point, report.max_rel_err, report.passed};
}

}  // namespace

AuditReport audit_autodiff(std::uint64_t seed, int points, const nn::GradCheckOptions& opt) {
    if (points < 1) throw ConfigError("audit needs at least one random point");
    AuditReport report;
    auto record = [&](AuditCheck check) {
        report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
        report.passed = report.passed && check.passed;
        report.checks.push_back(std::move(check));
    };

    for (int point = 0; point < points; ++point) {
        for (const LayerCase& c : layer_cases()) {
            nn::ParameterSet params;
            RngStream init = RngStream(seed, "audit-" + c.name + "-init")
                                 .fork("point", static_cast<std::uint64_t>(point));
            nn::init_layer_params(c.graph, params, init);
            scatter_biases(params, RngStream(seed, "audit-" + c.name + "-bias")
                                       .fork("point", static_cast<std::uint64_t>(point)));
            const nn::Tensor x =
                random_input(c.in_shape, RngStream(seed, "audit-" + c.name + "-input")
                                             .fork("point", static_cast<std::uint64_t>(point)));
            const nn::GradCheckReport r = check_with_retry(opt, [&](const nn::GradCheckOptions& o) {
                return nn::grad_check_layers(c.graph, params, x, c.loss, o);
            });
            record({c.name, point, r.max_rel_err, r.passed});
        }
        record(composed_check(seed, point, opt));
    }
    return report;
}

}  // namespace comhom::audit
