#include "comhom/layers.hpp"

#include <cmath>

#include "comhom/error.hpp"

namespace comhom::nn {

LayerGraph& LayerGraph::dense(std::string name, int in, int out, bool bias) {
    LayerNode n;
    n.kind = LayerNode::Kind::Dense;
    n.name = std::move(name);
    n.in = in;
    n.out = out;
    n.bias = bias;
    layers.push_back(std::move(n));
    return *this;
}

LayerGraph& LayerGraph::conv1d(std::string name, int in_ch, int out_ch, int kernel, int stride,
                               int pad, bool bias) {
    LayerNode n;
    n.kind = LayerNode::Kind::Conv1d;
    n.name = std::move(name);
    n.in = in_ch;
    n.out = out_ch;
    n.kernel = kernel;
    n.stride = stride;
    n.pad = pad;
    n.bias = bias;
    layers.push_back(std::move(n));
    return *this;
}

LayerGraph& LayerGraph::relu() {
    LayerNode n;
    n.kind = LayerNode::Kind::Relu;
    layers.push_back(std::move(n));
    return *this;
}

LayerGraph& LayerGraph::global_avg_pool() {
    LayerNode n;
    n.kind = LayerNode::Kind::GlobalAvgPool;
    layers.push_back(std::move(n));
    return *this;
}

LayerGraph& LayerGraph::residual(LayerGraph body) {
    LayerNode n;
    n.kind = LayerNode::Kind::Residual;
    n.body = std::make_shared<const LayerGraph>(std::move(body));
    layers.push_back(std::move(n));
    return *this;
}

namespace {

Tensor kaiming_uniform(const std::vector<int>& shape, int fan_in, RngStream& rng) {
    Tensor t(shape);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.values) v = static_cast<float>((rng.uniform() * 2.0 - 1.0) * bound);
    return t;
}

}  // namespace

void init_layer_params(const LayerGraph& graph, ParameterSet& params, RngStream& rng) {
    for (const LayerNode& n : graph.layers) {
        switch (n.kind) {
            case LayerNode::Kind::Dense: {
                params.add(n.name + ".w", kaiming_uniform({n.out, n.in}, n.in, rng));
                if (n.bias) params.add(n.name + ".b", Tensor({n.out}));
                break;
            }
            case LayerNode::Kind::Conv1d: {
                params.add(n.name + ".w",
                           kaiming_uniform({n.out, n.in, n.kernel}, n.in * n.kernel, rng));
                if (n.bias) params.add(n.name + ".b", Tensor({n.out}));
                break;
            }
            case LayerNode::Kind::Residual:
                init_layer_params(*n.body, params, rng);
                break;
            default:
                break;
        }
    }
}

std::size_t layer_param_count(const LayerGraph& graph) {
    std::size_t count = 0;
    for (const LayerNode& n : graph.layers) {
        switch (n.kind) {
            case LayerNode::Kind::Dense:
                count += static_cast<std::size_t>(n.out) * n.in + (n.bias ? n.out : 0);
                break;
            case LayerNode::Kind::Conv1d:
                count += static_cast<std::size_t>(n.out) * n.in * n.kernel + (n.bias ? n.out : 0);
                break;
            case LayerNode::Kind::Residual:
                count += layer_param_count(*n.body);
                break;
            default:
                break;
        }
    }
    return count;
}

template <typename T>
int apply_layers(Tape<T>& tape, const LayerGraph& graph, int x) {
    for (const LayerNode& n : graph.layers) {
        switch (n.kind) {
            case LayerNode::Kind::Dense: {
                const int w = tape.param(n.name + ".w");
                const int b = n.bias ? tape.param(n.name + ".b") : -1;
                x = tape.dense(x, w, b);
                break;
            }
            case LayerNode::Kind::Conv1d: {
                const int w = tape.param(n.name + ".w");
                const int b = n.bias ? tape.param(n.name + ".b") : -1;
                x = tape.conv1d(x, w, b, n.stride, n.pad);
                break;
            }
            case LayerNode::Kind::Relu:
                x = tape.relu(x);
                break;
            case LayerNode::Kind::GlobalAvgPool:
                x = tape.global_avg_pool(x);
                break;
            case LayerNode::Kind::Residual:
                x = tape.add(x, apply_layers(tape, *n.body, x));
                break;
        }
    }
    return x;
}

template int apply_layers<float>(Tape<float>&, const LayerGraph&, int);
template int apply_layers<double>(Tape<double>&, const LayerGraph&, int);

float forward_backward(const LayerGraph& graph, ParameterSet& params, const Tensor& input,
                       const LossHead& loss) {
    Tape<float> tape(params);
    const int x = tape.input(input, "batch");
    const int y = apply_layers(tape, graph, x);
    int l = -1;
    if (const auto* se = std::get_if<SquaredErrorHead>(&loss)) {
        l = tape.squared_error_sum(y, se->target);
    } else {
        const auto& ce = std::get<SoftmaxCEHead>(loss);
        l = tape.softmax_cross_entropy(y, ce.targets);
    }
    return tape.backward(l);
}

Tensor forward(const LayerGraph& graph, const ParameterSet& params, const Tensor& input) {
    Tape<float> tape(params);
    const int x = tape.input(input, "batch");
    const int y = apply_layers(tape, graph, x);
    return tape.value(y);
}

}  // namespace comhom::nn
