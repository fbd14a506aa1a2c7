#pragma once

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "comhom/rng.hpp"
#include "comhom/tape.hpp"

namespace comhom::nn {

// Sequential graph description. Parameters live in a ParameterSet under the
// layer's name ("<name>.w", "<name>.b"); the graph itself holds no state.
struct LayerGraph;

struct LayerNode {
    enum class Kind { Dense, Conv1d, Relu, GlobalAvgPool, Residual };
    Kind kind;
    std::string name;          // Dense/Conv1d parameter prefix
    int in = 0, out = 0;       // Dense
    int kernel = 1, stride = 1, pad = 0;  // Conv1d (in/out are channels)
    bool bias = true;
    std::shared_ptr<const LayerGraph> body;  // Residual: output = input + body(input)
};

struct LayerGraph {
    std::vector<LayerNode> layers;

    LayerGraph& dense(std::string name, int in, int out, bool bias = true);
    LayerGraph& conv1d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                       bool bias = true);
    LayerGraph& relu();
    LayerGraph& global_avg_pool();
    LayerGraph& residual(LayerGraph body);
};

// Registers and initializes the graph's parameters: uniform Kaiming-style
// fan-in scaling for weights (bound sqrt(6/fan_in)), zero biases.
void init_layer_params(const LayerGraph& graph, ParameterSet& params, RngStream& rng);

// Parameter shapes without values, for checkpoint validation and counting.
std::size_t layer_param_count(const LayerGraph& graph);

template <typename T>
int apply_layers(Tape<T>& tape, const LayerGraph& graph, int x);

// Loss attached after the last layer by forward_backward.
struct SquaredErrorHead {
    Tensor target;
};
struct SoftmaxCEHead {
    std::vector<int> targets;
};
using LossHead = std::variant<SquaredErrorHead, SoftmaxCEHead>;

// Runs the graph on one input batch, attaches the loss head, backpropagates,
// and accumulates gradients into `params` (callers zero them explicitly).
// Returns the loss.
float forward_backward(const LayerGraph& graph, ParameterSet& params, const Tensor& input,
                       const LossHead& loss);

// Forward pass only; parameters stay untouched.
Tensor forward(const LayerGraph& graph, const ParameterSet& params, const Tensor& input);

}  // namespace comhom::nn
