#pragma once

#include <string>
#include <vector>

#include "comhom/params.hpp"
#include "comhom/tensor.hpp"

namespace comhom::nn {

enum class Op {
    Input,
    Param,
    Dense,
    Conv1d,
    Relu,
    Add,
    Sub,
    Scale,
    AddConst,
    ConcatCols,
    ConcatRows,
    GlobalAvgPool,
    GatherRows,
    RepeatRowsEach,
    TileRows,
    RowSqDist,
    MeanAll,
    WeightedSum,
    SoftmaxCrossEntropy,
    SquaredErrorSum,
};

const char* op_name(Op op);

// Define-by-run reverse-mode tape. Values are computed eagerly at op
// creation (so callers can inspect intermediate activations, e.g. for
// triplet mining) and backward() walks the recorded nodes in reverse.
//
// float is the training instantiation; double exists for the
// finite-difference shadow path used by grad_check.
template <typename T>
class Tape {
public:
    // Read-write binding: backward() accumulates into the set's gradients.
    explicit Tape(ParameterSetT<T>& params) : params_(&params), cparams_(&params) {}
    // Read-only binding: forward passes only, backward() is rejected.
    explicit Tape(const ParameterSetT<T>& params) : params_(nullptr), cparams_(&params) {}
    // No parameters at all (pure data graphs).
    Tape() = default;

    // Leaf holding caller data; rejects non-finite values.
    int input(TensorT<T> v, const std::string& label = "input");
    // Leaf bound to a named parameter; one node per name, reused.
    int param(const std::string& name);

    // x:[n,i] w:[o,i] b:[o] or -1 -> [n,o]
    int dense(int x, int w, int b);
    // x:[n,c,t] w:[oc,c,k] b:[oc] or -1 -> [n,oc,t_out]
    int conv1d(int x, int w, int b, int stride, int pad);
    int relu(int x);
    int add(int a, int b);
    int sub(int a, int b);
    int scale(int a, double factor);
    int add_const(int a, double c);
    int concat_cols(const std::vector<int>& xs);
    int concat_rows(const std::vector<int>& xs);
    // x:[n,c,t] -> [n,c], mean over time
    int global_avg_pool(int x);
    // x:[n,d] -> [rows.size(), d]
    int gather_rows(int x, std::vector<int> rows);
    // x:[n,d] -> [n*times, d], each row repeated consecutively
    int repeat_rows_each(int x, int times);
    // x:[n,d] -> [times*n, d], the whole block repeated
    int tile_rows(int x, int times);
    // a,b:[k,d] -> [k], squared Euclidean distance per row
    int row_sqdist(int a, int b);
    // mean over all entries -> [1]
    int mean_all(int x);
    // sum of w[i] * scalar node xs[i] -> [1]
    int weighted_sum(const std::vector<int>& xs, const std::vector<double>& weights);
    // logits:[n,C], targets in [0,C) -> [1], mean cross-entropy
    int softmax_cross_entropy(int logits, std::vector<int> targets);
    // sum of squared residuals against a fixed target -> [1]
    int squared_error_sum(int pred, TensorT<T> target);

    const TensorT<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const TensorT<T>& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    T scalar(int id) const;

    // Seeds d(loss)=1, sweeps ancestors in reverse, accumulates parameter
    // gradients into the bound set. Returns the loss value. Throws
    // NumericError naming the first non-finite node if the loss is not
    // finite.
    T backward(int loss_id);

    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Op op;
        TensorT<T> value;
        TensorT<T> grad;
        std::vector<int> args;
        std::string label;
        int i0 = 0, i1 = 0;          // stride/pad, repeat count
        double scalar0 = 0.0;        // scale factor / added constant
        std::vector<int> index;      // gather rows or CE targets
        std::vector<double> weights; // weighted_sum coefficients
        TensorT<T> aux;              // cached CE probabilities / SE target
    };

    int push(Node n);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& cnode(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    [[noreturn]] void shape_error(const std::string& what) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> param_nodes_;  // name -> node id
    ParameterSetT<T>* params_ = nullptr;
    const ParameterSetT<T>* cparams_ = nullptr;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace comhom::nn
