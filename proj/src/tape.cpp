#include "comhom/tape.hpp"

#include <algorithm>
#include <cmath>

#include "comhom/error.hpp"

namespace comhom::nn {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Param: return "param";
        case Op::Dense: return "dense";
        case Op::Conv1d: return "conv1d";
        case Op::Relu: return "relu";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Scale: return "scale";
        case Op::AddConst: return "add_const";
        case Op::ConcatCols: return "concat_cols";
        case Op::ConcatRows: return "concat_rows";
        case Op::GlobalAvgPool: return "global_avg_pool";
        case Op::GatherRows: return "gather_rows";
        case Op::RepeatRowsEach: return "repeat_rows_each";
        case Op::TileRows: return "tile_rows";
        case Op::RowSqDist: return "row_sqdist";
        case Op::MeanAll: return "mean_all";
        case Op::WeightedSum: return "weighted_sum";
        case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case Op::SquaredErrorSum: return "squared_error_sum";
    }
    return "?";
}

template <typename T>
void Tape<T>::shape_error(const std::string& what) const {
    throw ConfigError("tape: " + what);
}

template <typename T>
int Tape<T>::push(Node n) {
    n.grad = TensorT<T>(n.value.shape);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
int Tape<T>::input(TensorT<T> v, const std::string& label) {
    if (!v.all_finite()) throw NumericError("non-finite values in input '" + label + "'");
    Node n;
    n.op = Op::Input;
    n.label = label;
    n.value = std::move(v);
    return push(std::move(n));
}

template <typename T>
int Tape<T>::param(const std::string& name) {
    for (const auto& [pname, id] : param_nodes_)
        if (pname == name) return id;
    if (!cparams_) throw ConfigError("tape has no parameter set bound, requested '" + name + "'");
    Node n;
    n.op = Op::Param;
    n.label = name;
    n.value = cparams_->value(name);
    const int id = push(std::move(n));
    param_nodes_.emplace_back(name, id);
    return id;
}

template <typename T>
int Tape<T>::dense(int x, int w, int b) {
    const TensorT<T>& xv = value(x);
    const TensorT<T>& wv = value(w);
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        shape_error("dense expects x:[n,i] w:[o,i], got x" + xv.shape_str() + " w" + wv.shape_str());
    const int nrows = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
    const T* bias = nullptr;
    if (b >= 0) {
        const TensorT<T>& bv = value(b);
        if (bv.rank() != 1 || bv.dim(0) != out) shape_error("dense bias shape " + bv.shape_str());
        bias = bv.data();
    }
    Node n;
    n.op = Op::Dense;
    n.args = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    n.value = TensorT<T>({nrows, out});
    const T* xd = xv.data();
    const T* wd = wv.data();
    T* yd = n.value.data();
    for (int r = 0; r < nrows; ++r) {
        const T* xr = xd + static_cast<std::size_t>(r) * in;
        T* yr = yd + static_cast<std::size_t>(r) * out;
        for (int c = 0; c < out; ++c) {
            const T* wr = wd + static_cast<std::size_t>(c) * in;
            T acc = bias ? bias[c] : T{0};
            for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
            yr[c] = acc;
        }
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::conv1d(int x, int w, int b, int stride, int pad) {
    const TensorT<T>& xv = value(x);
    const TensorT<T>& wv = value(w);
    if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(1) != wv.dim(1))
        shape_error("conv1d expects x:[n,c,t] w:[oc,c,k], got x" + xv.shape_str() + " w" + wv.shape_str());
    if (stride < 1 || pad < 0) shape_error("conv1d stride/pad out of range");
    const int nb = xv.dim(0), ci = xv.dim(1), t = xv.dim(2);
    const int co = wv.dim(0), k = wv.dim(2);
    const int to = (t + 2 * pad - k) / stride + 1;
    if (t + 2 * pad < k || to < 1)
        shape_error("conv1d output empty: t=" + std::to_string(t) + " k=" + std::to_string(k));
    const T* bias = nullptr;
    if (b >= 0) {
        const TensorT<T>& bv = value(b);
        if (bv.rank() != 1 || bv.dim(0) != co) shape_error("conv1d bias shape " + bv.shape_str());
        bias = bv.data();
    }
    Node n;
    n.op = Op::Conv1d;
    n.args = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    n.i0 = stride;
    n.i1 = pad;
    n.value = TensorT<T>({nb, co, to});
    const T* xd = xv.data();
    const T* wd = wv.data();
    T* yd = n.value.data();
    for (int ib = 0; ib < nb; ++ib) {
        const T* xb = xd + static_cast<std::size_t>(ib) * ci * t;
        T* yb = yd + static_cast<std::size_t>(ib) * co * to;
        for (int oc = 0; oc < co; ++oc) {
            T* yo = yb + static_cast<std::size_t>(oc) * to;
            const T b0 = bias ? bias[oc] : T{0};
            for (int o = 0; o < to; ++o) yo[o] = b0;
            const T* wc = wd + static_cast<std::size_t>(oc) * ci * k;
            for (int ic = 0; ic < ci; ++ic) {
                const T* xr = xb + static_cast<std::size_t>(ic) * t;
                const T* wr = wc + static_cast<std::size_t>(ic) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const T wval = wr[kk];
                    const int first = pad - kk;  // x index at o=0 is o*stride - first
                    const int o_lo = first > 0 ? (first + stride - 1) / stride : 0;
                    const int o_hi_x = t - 1 + first;  // largest o*stride allowed
                    if (o_hi_x < 0) continue;
                    const int o_hi = std::min(to - 1, o_hi_x / stride);
                    const T* xs = xr - first;
                    for (int o = o_lo; o <= o_hi; ++o) yo[o] += wval * xs[o * stride];
                }
            }
        }
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::relu(int x) {
    Node n;
    n.op = Op::Relu;
    n.args = {x};
    n.value = value(x);
    for (T& v : n.value.values)
        if (v < T{0}) v = T{0};
    return push(std::move(n));
}

template <typename T>
int Tape<T>::add(int a, int b) {
    const TensorT<T>& av = value(a);
    const TensorT<T>& bv = value(b);
    if (!same_shape(av.shape, bv.shape))
        shape_error("add shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Node n;
    n.op = Op::Add;
    n.args = {a, b};
    n.value = av;
    for (std::size_t i = 0; i < n.value.values.size(); ++i) n.value.values[i] += bv.values[i];
    return push(std::move(n));
}

template <typename T>
int Tape<T>::sub(int a, int b) {
    const TensorT<T>& av = value(a);
    const TensorT<T>& bv = value(b);
    if (!same_shape(av.shape, bv.shape))
        shape_error("sub shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Node n;
    n.op = Op::Sub;
    n.args = {a, b};
    n.value = av;
    for (std::size_t i = 0; i < n.value.values.size(); ++i) n.value.values[i] -= bv.values[i];
    return push(std::move(n));
}

template <typename T>
int Tape<T>::scale(int a, double factor) {
    Node n;
    n.op = Op::Scale;
    n.args = {a};
    n.scalar0 = factor;
    n.value = value(a);
    const T f = static_cast<T>(factor);
    for (T& v : n.value.values) v *= f;
    return push(std::move(n));
}

template <typename T>
int Tape<T>::add_const(int a, double c) {
    Node n;
    n.op = Op::AddConst;
    n.args = {a};
    n.scalar0 = c;
    n.value = value(a);
    const T cc = static_cast<T>(c);
    for (T& v : n.value.values) v += cc;
    return push(std::move(n));
}

template <typename T>
int Tape<T>::concat_cols(const std::vector<int>& xs) {
    if (xs.empty()) shape_error("concat_cols with no inputs");
    const int nrows = value(xs[0]).dim(0);
    int total = 0;
    for (const int x : xs) {
        const TensorT<T>& v = value(x);
        if (v.rank() != 2 || v.dim(0) != nrows) shape_error("concat_cols row mismatch");
        total += v.dim(1);
    }
    Node n;
    n.op = Op::ConcatCols;
    n.args = xs;
    n.value = TensorT<T>({nrows, total});
    T* out = n.value.data();
    for (int r = 0; r < nrows; ++r) {
        T* dst = out + static_cast<std::size_t>(r) * total;
        for (const int x : xs) {
            const TensorT<T>& v = value(x);
            const int c = v.dim(1);
            const T* src = v.data() + static_cast<std::size_t>(r) * c;
            std::copy(src, src + c, dst);
            dst += c;
        }
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::concat_rows(const std::vector<int>& xs) {
    if (xs.empty()) shape_error("concat_rows with no inputs");
    const int cols = value(xs[0]).dim(1);
    int total = 0;
    for (const int x : xs) {
        const TensorT<T>& v = value(x);
        if (v.rank() != 2 || v.dim(1) != cols) shape_error("concat_rows col mismatch");
        total += v.dim(0);
    }
    Node n;
    n.op = Op::ConcatRows;
    n.args = xs;
    n.value = TensorT<T>({total, cols});
    T* dst = n.value.data();
    for (const int x : xs) {
        const TensorT<T>& v = value(x);
        std::copy(v.values.begin(), v.values.end(), dst);
        dst += v.numel();
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::global_avg_pool(int x) {
    const TensorT<T>& xv = value(x);
    if (xv.rank() != 3) shape_error("global_avg_pool expects [n,c,t], got " + xv.shape_str());
    const int nb = xv.dim(0), c = xv.dim(1), t = xv.dim(2);
    Node n;
    n.op = Op::GlobalAvgPool;
    n.args = {x};
    n.value = TensorT<T>({nb, c});
    const T* xd = xv.data();
    T* yd = n.value.data();
    for (int ib = 0; ib < nb; ++ib)
        for (int ic = 0; ic < c; ++ic) {
            const T* xr = xd + (static_cast<std::size_t>(ib) * c + ic) * t;
            double acc = 0.0;
            for (int i = 0; i < t; ++i) acc += static_cast<double>(xr[i]);
            yd[static_cast<std::size_t>(ib) * c + ic] = static_cast<T>(acc / t);
        }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::gather_rows(int x, std::vector<int> rows) {
    const TensorT<T>& xv = value(x);
    if (xv.rank() != 2) shape_error("gather_rows expects [n,d]");
    const int nrows = xv.dim(0), d = xv.dim(1);
    for (const int r : rows)
        if (r < 0 || r >= nrows) shape_error("gather_rows index out of range");
    Node n;
    n.op = Op::GatherRows;
    n.args = {x};
    n.value = TensorT<T>({static_cast<int>(rows.size()), d});
    T* dst = n.value.data();
    for (const int r : rows) {
        const T* src = xv.data() + static_cast<std::size_t>(r) * d;
        std::copy(src, src + d, dst);
        dst += d;
    }
    n.index = std::move(rows);
    return push(std::move(n));
}

template <typename T>
int Tape<T>::repeat_rows_each(int x, int times) {
    const TensorT<T>& xv = value(x);
    if (xv.rank() != 2 || times < 1) shape_error("repeat_rows_each expects [n,d], times>=1");
    const int nrows = xv.dim(0), d = xv.dim(1);
    Node n;
    n.op = Op::RepeatRowsEach;
    n.args = {x};
    n.i0 = times;
    n.value = TensorT<T>({nrows * times, d});
    T* dst = n.value.data();
    for (int r = 0; r < nrows; ++r) {
        const T* src = xv.data() + static_cast<std::size_t>(r) * d;
        for (int m = 0; m < times; ++m) {
            std::copy(src, src + d, dst);
            dst += d;
        }
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::tile_rows(int x, int times) {
    const TensorT<T>& xv = value(x);
    if (xv.rank() != 2 || times < 1) shape_error("tile_rows expects [n,d], times>=1");
    const int nrows = xv.dim(0), d = xv.dim(1);
    Node n;
    n.op = Op::TileRows;
    n.args = {x};
    n.i0 = times;
    n.value = TensorT<T>({times * nrows, d});
    T* dst = n.value.data();
    for (int m = 0; m < times; ++m) {
        std::copy(xv.values.begin(), xv.values.end(), dst);
        dst += xv.numel();
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::row_sqdist(int a, int b) {
    const TensorT<T>& av = value(a);
    const TensorT<T>& bv = value(b);
    if (av.rank() != 2 || !same_shape(av.shape, bv.shape))
        shape_error("row_sqdist shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    const int nrows = av.dim(0), d = av.dim(1);
    Node n;
    n.op = Op::RowSqDist;
    n.args = {a, b};
    n.value = TensorT<T>({nrows});
    for (int r = 0; r < nrows; ++r) {
        const T* ar = av.data() + static_cast<std::size_t>(r) * d;
        const T* br = bv.data() + static_cast<std::size_t>(r) * d;
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
            const double diff = static_cast<double>(ar[i]) - static_cast<double>(br[i]);
            acc += diff * diff;
        }
        n.value.values[static_cast<std::size_t>(r)] = static_cast<T>(acc);
    }
    return push(std::move(n));
}

template <typename T>
int Tape<T>::mean_all(int x) {
    const TensorT<T>& xv = value(x);
    if (xv.numel() == 0) shape_error("mean_all over empty tensor");
    Node n;
    n.op = Op::MeanAll;
    n.args = {x};
    n.value = TensorT<T>({1});
    double acc = 0.0;
    for (const T v : xv.values) acc += static_cast<double>(v);
    n.value.values[0] = static_cast<T>(acc / static_cast<double>(xv.numel()));
    return push(std::move(n));
}

template <typename T>
int Tape<T>::weighted_sum(const std::vector<int>& xs, const std::vector<double>& weights) {
    if (xs.empty() || xs.size() != weights.size()) shape_error("weighted_sum arity mismatch");
    Node n;
    n.op = Op::WeightedSum;
    n.args = xs;
    n.weights = weights;
    n.value = TensorT<T>({1});
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const TensorT<T>& v = value(xs[i]);
        if (v.numel() != 1) shape_error("weighted_sum expects scalar inputs");
        acc += weights[i] * static_cast<double>(v.values[0]);
    }
    n.value.values[0] = static_cast<T>(acc);
    return push(std::move(n));
}

template <typename T>
int Tape<T>::softmax_cross_entropy(int logits, std::vector<int> targets) {
    const TensorT<T>& lv = value(logits);
    if (lv.rank() != 2) shape_error("softmax_cross_entropy expects [n,C]");
    const int nrows = lv.dim(0), c = lv.dim(1);
    if (static_cast<int>(targets.size()) != nrows)
        shape_error("softmax_cross_entropy target count mismatch");
    for (const int t : targets)
        if (t < 0 || t >= c) shape_error("softmax_cross_entropy target out of range");
    if (nrows == 0) shape_error("softmax_cross_entropy on empty batch");
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.args = {logits};
    n.aux = TensorT<T>({nrows, c});  // probabilities, reused in backward
    double loss = 0.0;
    for (int r = 0; r < nrows; ++r) {
        const T* lr = lv.data() + static_cast<std::size_t>(r) * c;
        T* pr = n.aux.data() + static_cast<std::size_t>(r) * c;
        double mx = static_cast<double>(lr[0]);
        for (int i = 1; i < c; ++i) mx = std::max(mx, static_cast<double>(lr[i]));
        double z = 0.0;
        for (int i = 0; i < c; ++i) z += std::exp(static_cast<double>(lr[i]) - mx);
        const double logz = std::log(z) + mx;
        for (int i = 0; i < c; ++i) pr[i] = static_cast<T>(std::exp(static_cast<double>(lr[i]) - logz));
        loss += logz - static_cast<double>(lr[targets[static_cast<std::size_t>(r)]]);
    }
    n.index = std::move(targets);
    n.value = TensorT<T>({1});
    n.value.values[0] = static_cast<T>(loss / nrows);
    return push(std::move(n));
}

template <typename T>
int Tape<T>::squared_error_sum(int pred, TensorT<T> target) {
    const TensorT<T>& pv = value(pred);
    if (!same_shape(pv.shape, target.shape))
        shape_error("squared_error_sum shape mismatch " + pv.shape_str() + " vs " + target.shape_str());
    Node n;
    n.op = Op::SquaredErrorSum;
    n.args = {pred};
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.values.size(); ++i) {
        const double diff = static_cast<double>(pv.values[i]) - static_cast<double>(target.values[i]);
        acc += diff * diff;
    }
    n.aux = std::move(target);
    n.value = TensorT<T>({1});
    n.value.values[0] = static_cast<T>(acc);
    return push(std::move(n));
}

template <typename T>
T Tape<T>::scalar(int id) const {
    const TensorT<T>& v = value(id);
    if (v.numel() != 1) shape_error("scalar() on non-scalar node");
    return v.values[0];
}

template <typename T>
T Tape<T>::backward(int loss_id) {
    if (!params_) throw ConfigError("backward() on a tape with read-only parameters");
    const TensorT<T>& loss = value(loss_id);
    if (loss.numel() != 1) shape_error("backward expects a scalar loss");
    if (!std::isfinite(static_cast<double>(loss.values[0]))) {
        for (const Node& n : nodes_)
            if (!n.value.all_finite())
                throw NumericError(std::string("non-finite loss; first bad node: ") + op_name(n.op) +
                                   (n.label.empty() ? "" : " '" + n.label + "'"));
        throw NumericError("non-finite loss");
    }

    // Only ancestors of the loss receive gradient.
    std::vector<char> live(nodes_.size(), 0);
    std::vector<int> stack{loss_id};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (live[static_cast<std::size_t>(id)]) continue;
        live[static_cast<std::size_t>(id)] = 1;
        for (const int a : cnode(id).args) stack.push_back(a);
    }

    node(loss_id).grad.values[0] = T{1};
    for (int id = loss_id; id >= 0; --id) {
        if (!live[static_cast<std::size_t>(id)]) continue;
        backward_node(id);
    }

    for (const auto& [name, id] : param_nodes_) {
        if (!live[static_cast<std::size_t>(id)]) continue;
        TensorT<T>& acc = params_->grad(name);
        const TensorT<T>& g = cnode(id).grad;
        for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += g.values[i];
    }
    return loss.values[0];
}

template <typename T>
void Tape<T>::backward_node(int id) {
    Node& n = node(id);
    const T* gy = n.grad.data();
    switch (n.op) {
        case Op::Input:
        case Op::Param:
            break;
        case Op::Dense: {
            const TensorT<T>& xv = cnode(n.args[0]).value;
            const TensorT<T>& wv = cnode(n.args[1]).value;
            TensorT<T>& gx = node(n.args[0]).grad;
            TensorT<T>& gw = node(n.args[1]).grad;
            const int nrows = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
            for (int r = 0; r < nrows; ++r) {
                const T* gyr = gy + static_cast<std::size_t>(r) * out;
                const T* xr = xv.data() + static_cast<std::size_t>(r) * in;
                T* gxr = gx.data() + static_cast<std::size_t>(r) * in;
                for (int c = 0; c < out; ++c) {
                    const T g = gyr[c];
                    if (g == T{0}) continue;
                    const T* wr = wv.data() + static_cast<std::size_t>(c) * in;
                    T* gwr = gw.data() + static_cast<std::size_t>(c) * in;
                    for (int i = 0; i < in; ++i) {
                        gxr[i] += g * wr[i];
                        gwr[i] += g * xr[i];
                    }
                }
            }
            if (n.args.size() == 3) {
                T* gb = node(n.args[2]).grad.data();
                for (int r = 0; r < nrows; ++r) {
                    const T* gyr = gy + static_cast<std::size_t>(r) * out;
                    for (int c = 0; c < out; ++c) gb[c] += gyr[c];
                }
            }
            break;
        }
        case Op::Conv1d: {
            const TensorT<T>& xv = cnode(n.args[0]).value;
            const TensorT<T>& wv = cnode(n.args[1]).value;
            TensorT<T>& gx = node(n.args[0]).grad;
            TensorT<T>& gw = node(n.args[1]).grad;
            const int nb = xv.dim(0), ci = xv.dim(1), t = xv.dim(2);
            const int co = wv.dim(0), k = wv.dim(2), to = n.value.dim(2);
            const int stride = n.i0, pad = n.i1;
            for (int ib = 0; ib < nb; ++ib) {
                const T* xb = xv.data() + static_cast<std::size_t>(ib) * ci * t;
                T* gxb = gx.data() + static_cast<std::size_t>(ib) * ci * t;
                const T* gyb = gy + static_cast<std::size_t>(ib) * co * to;
                for (int oc = 0; oc < co; ++oc) {
                    const T* gyo = gyb + static_cast<std::size_t>(oc) * to;
                    const T* wc = wv.data() + static_cast<std::size_t>(oc) * ci * k;
                    T* gwc = gw.data() + static_cast<std::size_t>(oc) * ci * k;
                    for (int ic = 0; ic < ci; ++ic) {
                        const T* xr = xb + static_cast<std::size_t>(ic) * t;
                        T* gxr = gxb + static_cast<std::size_t>(ic) * t;
                        const T* wr = wc + static_cast<std::size_t>(ic) * k;
                        T* gwr = gwc + static_cast<std::size_t>(ic) * k;
                        for (int kk = 0; kk < k; ++kk) {
                            const T wval = wr[kk];
                            const int first = pad - kk;
                            const int o_lo = first > 0 ? (first + stride - 1) / stride : 0;
                            const int o_hi_x = t - 1 + first;
                            if (o_hi_x < 0) continue;
                            const int o_hi = std::min(to - 1, o_hi_x / stride);
                            const T* xs = xr - first;
                            T* gxs = gxr - first;
                            T wacc{0};
                            for (int o = o_lo; o <= o_hi; ++o) {
                                const T g = gyo[o];
                                gxs[o * stride] += g * wval;
                                wacc += g * xs[o * stride];
                            }
                            gwr[kk] += wacc;
                        }
                    }
                    if (n.args.size() == 3) {
                        T* gb = node(n.args[2]).grad.data();
                        T acc{0};
                        for (int o = 0; o < to; ++o) acc += gyo[o];
                        gb[oc] += acc;
                    }
                }
            }
            break;
        }
        case Op::Relu: {
            TensorT<T>& gx = node(n.args[0]).grad;
            for (std::size_t i = 0; i < gx.values.size(); ++i)
                if (n.value.values[i] > T{0}) gx.values[i] += gy[i];
            break;
        }
        case Op::Add: {
            TensorT<T>& ga = node(n.args[0]).grad;
            TensorT<T>& gb = node(n.args[1]).grad;
            for (std::size_t i = 0; i < ga.values.size(); ++i) {
                ga.values[i] += gy[i];
                gb.values[i] += gy[i];
            }
            break;
        }
        case Op::Sub: {
            TensorT<T>& ga = node(n.args[0]).grad;
            TensorT<T>& gb = node(n.args[1]).grad;
            for (std::size_t i = 0; i < ga.values.size(); ++i) {
                ga.values[i] += gy[i];
                gb.values[i] -= gy[i];
            }
            break;
        }
        case Op::Scale: {
            TensorT<T>& ga = node(n.args[0]).grad;
            const T f = static_cast<T>(n.scalar0);
            for (std::size_t i = 0; i < ga.values.size(); ++i) ga.values[i] += gy[i] * f;
            break;
        }
        case Op::AddConst: {
            TensorT<T>& ga = node(n.args[0]).grad;
            for (std::size_t i = 0; i < ga.values.size(); ++i) ga.values[i] += gy[i];
            break;
        }
        case Op::ConcatCols: {
            const int total = n.value.dim(1);
            const int nrows = n.value.dim(0);
            int off = 0;
            for (const int x : n.args) {
                TensorT<T>& gx = node(x).grad;
                const int c = gx.dim(1);
                for (int r = 0; r < nrows; ++r) {
                    const T* src = gy + static_cast<std::size_t>(r) * total + off;
                    T* dst = gx.data() + static_cast<std::size_t>(r) * c;
                    for (int i = 0; i < c; ++i) dst[i] += src[i];
                }
                off += c;
            }
            break;
        }
        case Op::ConcatRows: {
            std::size_t off = 0;
            for (const int x : n.args) {
                TensorT<T>& gx = node(x).grad;
                for (std::size_t i = 0; i < gx.values.size(); ++i) gx.values[i] += gy[off + i];
                off += gx.values.size();
            }
            break;
        }
        case Op::GlobalAvgPool: {
            TensorT<T>& gx = node(n.args[0]).grad;
            const int nb = gx.dim(0), c = gx.dim(1), t = gx.dim(2);
            for (int ib = 0; ib < nb; ++ib)
                for (int ic = 0; ic < c; ++ic) {
                    const T g = gy[static_cast<std::size_t>(ib) * c + ic] / static_cast<T>(t);
                    T* gxr = gx.data() + (static_cast<std::size_t>(ib) * c + ic) * t;
                    for (int i = 0; i < t; ++i) gxr[i] += g;
                }
            break;
        }
        case Op::GatherRows: {
            TensorT<T>& gx = node(n.args[0]).grad;
            const int d = gx.dim(1);
            for (std::size_t r = 0; r < n.index.size(); ++r) {
                const T* src = gy + r * static_cast<std::size_t>(d);
                T* dst = gx.data() + static_cast<std::size_t>(n.index[r]) * d;
                for (int i = 0; i < d; ++i) dst[i] += src[i];
            }
            break;
        }
        case Op::RepeatRowsEach: {
            TensorT<T>& gx = node(n.args[0]).grad;
            const int nrows = gx.dim(0), d = gx.dim(1), m = n.i0;
            for (int r = 0; r < nrows; ++r) {
                T* dst = gx.data() + static_cast<std::size_t>(r) * d;
                for (int j = 0; j < m; ++j) {
                    const T* src = gy + (static_cast<std::size_t>(r) * m + j) * d;
                    for (int i = 0; i < d; ++i) dst[i] += src[i];
                }
            }
            break;
        }
        case Op::TileRows: {
            TensorT<T>& gx = node(n.args[0]).grad;
            const std::size_t block = gx.values.size();
            for (int j = 0; j < n.i0; ++j) {
                const T* src = gy + static_cast<std::size_t>(j) * block;
                for (std::size_t i = 0; i < block; ++i) gx.values[i] += src[i];
            }
            break;
        }
        case Op::RowSqDist: {
            const TensorT<T>& av = cnode(n.args[0]).value;
            const TensorT<T>& bv = cnode(n.args[1]).value;
            TensorT<T>& ga = node(n.args[0]).grad;
            TensorT<T>& gb = node(n.args[1]).grad;
            const int nrows = av.dim(0), d = av.dim(1);
            for (int r = 0; r < nrows; ++r) {
                const T g2 = T{2} * gy[r];
                if (g2 == T{0}) continue;
                const std::size_t off = static_cast<std::size_t>(r) * d;
                for (int i = 0; i < d; ++i) {
                    const T diff = av.values[off + i] - bv.values[off + i];
                    ga.values[off + i] += g2 * diff;
                    gb.values[off + i] -= g2 * diff;
                }
            }
            break;
        }
        case Op::MeanAll: {
            TensorT<T>& gx = node(n.args[0]).grad;
            const T g = gy[0] / static_cast<T>(gx.numel());
            for (T& v : gx.values) v += g;
            break;
        }
        case Op::WeightedSum: {
            for (std::size_t i = 0; i < n.args.size(); ++i)
                node(n.args[i]).grad.values[0] += gy[0] * static_cast<T>(n.weights[i]);
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            TensorT<T>& gl = node(n.args[0]).grad;
            const int nrows = n.aux.dim(0), c = n.aux.dim(1);
            const T g = gy[0] / static_cast<T>(nrows);
            for (int r = 0; r < nrows; ++r) {
                const T* pr = n.aux.data() + static_cast<std::size_t>(r) * c;
                T* gr = gl.data() + static_cast<std::size_t>(r) * c;
                const int tgt = n.index[static_cast<std::size_t>(r)];
                for (int i = 0; i < c; ++i) gr[i] += g * (pr[i] - (i == tgt ? T{1} : T{0}));
            }
            break;
        }
        case Op::SquaredErrorSum: {
            const TensorT<T>& pv = cnode(n.args[0]).value;
            TensorT<T>& gp = node(n.args[0]).grad;
            const T g2 = T{2} * gy[0];
            for (std::size_t i = 0; i < pv.values.size(); ++i)
                gp.values[i] += g2 * (pv.values[i] - n.aux.values[i]);
            break;
        }
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace comhom::nn
