#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "comhom/error.hpp"

namespace comhom::nn {

// Dense row-major tensor. float carries all training state; the double
// instantiation exists for the finite-difference shadow path only.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> values;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), values(count(shape), T{0}) {}
    TensorT(std::vector<int> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != count(shape)) throw ConfigError("tensor shape/value size mismatch");
    }

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (const int d : s) {
            if (d < 0) throw ConfigError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return values.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T* data() { return values.data(); }
    const T* data() const { return values.data(); }

    T& at2(int r, int c) { return values[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim(1)) + static_cast<std::size_t>(c)]; }
    T at2(int r, int c) const { return values[static_cast<std::size_t>(r) * static_cast<std::size_t>(dim(1)) + static_cast<std::size_t>(c)]; }

    void fill(T v) { std::fill(values.begin(), values.end(), v); }

    bool all_finite() const {
        for (const T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ']';
        return os.str();
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename Dst, typename Src>
TensorT<Dst> cast_tensor(const TensorT<Src>& t) {
    TensorT<Dst> out;
    out.shape = t.shape;
    out.values.resize(t.values.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) out.values[i] = static_cast<Dst>(t.values[i]);
    return out;
}

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

}  // namespace comhom::nn
