#pragma once

#include <map>
#include <string>

#include "comhom/tensor.hpp"

namespace comhom::nn {

// Named parameter tensors plus gradient accumulators. Iteration order is
// name-sorted, so every walk over the set is deterministic.
template <typename T>
class ParameterSetT {
public:
    struct Entry {
        TensorT<T> value;
        TensorT<T> grad;
    };

    void add(const std::string& name, TensorT<T> init) {
        if (entries_.count(name)) throw ConfigError("duplicate parameter: " + name);
        Entry e;
        e.grad = TensorT<T>(init.shape);
        e.value = std::move(init);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }

    TensorT<T>& value(const std::string& name) { return at(name).value; }
    const TensorT<T>& value(const std::string& name) const { return at(name).value; }
    TensorT<T>& grad(const std::string& name) { return at(name).grad; }
    const TensorT<T>& grad(const std::string& name) const { return at(name).grad; }

    void zero_grads() {
        for (auto& [name, e] : entries_) e.grad.fill(T{0});
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const auto& [name, e] : entries_) n += e.value.numel();
        return n;
    }

    // Parameter count under a name prefix, e.g. "op." for the operator.
    std::size_t count_prefix(const std::string& prefix) const {
        std::size_t n = 0;
        for (const auto& [name, e] : entries_)
            if (name.rfind(prefix, 0) == 0) n += e.value.numel();
        return n;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry> entries_;
};

using ParameterSet = ParameterSetT<float>;
using ParameterSet64 = ParameterSetT<double>;

template <typename Dst, typename Src>
ParameterSetT<Dst> cast_params(const ParameterSetT<Src>& src) {
    ParameterSetT<Dst> out;
    for (const auto& [name, e] : src) out.add(name, cast_tensor<Dst>(e.value));
    return out;
}

}  // namespace comhom::nn
