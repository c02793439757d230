// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_MODEL_HPP
#define PIPECUT_MODEL_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pipecut/errors.hpp"
#include "pipecut/tensor.hpp"

namespace pipecut {

enum class Op {
    Input,
    Output,
    Conv2D,
    MaxPool2D,
    AvgPool2D,
    GlobalAvgPool2D,
    ReLU,
    Add,
    Concat,
    FullyConnected,
    BatchNorm,
    Softmax,
    Flatten,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "Input";
        case Op::Output: return "Output";
        case Op::Conv2D: return "Conv2D";
        case Op::MaxPool2D: return "MaxPool2D";
        case Op::AvgPool2D: return "AvgPool2D";
        case Op::GlobalAvgPool2D: return "GlobalAvgPool2D";
        case Op::ReLU: return "ReLU";
        case Op::Add: return "Add";
        case Op::Concat: return "Concat";
        case Op::FullyConnected: return "FullyConnected";
        case Op::BatchNorm: return "BatchNorm";
        case Op::Softmax: return "Softmax";
        case Op::Flatten: return "Flatten";
    }
    return "?";
}

inline Op op_from_name(const std::string& name) {
    static const std::map<std::string, Op> table = {
        {"Input", Op::Input},
        {"Output", Op::Output},
        {"Conv2D", Op::Conv2D},
        {"MaxPool2D", Op::MaxPool2D},
        {"AvgPool2D", Op::AvgPool2D},
        {"GlobalAvgPool2D", Op::GlobalAvgPool2D},
        {"ReLU", Op::ReLU},
        {"Add", Op::Add},
        {"Concat", Op::Concat},
        {"FullyConnected", Op::FullyConnected},
        {"BatchNorm", Op::BatchNorm},
        {"Softmax", Op::Softmax},
        {"Flatten", Op::Flatten},
    };
    auto it = table.find(name);
    if (it == table.end()) throw UnsupportedOp(name);
    return it->second;
}

using AttrValue = std::variant<std::int64_t, double, std::vector<std::int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

struct Layer {
    std::string name;
    Op op = Op::Input;
    AttrMap attrs;
    std::vector<std::string> inputs;
    std::vector<std::string> weight_refs;

    std::int64_t attr_int(const std::string& key) const {
        auto it = attrs.find(key);
        if (it == attrs.end()) throw ValidationError("layer " + name + ": missing attr '" + key + "'");
        if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
        throw ValidationError("layer " + name + ": attr '" + key + "' is not an integer");
    }

    std::int64_t attr_int_or(const std::string& key, std::int64_t fallback) const {
        return attrs.count(key) ? attr_int(key) : fallback;
    }

    double attr_float_or(const std::string& key, double fallback) const {
        auto it = attrs.find(key);
        if (it == attrs.end()) return fallback;
        if (const auto* v = std::get_if<double>(&it->second)) return *v;
        if (const auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
        throw ValidationError("layer " + name + ": attr '" + key + "' is not a number");
    }

    std::vector<std::int64_t> attr_ints(const std::string& key) const {
        auto it = attrs.find(key);
        if (it == attrs.end()) throw ValidationError("layer " + name + ": missing attr '" + key + "'");
        if (const auto* v = std::get_if<std::vector<std::int64_t>>(&it->second)) return *v;
        throw ValidationError("layer " + name + ": attr '" + key + "' is not an integer list");
    }
};

/// Named float32 payloads, preserving file order so save(load(x)) is byte-identical.
class WeightStore {
public:
    struct Entry {
        std::string name;
        TensorSpec spec;
        std::vector<float> data;
    };

    void add(const std::string& name, TensorSpec spec, std::vector<float> data) {
        if (index_.count(name)) throw ValidationError("duplicate weight entry: " + name);
        if (static_cast<std::int64_t>(data.size()) != spec.elements())
            throw WeightMismatch(name + ": payload has " + std::to_string(data.size()) +
                                 " floats, spec is " + spec.str());
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, std::move(spec), std::move(data)});
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw WeightMismatch("missing weight entry: " + name);
        return entries_[it->second];
    }

    const std::vector<Entry>& entries() const { return entries_; }

    std::uint64_t total_bytes() const {
        std::uint64_t n = 0;
        for (const auto& e : entries_) n += e.spec.bytes();
        return n;
    }

    bool operator==(const WeightStore& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const Entry& a = entries_[i];
            const Entry& b = other.entries_[i];
            if (a.name != b.name || a.spec != b.spec || a.data != b.data) return false;
        }
        return true;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Model {
    std::string name;
    std::vector<Layer> layers;
    std::map<std::string, TensorSpec> shapes;  // filled by validate()
    WeightStore weights;

    const Layer* find(const std::string& layer_name) const {
        for (const auto& l : layers)
            if (l.name == layer_name) return &l;
        return nullptr;
    }

    const Layer& at(const std::string& layer_name) const {
        const Layer* l = find(layer_name);
        if (!l) throw UnknownLayer(layer_name);
        return *l;
    }

    const Layer& input_layer() const {
        for (const auto& l : layers)
            if (l.op == Op::Input) return l;
        throw ValidationError("model has no Input layer");
    }

    const Layer& output_layer() const {
        for (const auto& l : layers)
            if (l.op == Op::Output) return l;
        throw ValidationError("model has no Output layer");
    }

    /// Layers that appear in mapping specifications: everything except Input/Output.
    std::vector<std::string> hidden_layers() const {
        std::vector<std::string> out;
        for (const auto& l : layers)
            if (l.op != Op::Input && l.op != Op::Output) out.push_back(l.name);
        return out;
    }

    const TensorSpec& shape_of(const std::string& layer_name) const {
        auto it = shapes.find(layer_name);
        if (it == shapes.end()) throw ShapeError("no inferred shape for layer " + layer_name);
        return it->second;
    }
};

/// Topological order of layer names; ready layers are emitted in ascending
/// lexicographic name order so the result is deterministic.
inline std::vector<std::string> topo_order(const Model& m) {
    std::map<std::string, int> pending;  // layer -> unresolved input count
    std::map<std::string, std::vector<std::string>> consumers;
    for (const auto& l : m.layers) {
        pending[l.name] = static_cast<int>(l.inputs.size());
        for (const auto& in : l.inputs) consumers[in].push_back(l.name);
    }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [name, count] : pending)
        if (count == 0) ready.push(name);

    std::vector<std::string> order;
    order.reserve(m.layers.size());
    while (!ready.empty()) {
        std::string name = ready.top();
        ready.pop();
        order.push_back(name);
        for (const auto& c : consumers[name])
            if (--pending[c] == 0) ready.push(c);
    }
    if (order.size() != m.layers.size()) throw CycleError("layer graph contains a cycle");
    return order;
}

namespace detail {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p,
                                 const std::string& layer) {
    std::int64_t num = in + 2 * p - k;
    if (num < 0) throw ShapeError(layer + ": kernel " + std::to_string(k) + " larger than padded input " +
                                  std::to_string(in + 2 * p));
    return num / s + 1;
}

inline void require_inputs(const Layer& l, std::size_t n) {
    if (l.inputs.size() != n)
        throw ValidationError("layer " + l.name + " (" + op_name(l.op) + ") expects " + std::to_string(n) +
                              " inputs, has " + std::to_string(l.inputs.size()));
}

inline void require_rank(const Layer& l, const TensorSpec& spec, std::size_t rank) {
    if (spec.dims.size() != rank)
        throw ShapeError(l.name + ": expected rank-" + std::to_string(rank) + " input, got " + spec.str());
}

}  // namespace detail

/// Output shape of one layer given its input shapes. Pure; used by shape
/// inference and by the runtime to validate arriving tensors.
inline TensorSpec layer_output_shape(const Layer& l, const std::vector<TensorSpec>& in) {
    using detail::conv_out_dim;
    using detail::require_rank;
    switch (l.op) {
        case Op::Input: {
            TensorSpec spec;
            spec.dims = l.attr_ints("shape");
            check_tensor_spec(spec, l.name);
            if (spec.dims.size() != 2 && spec.dims.size() != 4)
                throw ShapeError(l.name + ": model input must be 2-D or 4-D, got " + spec.str());
            if (spec.dims[0] != 1) throw ShapeError(l.name + ": batch size must be 1, got " + spec.str());
            return spec;
        }
        case Op::Output:
            return in.at(0);
        case Op::Conv2D: {
            require_rank(l, in.at(0), 4);
            std::int64_t k = l.attr_int("kernel");
            std::int64_t s = l.attr_int_or("stride", 1);
            std::int64_t p = l.attr_int_or("padding", 0);
            std::int64_t f = l.attr_int("filters");
            if (k < 1 || s < 1 || p < 0 || f < 1)
                throw ValidationError(l.name + ": bad Conv2D attrs (kernel/stride/filters >= 1, padding >= 0)");
            const auto& d = in[0].dims;
            return TensorSpec{{1, f, conv_out_dim(d[2], k, s, p, l.name), conv_out_dim(d[3], k, s, p, l.name)}};
        }
        case Op::MaxPool2D:
        case Op::AvgPool2D: {
            require_rank(l, in.at(0), 4);
            std::int64_t k = l.attr_int("kernel");
            std::int64_t s = l.attr_int_or("stride", k);
            std::int64_t p = l.attr_int_or("padding", 0);
            if (k < 1 || s < 1 || p < 0)
                throw ValidationError(l.name + ": bad pool attrs (kernel/stride >= 1, padding >= 0)");
            const auto& d = in[0].dims;
            return TensorSpec{{1, d[1], conv_out_dim(d[2], k, s, p, l.name), conv_out_dim(d[3], k, s, p, l.name)}};
        }
        case Op::GlobalAvgPool2D:
            require_rank(l, in.at(0), 4);
            return TensorSpec{{1, in[0].dims[1], 1, 1}};
        case Op::ReLU:
            return in.at(0);
        case Op::Add: {
            if (in.size() < 2) throw ValidationError(l.name + ": Add needs at least 2 inputs");
            for (std::size_t i = 1; i < in.size(); ++i)
                if (in[i] != in[0])
                    throw ShapeError(l.name + ": Add inputs differ: " + in[0].str() + " vs " + in[i].str());
            return in[0];
        }
        case Op::Concat: {
            if (in.size() < 2) throw ValidationError(l.name + ": Concat needs at least 2 inputs");
            std::int64_t axis = l.attr_int("axis");
            const auto& first = in[0].dims;
            if (axis < 1 || axis >= static_cast<std::int64_t>(first.size()))
                throw ValidationError(l.name + ": Concat axis " + std::to_string(axis) + " out of range for " +
                                      in[0].str());
            TensorSpec out = in[0];
            for (std::size_t i = 1; i < in.size(); ++i) {
                if (in[i].dims.size() != first.size())
                    throw ShapeError(l.name + ": Concat rank mismatch: " + in[0].str() + " vs " + in[i].str());
                for (std::size_t d = 0; d < first.size(); ++d) {
                    if (static_cast<std::int64_t>(d) == axis) continue;
                    if (in[i].dims[d] != first[d])
                        throw ShapeError(l.name + ": Concat non-axis dim mismatch: " + in[0].str() + " vs " +
                                         in[i].str());
                }
                out.dims[static_cast<std::size_t>(axis)] += in[i].dims[static_cast<std::size_t>(axis)];
            }
            return out;
        }
        case Op::FullyConnected: {
            require_inputs(l, 1);
            std::int64_t out_features = l.attr_int("out_features");
            if (out_features < 1) throw ValidationError(l.name + ": out_features must be >= 1");
            return TensorSpec{{1, out_features}};
        }
        case Op::BatchNorm:
            require_rank(l, in.at(0), 4);
            if (l.attr_float_or("epsilon", 1e-5) <= 0.0)
                throw ValidationError(l.name + ": epsilon must be positive");
            return in.at(0);
        case Op::Softmax: {
            const TensorSpec& spec = in.at(0);
            std::int64_t axis = l.attr_int_or("axis", 1);
            if (axis < 1 || axis >= static_cast<std::int64_t>(spec.dims.size()))
                throw ValidationError(l.name + ": Softmax axis " + std::to_string(axis) + " out of range for " +
                                      spec.str());
            return spec;
        }
        case Op::Flatten: {
            const TensorSpec& spec = in.at(0);
            std::int64_t features = 1;
            for (std::size_t d = 1; d < spec.dims.size(); ++d) features *= spec.dims[d];
            return TensorSpec{{1, features}};
        }
    }
    throw UnsupportedOp(op_name(l.op));
}

/// Per-layer output shapes, walking the graph in topological order.
inline std::map<std::string, TensorSpec> infer_shapes(const Model& m) {
    std::map<std::string, TensorSpec> shapes;
    for (const auto& name : topo_order(m)) {
        const Layer& l = m.at(name);
        std::vector<TensorSpec> in;
        in.reserve(l.inputs.size());
        for (const auto& src : l.inputs) {
            auto it = shapes.find(src);
            if (it == shapes.end()) throw ShapeError(l.name + ": input " + src + " has no shape");
            in.push_back(it->second);
        }
        shapes.emplace(name, layer_output_shape(l, in));
    }
    return shapes;
}

namespace detail {

inline std::size_t flat_features(const TensorSpec& spec) {
    std::int64_t n = 1;
    for (std::size_t d = 1; d < spec.dims.size(); ++d) n *= spec.dims[d];
    return static_cast<std::size_t>(n);
}

inline void check_weight(const Model& m, const Layer& l, std::size_t idx, const TensorSpec& expected) {
    const std::string& ref = l.weight_refs.at(idx);
    if (!m.weights.contains(ref)) throw WeightMismatch(l.name + ": missing weight entry " + ref);
    const auto& entry = m.weights.at(ref);
    if (entry.spec != expected)
        throw WeightMismatch(l.name + ": weight " + ref + " has shape " + entry.spec.str() + ", expected " +
                             expected.str());
}

inline void validate_layer_weights(const Model& m, const Layer& l,
                                   const std::map<std::string, TensorSpec>& shapes) {
    auto expect_count = [&](std::size_t n) {
        if (l.weight_refs.size() != n)
            throw WeightMismatch(l.name + " (" + op_name(l.op) + ") expects " + std::to_string(n) +
                                 " weight refs, has " + std::to_string(l.weight_refs.size()));
    };
    switch (l.op) {
        case Op::Conv2D: {
            expect_count(2);
            std::int64_t k = l.attr_int("kernel");
            std::int64_t f = l.attr_int("filters");
            std::int64_t c = shapes.at(l.inputs[0]).dims[1];
            check_weight(m, l, 0, TensorSpec{{f, c, k, k}});
            check_weight(m, l, 1, TensorSpec{{f}});
            break;
        }
        case Op::FullyConnected: {
            expect_count(2);
            std::int64_t out = l.attr_int("out_features");
            auto in_features = static_cast<std::int64_t>(flat_features(shapes.at(l.inputs[0])));
            check_weight(m, l, 0, TensorSpec{{out, in_features}});
            check_weight(m, l, 1, TensorSpec{{out}});
            break;
        }
        case Op::BatchNorm: {
            expect_count(4);  // gamma, beta, mean, var
            std::int64_t c = shapes.at(l.inputs[0]).dims[1];
            for (std::size_t i = 0; i < 4; ++i) check_weight(m, l, i, TensorSpec{{c}});
            break;
        }
        default:
            expect_count(0);
    }
}

}  // namespace detail

/// Full structural validation; fills m.shapes on success.
inline void validate_model(Model& m) {
    if (m.layers.empty()) throw ValidationError("model has no layers");

    std::set<std::string> names;
    int inputs = 0, outputs = 0;
    for (const auto& l : m.layers) {
        if (l.name.empty()) throw ValidationError("layer with empty name");
        if (!names.insert(l.name).second) throw ValidationError("duplicate layer name: " + l.name);
        if (l.op == Op::Input) {
            ++inputs;
            if (!l.inputs.empty()) throw ValidationError(l.name + ": Input layer must have no inputs");
        } else {
            if (l.inputs.empty()) throw ValidationError(l.name + ": non-Input layer must have inputs");
        }
        if (l.op == Op::Output) {
            ++outputs;
            detail::require_inputs(l, 1);
        }
    }
    if (inputs != 1) throw ValidationError("model must have exactly one Input layer, has " + std::to_string(inputs));
    if (outputs != 1)
        throw ValidationError("model must have exactly one Output layer, has " + std::to_string(outputs));

    for (const auto& l : m.layers) {
        for (const auto& in : l.inputs) {
            if (!names.count(in)) throw ValidationError("layer " + l.name + " references unknown input " + in);
            if (m.at(in).op == Op::Output)
                throw ValidationError("layer " + l.name + " consumes the Output layer");
        }
    }

    // Acyclicity and reachability from the Input layer.
    std::vector<std::string> order = topo_order(m);
    std::set<std::string> reachable = {m.input_layer().name};
    for (const auto& name : order) {
        const Layer& l = m.at(name);
        for (const auto& in : l.inputs)
            if (reachable.count(in)) reachable.insert(name);
    }
    for (const auto& l : m.layers)
        if (!reachable.count(l.name))
            throw ValidationError("layer " + l.name + " is not reachable from the Input layer");

    m.shapes = infer_shapes(m);
    for (const auto& l : m.layers) detail::validate_layer_weights(m, l, m.shapes);
}

}  // namespace pipecut

#endif
