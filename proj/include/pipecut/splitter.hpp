// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_SPLITTER_HPP
#define PIPECUT_SPLITTER_HPP

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/mapping.hpp"
#include "pipecut/model.hpp"
#include "pipecut/model_io.hpp"

namespace pipecut {

/// A severed producer->consumers connection. One cut edge per source layer
/// with foreign consumers; the single buffer name fans out to every
/// consuming rank (Fig-2 style Buff1 going to two ranks).
struct CutEdge {
    struct Consumer {
        std::string dst_layer;
        int dst_rank;
        bool operator==(const Consumer& o) const { return dst_layer == o.dst_layer && dst_rank == o.dst_rank; }
    };

    std::string src_layer;
    int src_rank = 0;
    std::string buffer;
    TensorSpec shape;
    std::vector<Consumer> consumers;  // ordered by (dst_rank, dst_layer)

    std::vector<int> dst_ranks() const {
        std::vector<int> out;
        for (const auto& c : consumers)
            if (out.empty() || out.back() != c.dst_rank) out.push_back(c.dst_rank);
        return out;
    }
};

/// Layer name -> rank, including the Input/Output pseudo-layers: Input is
/// co-located with the rank owning the first hidden layer in topo order,
/// Output with the rank owning the last.
inline std::map<std::string, int> partition_of(const Model& m, const MappingSpec& ms) {
    std::map<std::string, int> part;
    for (std::size_t rank = 0; rank < ms.assignments.size(); ++rank)
        for (const auto& layer : ms.assignments[rank].layers) part[layer] = static_cast<int>(rank);

    std::string first_hidden, last_hidden;
    for (const auto& name : topo_order(m)) {
        const Layer& l = m.at(name);
        if (l.op == Op::Input || l.op == Op::Output) continue;
        if (first_hidden.empty()) first_hidden = name;
        last_hidden = name;
    }
    if (first_hidden.empty()) throw InconsistentMapping("model has no hidden layers");
    part[m.input_layer().name] = part.at(first_hidden);
    part[m.output_layer().name] = part.at(last_hidden);
    return part;
}

namespace detail {

inline std::vector<CutEdge> cut_edges_impl(const Model& m, const std::map<std::string, int>& part) {
    // consumers keyed by producer, gathered in one pass
    std::map<std::string, std::vector<CutEdge::Consumer>> foreign;
    for (const auto& l : m.layers) {
        int dst_rank = part.at(l.name);
        std::set<std::string> seen;  // a layer consuming the same producer twice counts once
        for (const auto& src : l.inputs) {
            if (part.at(src) == dst_rank || !seen.insert(src).second) continue;
            foreign[src].push_back(CutEdge::Consumer{l.name, dst_rank});
        }
    }
    std::vector<CutEdge> cuts;
    int counter = 0;
    for (const auto& name : topo_order(m)) {
        auto it = foreign.find(name);
        if (it == foreign.end()) continue;
        CutEdge cut;
        cut.src_layer = name;
        cut.src_rank = part.at(name);
        cut.buffer = "Buff" + std::to_string(++counter);
        cut.shape = m.shape_of(name);
        cut.consumers = it->second;
        std::sort(cut.consumers.begin(), cut.consumers.end(), [](const auto& a, const auto& b) {
            return a.dst_rank != b.dst_rank ? a.dst_rank < b.dst_rank : a.dst_layer < b.dst_layer;
        });
        cuts.push_back(std::move(cut));
    }
    return cuts;
}

}  // namespace detail

/// One partition of the model: the layers of one mapping key, with severed
/// connections replaced by named input/output buffers and weights restricted
/// to the layers it carries.
struct SubModel {
    int rank = 0;
    ResourceKey key;
    std::string model_name;
    std::vector<Layer> layers;  // topo order; foreign input refs rewritten to buffer names
    std::map<std::string, TensorSpec> input_buffers;
    std::map<std::string, TensorSpec> output_buffers;
    std::map<std::string, std::string> buffer_sources;  // output buffer -> local producer
    WeightStore weights;

    bool owns_input = false;
    std::string input_name;  // model Input layer name, when owned
    TensorSpec input_spec;

    bool owns_output = false;
    std::string output_name;    // model Output layer name, when owned
    std::string output_source;  // tensor the Output reads: a local layer or an input buffer
    TensorSpec output_spec;

    const Layer* find(const std::string& name) const {
        for (const auto& l : layers)
            if (l.name == name) return &l;
        return nullptr;
    }

    std::uint64_t buffer_bytes() const {
        std::uint64_t n = 0;
        for (const auto& [name, spec] : input_buffers) n += spec.bytes();
        for (const auto& [name, spec] : output_buffers) n += spec.bytes();
        return n;
    }
};

/// Exactly the producer->consumer connections whose endpoints land on
/// different ranks. Buffers are named Buff1, Buff2, ... in topo order of
/// the source layer.
inline std::vector<CutEdge> cut_edges(const Model& m, const MappingSpec& ms) {
    return detail::cut_edges_impl(m, partition_of(m, ms));
}

inline std::vector<SubModel> split_model(const Model& m, const MappingSpec& ms) {
    auto part = partition_of(m, ms);
    auto cuts = detail::cut_edges_impl(m, part);

    std::map<std::string, const CutEdge*> cut_by_src;
    for (const auto& c : cuts) cut_by_src[c.src_layer] = &c;

    const std::string input_name = m.input_layer().name;
    const Layer& output_layer = m.output_layer();
    const int input_rank = part.at(input_name);
    const int output_rank = part.at(output_layer.name);

    // Global topo positions order each partition's layer list.
    std::map<std::string, std::size_t> topo_pos;
    {
        std::size_t i = 0;
        for (const auto& name : topo_order(m)) topo_pos[name] = i++;
    }

    std::vector<SubModel> subs(ms.assignments.size());
    for (std::size_t rank = 0; rank < ms.assignments.size(); ++rank) {
        SubModel& sm = subs[rank];
        sm.rank = static_cast<int>(rank);
        sm.key = ms.assignments[rank].key;
        sm.model_name = m.name;

        std::vector<std::string> names = ms.assignments[rank].layers;
        std::sort(names.begin(), names.end(),
                  [&](const std::string& a, const std::string& b) { return topo_pos.at(a) < topo_pos.at(b); });

        auto rewrite = [&](const std::string& src) -> std::string {
            if (part.at(src) == sm.rank) return src;
            const CutEdge* cut = cut_by_src.at(src);
            sm.input_buffers[cut->buffer] = cut->shape;
            return cut->buffer;
        };

        for (const auto& name : names) {
            Layer l = m.at(name);
            for (auto& in : l.inputs) in = rewrite(in);
            for (const auto& ref : l.weight_refs) {
                if (sm.weights.contains(ref)) continue;
                const auto& e = m.weights.at(ref);
                sm.weights.add(e.name, e.spec, e.data);
            }
            sm.layers.push_back(std::move(l));
        }

        if (sm.rank == input_rank) {
            sm.owns_input = true;
            sm.input_name = input_name;
            sm.input_spec = m.shape_of(input_name);
        }
        if (sm.rank == output_rank) {
            sm.owns_output = true;
            sm.output_name = output_layer.name;
            sm.output_source = rewrite(output_layer.inputs.at(0));
            sm.output_spec = m.shape_of(output_layer.name);
        }
    }

    for (const auto& cut : cuts) {
        SubModel& src = subs[static_cast<std::size_t>(cut.src_rank)];
        src.output_buffers[cut.buffer] = cut.shape;
        src.buffer_sources[cut.buffer] = cut.src_layer;
    }
    return subs;
}

// --- serialization: graph-JSON layer schema plus buffer declarations ---

inline nlohmann::json submodel_to_json(const SubModel& sm) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : sm.layers) layers.push_back(layer_to_json(l));
    auto buffers_json = [](const std::map<std::string, TensorSpec>& buffers) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [name, spec] : buffers) j[name] = spec.dims;
        return j;
    };
    nlohmann::json j = {{"name", sm.model_name + "_rank" + std::to_string(sm.rank)},
                        {"model", sm.model_name},
                        {"rank", sm.rank},
                        {"key", sm.key.canonical_text()},
                        {"layers", layers},
                        {"input_buffers", buffers_json(sm.input_buffers)},
                        {"output_buffers", buffers_json(sm.output_buffers)},
                        {"buffer_sources", sm.buffer_sources},
                        {"owns_input", sm.owns_input},
                        {"owns_output", sm.owns_output}};
    if (sm.owns_input) {
        j["input_layer"] = sm.input_name;
        j["input_shape"] = sm.input_spec.dims;
    }
    if (sm.owns_output) {
        j["output_layer"] = sm.output_name;
        j["output_source"] = sm.output_source;
        j["output_shape"] = sm.output_spec.dims;
    }
    return j;
}

inline SubModel submodel_from_json(const nlohmann::json& j, const PlatformSpec& p) {
    SubModel sm;
    sm.model_name = j.at("model").get<std::string>();
    sm.rank = j.at("rank").get<int>();
    sm.key = parse_resource_key(j.at("key").get<std::string>(), p);
    for (const auto& e : j.at("layers")) sm.layers.push_back(layer_from_json(e));
    auto read_buffers = [&](const char* field, std::map<std::string, TensorSpec>& out) {
        for (auto it = j.at(field).begin(); it != j.at(field).end(); ++it) {
            TensorSpec spec;
            spec.dims = it.value().get<std::vector<std::int64_t>>();
            check_tensor_spec(spec, std::string(field) + "." + it.key());
            out[it.key()] = std::move(spec);
        }
    };
    read_buffers("input_buffers", sm.input_buffers);
    read_buffers("output_buffers", sm.output_buffers);
    sm.buffer_sources = j.at("buffer_sources").get<std::map<std::string, std::string>>();
    sm.owns_input = j.at("owns_input").get<bool>();
    sm.owns_output = j.at("owns_output").get<bool>();
    if (sm.owns_input) {
        sm.input_name = j.at("input_layer").get<std::string>();
        sm.input_spec.dims = j.at("input_shape").get<std::vector<std::int64_t>>();
    }
    if (sm.owns_output) {
        sm.output_name = j.at("output_layer").get<std::string>();
        sm.output_source = j.at("output_source").get<std::string>();
        sm.output_spec.dims = j.at("output_shape").get<std::vector<std::int64_t>>();
    }
    return sm;
}

inline void save_submodel(const SubModel& sm, const std::filesystem::path& json_path,
                          const std::filesystem::path& weights_path) {
    write_file(json_path, submodel_to_json(sm).dump(2) + "\n");
    save_weights(sm.weights, weights_path);
}

inline SubModel load_submodel(const std::filesystem::path& json_path, const std::filesystem::path& weights_path,
                              const PlatformSpec& p) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(json_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(json_path.string() + ": " + e.what());
    }
    SubModel sm = submodel_from_json(j, p);
    sm.weights = load_weights(weights_path);
    return sm;
}

}  // namespace pipecut

#endif
