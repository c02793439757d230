// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_MODEL_IO_HPP
#define PIPECUT_MODEL_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/model.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

// Graph file: {"name": str, "layers": [{"name", "op", "attrs": {...},
//              "inputs": [...], "weights": [...]}]}
// Weights file: magic "ADCE", u32 version=1, u32 entry count; per entry
//   u16 name length, name bytes, u8 rank, rank x u32 dims, float32 payload.
// All integers little-endian.

inline constexpr char kWeightsMagic[4] = {'A', 'D', 'C', 'E'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

inline nlohmann::json attr_to_json(const AttrValue& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (const auto* f = std::get_if<double>(&v)) return *f;
    return std::get<std::vector<std::int64_t>>(v);
}

inline AttrValue attr_from_json(const nlohmann::json& j, const std::string& where) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_array()) {
        std::vector<std::int64_t> out;
        for (const auto& e : j) {
            if (!e.is_number_integer()) throw ParseError(where + ": attr list elements must be integers");
            out.push_back(e.get<std::int64_t>());
        }
        return out;
    }
    throw ParseError(where + ": attr must be a number or an integer list");
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (!e.is_string()) throw ParseError(where + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline nlohmann::json layer_to_json(const Layer& l) {
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [key, value] : l.attrs) attrs[key] = detail::attr_to_json(value);
    return {{"name", l.name},
            {"op", op_name(l.op)},
            {"attrs", attrs},
            {"inputs", l.inputs},
            {"weights", l.weight_refs}};
}

inline Layer layer_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("layer entry must be an object");
    Layer l;
    if (!j.contains("name") || !j["name"].is_string()) throw ParseError("layer missing string field 'name'");
    l.name = j["name"].get<std::string>();
    if (!j.contains("op") || !j["op"].is_string()) throw ParseError("layer " + l.name + " missing 'op'");
    l.op = op_from_name(j["op"].get<std::string>());
    if (j.contains("attrs")) {
        if (!j["attrs"].is_object()) throw ParseError("layer " + l.name + ": 'attrs' must be an object");
        for (auto it = j["attrs"].begin(); it != j["attrs"].end(); ++it)
            l.attrs[it.key()] = detail::attr_from_json(it.value(), l.name + ".attrs." + it.key());
    }
    if (j.contains("inputs")) l.inputs = detail::string_list(j["inputs"], l.name + ".inputs");
    if (j.contains("weights")) l.weight_refs = detail::string_list(j["weights"], l.name + ".weights");
    return l;
}

inline nlohmann::json graph_to_json(const Model& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) layers.push_back(layer_to_json(l));
    return {{"name", m.name}, {"layers", layers}};
}

inline void graph_from_json(const nlohmann::json& j, Model& m) {
    if (!j.is_object()) throw ParseError("graph file must contain a JSON object");
    if (!j.contains("name") || !j["name"].is_string()) throw ParseError("graph missing string field 'name'");
    m.name = j["name"].get<std::string>();
    if (!j.contains("layers") || !j["layers"].is_array()) throw ParseError("graph missing array field 'layers'");
    for (const auto& e : j["layers"]) m.layers.push_back(layer_from_json(e));
}

inline std::string serialize_weights(const WeightStore& ws) {
    std::string out;
    out.append(kWeightsMagic, 4);
    put_u32(out, kWeightsVersion);
    put_u32(out, static_cast<std::uint32_t>(ws.entries().size()));
    for (const auto& e : ws.entries()) {
        if (e.name.size() > 0xffff) throw IoError("weight name too long: " + e.name);
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.append(e.name);
        out.push_back(static_cast<char>(e.spec.dims.size()));
        for (std::int64_t d : e.spec.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : e.data) put_f32(out, v);
    }
    return out;
}

inline WeightStore parse_weights(const std::string& bytes, const std::string& origin) {
    ByteReader r(bytes);
    if (r.remaining() < 12 || r.bytes(4) != std::string(kWeightsMagic, 4))
        throw ParseError(origin + ": bad weights magic");
    std::uint32_t version = r.u32();
    if (version != kWeightsVersion)
        throw ParseError(origin + ": unsupported weights version " + std::to_string(version));
    std::uint32_t count = r.u32();
    WeightStore ws;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t name_len = r.u16();
        std::string name = r.bytes(name_len);
        std::uint8_t rank = r.u8();
        TensorSpec spec;
        for (std::uint8_t d = 0; d < rank; ++d) spec.dims.push_back(static_cast<std::int64_t>(r.u32()));
        check_tensor_spec(spec, origin + ": weight " + name);
        auto n = static_cast<std::size_t>(spec.elements());
        if (r.remaining() < n * 4) throw ParseError(origin + ": truncated payload for weight " + name);
        std::vector<float> data(n);
        for (std::size_t k = 0; k < n; ++k) data[k] = r.f32();
        ws.add(name, std::move(spec), std::move(data));
    }
    if (r.remaining() != 0) throw ParseError(origin + ": trailing bytes after last weight entry");
    return ws;
}

inline void save_weights(const WeightStore& ws, const std::filesystem::path& path) {
    write_file(path, serialize_weights(ws));
}

inline WeightStore load_weights(const std::filesystem::path& path) {
    return parse_weights(read_file(path), path.filename().string());
}

inline Model load_model(const std::filesystem::path& model_path, const std::filesystem::path& weights_path) {
    Model m;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(model_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(model_path.string() + ": " + e.what());
    }
    graph_from_json(j, m);
    m.weights = load_weights(weights_path);
    validate_model(m);
    return m;
}

inline void save_model(const Model& m, const std::filesystem::path& model_path,
                       const std::filesystem::path& weights_path) {
    write_file(model_path, graph_to_json(m).dump(2) + "\n");
    save_weights(m.weights, weights_path);
}

}  // namespace pipecut

#endif
