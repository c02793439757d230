// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_MAPPING_HPP
#define PIPECUT_MAPPING_HPP

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/model.hpp"
#include "pipecut/platform.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

/// Ordered resource-key -> layer-list assignments. Key order in the file
/// defines rank numbering downstream. Input/Output pseudo-layers are never
/// listed; they are co-located by the splitter.
struct MappingSpec {
    struct Assignment {
        ResourceKey key;
        std::vector<std::string> layers;
    };
    std::vector<Assignment> assignments;

    std::size_t num_ranks() const { return assignments.size(); }

    bool operator==(const MappingSpec& o) const {
        if (assignments.size() != o.assignments.size()) return false;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            if (assignments[i].key != o.assignments[i].key) return false;
            if (assignments[i].layers != o.assignments[i].layers) return false;
        }
        return true;
    }
};

/// Every hidden layer in exactly one value list (vertical partitioning),
/// every key valid against the platform.
inline void validate_mapping(const MappingSpec& ms, const Model& m, const PlatformSpec& p) {
    if (ms.assignments.empty()) throw InconsistentMapping("mapping has no key-value pairs");
    std::set<std::string> keys;
    std::set<std::string> assigned;
    const std::string input_name = m.input_layer().name;
    const std::string output_name = m.output_layer().name;
    for (const auto& a : ms.assignments) {
        // Re-derive against the platform so hand-constructed specs are covered too.
        parse_resource_key(a.key.canonical_text(), p);
        if (!keys.insert(a.key.canonical_text()).second)
            throw InconsistentMapping("duplicate key " + a.key.canonical_text());
        if (a.layers.empty())
            throw InconsistentMapping("key " + a.key.canonical_text() + " has an empty layer list");
        for (const auto& layer : a.layers) {
            if (!m.find(layer)) throw UnknownLayer(layer);
            if (layer == input_name || layer == output_name)
                throw ValidationError("pseudo-layer " + layer + " may not be mapped explicitly");
            if (!assigned.insert(layer).second) throw DuplicateAssignment(layer);
        }
    }
    for (const auto& layer : m.hidden_layers())
        if (!assigned.count(layer)) throw UnassignedLayer(layer);
}

inline MappingSpec parse_mapping_text(const std::string& text, const Model& m, const PlatformSpec& p,
                                      const std::string& origin) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(origin + ": mapping must be a JSON object");
    MappingSpec ms;
    for (auto it = j.begin(); it != j.end(); ++it) {
        MappingSpec::Assignment a;
        a.key = parse_resource_key(it.key(), p);
        if (!it.value().is_array()) throw ParseError(origin + ": value of " + it.key() + " must be an array");
        for (const auto& e : it.value()) {
            if (!e.is_string()) throw ParseError(origin + ": layer names must be strings");
            a.layers.push_back(e.get<std::string>());
        }
        ms.assignments.push_back(std::move(a));
    }
    validate_mapping(ms, m, p);
    return ms;
}

inline MappingSpec parse_mapping(const std::filesystem::path& path, const Model& m, const PlatformSpec& p) {
    return parse_mapping_text(read_file(path), m, p, path.filename().string());
}

inline std::string format_mapping(const MappingSpec& ms) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& a : ms.assignments) j[a.key.canonical_text()] = a.layers;
    return j.dump(2) + "\n";
}

inline void save_mapping(const MappingSpec& ms, const std::filesystem::path& path) {
    write_file(path, format_mapping(ms));
}

}  // namespace pipecut

#endif
