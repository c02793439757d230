// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_COMMGEN_HPP
#define PIPECUT_COMMGEN_HPP

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/mapping.hpp"
#include "pipecut/splitter.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

/// Dual schedules wiring the sub-models together: per rank, which buffers it
/// transmits to which peers and which it expects from whom.
struct SenderTable {
    struct Entry {
        std::string buffer;
        std::vector<int> to;  // ascending, excludes the sender
        bool operator==(const Entry& o) const { return buffer == o.buffer && to == o.to; }
    };
    std::vector<std::vector<Entry>> per_rank;

    bool operator==(const SenderTable& o) const { return per_rank == o.per_rank; }
};

struct ReceiverTable {
    struct Entry {
        std::string buffer;
        int from = 0;
        bool operator==(const Entry& o) const { return buffer == o.buffer && from == o.from; }
    };
    std::vector<std::vector<Entry>> per_rank;

    bool operator==(const ReceiverTable& o) const { return per_rank == o.per_rank; }
};

/// Sender and receiver tables from the cut-edge list. The tables are dual:
/// (s, buf, d) appears in the sender table iff (d, buf, s) appears in the
/// receiver table. Entries keep buffer creation order (Buff1, Buff2, ...).
inline std::pair<SenderTable, ReceiverTable> gen_comm_tables(const std::vector<CutEdge>& cuts,
                                                             std::size_t num_ranks) {
    SenderTable st;
    ReceiverTable rt;
    st.per_rank.resize(num_ranks);
    rt.per_rank.resize(num_ranks);
    for (const auto& cut : cuts) {
        SenderTable::Entry send{cut.buffer, cut.dst_ranks()};
        st.per_rank.at(static_cast<std::size_t>(cut.src_rank)).push_back(std::move(send));
        for (int dst : cut.dst_ranks())
            rt.per_rank.at(static_cast<std::size_t>(dst)).push_back(ReceiverTable::Entry{cut.buffer, cut.src_rank});
    }
    return {std::move(st), std::move(rt)};
}

/// Placement table binding each rank to a device and its core slots or GPU.
struct Rankfile {
    struct Entry {
        std::string device;
        bool gpu = false;
        std::set<int> slots;
        bool operator==(const Entry& o) const { return device == o.device && gpu == o.gpu && slots == o.slots; }
    };
    std::vector<Entry> entries;

    bool operator==(const Rankfile& o) const { return entries == o.entries; }
};

inline Rankfile gen_rankfile(const MappingSpec& ms) {
    Rankfile rf;
    for (const auto& a : ms.assignments) {
        Rankfile::Entry e;
        e.device = a.key.device;
        e.gpu = a.key.is_gpu();
        if (!e.gpu) e.slots = a.key.slots;
        rf.entries.push_back(std::move(e));
    }
    return rf;
}

// rankfile.txt: `rank <i>=<device> slot=<a>[,<b>...]` or `slot=gpu`
inline std::string format_rankfile(const Rankfile& rf) {
    std::ostringstream out;
    for (std::size_t i = 0; i < rf.entries.size(); ++i) {
        const auto& e = rf.entries[i];
        out << "rank " << i << "=" << e.device << " slot=";
        if (e.gpu)
            out << "gpu";
        else
            out << join(e.slots, ",");
        out << "\n";
    }
    return out.str();
}

inline Rankfile parse_rankfile_text(const std::string& text, const std::string& origin) {
    Rankfile rf;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream tokens(line);
        std::string word, spec, slot_field;
        if (!(tokens >> word >> spec >> slot_field) || word != "rank")
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'rank <i>=<device> slot=...'");
        auto eq = spec.find('=');
        if (eq == std::string::npos) throw ParseError(origin + ":" + std::to_string(lineno) + ": missing '='");
        int rank = std::stoi(spec.substr(0, eq));
        if (rank != static_cast<int>(rf.entries.size()))
            throw ParseError(origin + ":" + std::to_string(lineno) + ": ranks must be consecutive from 0");
        Rankfile::Entry e;
        e.device = spec.substr(eq + 1);
        if (slot_field.rfind("slot=", 0) != 0)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": missing slot=");
        std::string slots = slot_field.substr(5);
        if (slots == "gpu") {
            e.gpu = true;
        } else {
            std::istringstream ss(slots);
            std::string tok;
            while (std::getline(ss, tok, ',')) e.slots.insert(std::stoi(tok));
            if (e.slots.empty()) throw ParseError(origin + ":" + std::to_string(lineno) + ": empty slot list");
        }
        rf.entries.push_back(std::move(e));
    }
    if (rf.entries.empty()) throw ParseError(origin + ": empty rankfile");
    return rf;
}

// sender.json: [{"rank": i, "sends": [{"buffer": name, "to": [ranks]}]}]
inline nlohmann::json sender_table_to_json(const SenderTable& st) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t rank = 0; rank < st.per_rank.size(); ++rank) {
        nlohmann::json sends = nlohmann::json::array();
        for (const auto& e : st.per_rank[rank]) sends.push_back({{"buffer", e.buffer}, {"to", e.to}});
        j.push_back({{"rank", rank}, {"sends", sends}});
    }
    return j;
}

inline SenderTable sender_table_from_json(const nlohmann::json& j) {
    SenderTable st;
    st.per_rank.resize(j.size());
    for (const auto& row : j) {
        auto rank = row.at("rank").get<std::size_t>();
        for (const auto& s : row.at("sends"))
            st.per_rank.at(rank).push_back(
                SenderTable::Entry{s.at("buffer").get<std::string>(), s.at("to").get<std::vector<int>>()});
    }
    return st;
}

// receiver.json: [{"rank": i, "recvs": [{"buffer": name, "from": rank}]}]
inline nlohmann::json receiver_table_to_json(const ReceiverTable& rt) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t rank = 0; rank < rt.per_rank.size(); ++rank) {
        nlohmann::json recvs = nlohmann::json::array();
        for (const auto& e : rt.per_rank[rank]) recvs.push_back({{"buffer", e.buffer}, {"from", e.from}});
        j.push_back({{"rank", rank}, {"recvs", recvs}});
    }
    return j;
}

inline ReceiverTable receiver_table_from_json(const nlohmann::json& j) {
    ReceiverTable rt;
    rt.per_rank.resize(j.size());
    for (const auto& row : j) {
        auto rank = row.at("rank").get<std::size_t>();
        for (const auto& r : row.at("recvs"))
            rt.per_rank.at(rank).push_back(
                ReceiverTable::Entry{r.at("buffer").get<std::string>(), r.at("from").get<int>()});
    }
    return rt;
}

}  // namespace pipecut

#endif
