// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_PLAN_HPP
#define PIPECUT_PLAN_HPP

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/commgen.hpp"
#include "pipecut/splitter.hpp"

namespace pipecut {

enum class ActionKind {
    RegisterRecv,  // post an asynchronous receive for (buffer, src)
    WaitRecv,      // block until the buffer's data for this iteration arrived
    Compute,       // run one layer
    Send,          // non-blocking transmit of a produced buffer to peers
    WaitSendAll,   // block until all local sends are flushed
    ReadInput,     // bind the model input tensor (rank owning the Input layer)
    WriteOutput,   // emit the model output tensor (rank owning the Output layer)
};

inline const char* action_kind_name(ActionKind k) {
    switch (k) {
        case ActionKind::RegisterRecv: return "RegisterRecv";
        case ActionKind::WaitRecv: return "WaitRecv";
        case ActionKind::Compute: return "Compute";
        case ActionKind::Send: return "Send";
        case ActionKind::WaitSendAll: return "WaitSendAll";
        case ActionKind::ReadInput: return "ReadInput";
        case ActionKind::WriteOutput: return "WriteOutput";
    }
    return "?";
}

inline ActionKind action_kind_from_name(const std::string& s) {
    static const std::map<std::string, ActionKind> table = {
        {"RegisterRecv", ActionKind::RegisterRecv}, {"WaitRecv", ActionKind::WaitRecv},
        {"Compute", ActionKind::Compute},           {"Send", ActionKind::Send},
        {"WaitSendAll", ActionKind::WaitSendAll},   {"ReadInput", ActionKind::ReadInput},
        {"WriteOutput", ActionKind::WriteOutput},
    };
    auto it = table.find(s);
    if (it == table.end()) throw ParseError("unknown plan action kind: " + s);
    return it->second;
}

struct PlanAction {
    ActionKind kind = ActionKind::Compute;
    std::string buffer;   // RegisterRecv / WaitRecv / Send
    int src = -1;         // RegisterRecv
    std::vector<int> to;  // Send
    std::string layer;    // Compute

    bool operator==(const PlanAction& o) const {
        return kind == o.kind && buffer == o.buffer && src == o.src && to == o.to && layer == o.layer;
    }
};

/// Per-rank ordered action list: the portable analog of one generated code
/// block. Receives are registered up-front, waits sit just before the first
/// consumer, sends fire right after their producer, and a messaging plan
/// finishes by flushing its sends.
struct ExecutionPlan {
    int rank = 0;
    int num_threads = 1;
    std::vector<PlanAction> actions;

    bool operator==(const ExecutionPlan& o) const {
        return rank == o.rank && num_threads == o.num_threads && actions == o.actions;
    }
};

inline ExecutionPlan gen_plan(const SubModel& sm, const SenderTable& st, const ReceiverTable& rt) {
    ExecutionPlan plan;
    plan.rank = sm.rank;
    plan.num_threads = sm.key.num_threads();

    const auto& recvs = rt.per_rank.at(static_cast<std::size_t>(sm.rank));
    const auto& sends = st.per_rank.at(static_cast<std::size_t>(sm.rank));

    std::set<std::string> registered;
    for (const auto& r : recvs) {
        plan.actions.push_back(PlanAction{ActionKind::RegisterRecv, r.buffer, r.from, {}, {}});
        registered.insert(r.buffer);
    }
    for (const auto& [buffer, spec] : sm.input_buffers)
        if (!registered.count(buffer))
            throw PlanError("rank " + std::to_string(sm.rank) + " consumes buffer " + buffer +
                            " but the receiver table registers no receive for it");

    // producer (layer or Input pseudo-layer) -> sender-table entries it feeds
    std::map<std::string, std::vector<SenderTable::Entry>> sends_by_producer;
    for (const auto& s : sends) {
        auto it = sm.buffer_sources.find(s.buffer);
        if (it == sm.buffer_sources.end())
            throw PlanError("rank " + std::to_string(sm.rank) + " is scheduled to send buffer " + s.buffer +
                            " but no local layer produces it");
        sends_by_producer[it->second].push_back(s);
    }

    std::set<std::string> waited;
    auto wait_foreign_inputs = [&](const std::vector<std::string>& inputs) {
        for (const auto& in : inputs) {
            if (!sm.input_buffers.count(in) || waited.count(in)) continue;
            plan.actions.push_back(PlanAction{ActionKind::WaitRecv, in, -1, {}, {}});
            waited.insert(in);
        }
    };
    auto send_products_of = [&](const std::string& producer) {
        auto it = sends_by_producer.find(producer);
        if (it == sends_by_producer.end()) return;
        for (const auto& s : it->second)
            plan.actions.push_back(PlanAction{ActionKind::Send, s.buffer, -1, s.to, {}});
    };

    if (sm.owns_input) {
        plan.actions.push_back(PlanAction{ActionKind::ReadInput, {}, -1, {}, {}});
        send_products_of(sm.input_name);
    }

    for (const auto& l : sm.layers) {
        wait_foreign_inputs(l.inputs);
        plan.actions.push_back(PlanAction{ActionKind::Compute, {}, -1, {}, l.name});
        send_products_of(l.name);
    }

    if (sm.owns_output) {
        wait_foreign_inputs({sm.output_source});
        plan.actions.push_back(PlanAction{ActionKind::WriteOutput, {}, -1, {}, {}});
    }

    if (!sends.empty()) plan.actions.push_back(PlanAction{ActionKind::WaitSendAll, {}, -1, {}, {}});
    return plan;
}

/// Single independent pass asserting plan safety against its sub-model:
/// registrations form the plan prefix and cover every input buffer, every
/// consumed foreign buffer is waited before its first consumer, every send
/// follows its producer, every local layer is computed, and a plan with
/// sends ends with WaitSendAll. Throws PlanError on the first violation.
inline void check_plan(const ExecutionPlan& plan, const SubModel& sm) {
    std::set<std::string> registered, waited, available;
    bool prefix_done = false;
    bool saw_send = false;
    std::size_t wait_send_pos = plan.actions.size();

    auto fail = [&](std::size_t idx, const std::string& msg) -> PlanError {
        return PlanError("rank " + std::to_string(plan.rank) + " action " + std::to_string(idx) + ": " + msg);
    };

    if (plan.num_threads < 1) throw PlanError("num_threads must be >= 1");

    for (std::size_t i = 0; i < plan.actions.size(); ++i) {
        const PlanAction& a = plan.actions[i];
        switch (a.kind) {
            case ActionKind::RegisterRecv:
                if (prefix_done) throw fail(i, "RegisterRecv after the register prefix");
                if (!sm.input_buffers.count(a.buffer)) throw fail(i, "registers unknown buffer " + a.buffer);
                if (!registered.insert(a.buffer).second) throw fail(i, "duplicate RegisterRecv " + a.buffer);
                break;
            case ActionKind::WaitRecv:
                prefix_done = true;
                if (!registered.count(a.buffer)) throw fail(i, "WaitRecv " + a.buffer + " without RegisterRecv");
                if (!waited.insert(a.buffer).second) throw fail(i, "duplicate WaitRecv " + a.buffer);
                available.insert(a.buffer);
                break;
            case ActionKind::Compute: {
                prefix_done = true;
                const Layer* l = sm.find(a.layer);
                if (!l) throw fail(i, "Compute of unknown layer " + a.layer);
                if (available.count(a.layer)) throw fail(i, "layer " + a.layer + " computed twice");
                for (const auto& in : l->inputs)
                    if (!available.count(in))
                        throw fail(i, a.layer + " consumes " + in + " before it is available");
                available.insert(a.layer);
                break;
            }
            case ActionKind::Send: {
                prefix_done = true;
                saw_send = true;
                auto it = sm.buffer_sources.find(a.buffer);
                if (it == sm.buffer_sources.end()) throw fail(i, "Send of unknown buffer " + a.buffer);
                if (!available.count(it->second))
                    throw fail(i, "Send " + a.buffer + " before its producer " + it->second + " ran");
                if (a.to.empty()) throw fail(i, "Send " + a.buffer + " with no destinations");
                for (int dst : a.to)
                    if (dst == plan.rank) throw fail(i, "Send " + a.buffer + " targets its own rank");
                break;
            }
            case ActionKind::ReadInput:
                prefix_done = true;
                if (!sm.owns_input) throw fail(i, "ReadInput on a rank that does not own the Input layer");
                available.insert(sm.input_name);
                break;
            case ActionKind::WriteOutput:
                prefix_done = true;
                if (!sm.owns_output) throw fail(i, "WriteOutput on a rank that does not own the Output layer");
                if (!available.count(sm.output_source))
                    throw fail(i, "WriteOutput consumes " + sm.output_source + " before it is available");
                break;
            case ActionKind::WaitSendAll:
                prefix_done = true;
                wait_send_pos = i;
                break;
        }
    }

    for (const auto& [buffer, spec] : sm.input_buffers)
        if (!registered.count(buffer)) throw PlanError("buffer " + buffer + " is never registered");
    for (const auto& l : sm.layers)
        if (!available.count(l.name)) throw PlanError("layer " + l.name + " is never computed");
    if (sm.owns_input && !available.count(sm.input_name)) throw PlanError("plan never reads the model input");
    if (saw_send && wait_send_pos != plan.actions.size() - 1)
        throw PlanError("a plan with sends must end with WaitSendAll");
}

// --- plan.json ---

inline nlohmann::json plan_to_json(const ExecutionPlan& plan) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : plan.actions) {
        nlohmann::json e = {{"kind", action_kind_name(a.kind)}};
        switch (a.kind) {
            case ActionKind::RegisterRecv:
                e["buffer"] = a.buffer;
                e["src"] = a.src;
                break;
            case ActionKind::WaitRecv:
                e["buffer"] = a.buffer;
                break;
            case ActionKind::Compute:
                e["layer"] = a.layer;
                break;
            case ActionKind::Send:
                e["buffer"] = a.buffer;
                e["to"] = a.to;
                break;
            default:
                break;
        }
        actions.push_back(std::move(e));
    }
    return {{"rank", plan.rank}, {"num_threads", plan.num_threads}, {"actions", actions}};
}

inline ExecutionPlan plan_from_json(const nlohmann::json& j) {
    ExecutionPlan plan;
    plan.rank = j.at("rank").get<int>();
    plan.num_threads = j.at("num_threads").get<int>();
    for (const auto& e : j.at("actions")) {
        PlanAction a;
        a.kind = action_kind_from_name(e.at("kind").get<std::string>());
        switch (a.kind) {
            case ActionKind::RegisterRecv:
                a.buffer = e.at("buffer").get<std::string>();
                a.src = e.at("src").get<int>();
                break;
            case ActionKind::WaitRecv:
                a.buffer = e.at("buffer").get<std::string>();
                break;
            case ActionKind::Compute:
                a.layer = e.at("layer").get<std::string>();
                break;
            case ActionKind::Send:
                a.buffer = e.at("buffer").get<std::string>();
                a.to = e.at("to").get<std::vector<int>>();
                break;
            default:
                break;
        }
        plan.actions.push_back(std::move(a));
    }
    return plan;
}

inline void save_plan(const ExecutionPlan& plan, const std::filesystem::path& path) {
    write_file(path, plan_to_json(plan).dump(2) + "\n");
}

inline ExecutionPlan load_plan(const std::filesystem::path& path) {
    try {
        return plan_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// Renders a plan as pseudo C++ resembling the generated code blocks, for
/// documentation and debugging.
inline std::string render_pseudocode(const ExecutionPlan& plan) {
    std::ostringstream out;
    out << "if (rank == " << plan.rank << ") {\n";
    out << "    int num_threads = " << plan.num_threads << ";\n";
    for (const auto& a : plan.actions) {
        switch (a.kind) {
            case ActionKind::RegisterRecv:
                out << "    irecv(" << a.buffer << ", /*src=*/" << a.src << ");\n";
                break;
            case ActionKind::WaitRecv:
                out << "    wait(" << a.buffer << ");\n";
                break;
            case ActionKind::Compute:
                out << "    " << a.layer << " = execute_layer(\"" << a.layer << "\", num_threads);\n";
                break;
            case ActionKind::Send:
                out << "    isend(" << a.buffer << ", /*dst=*/{" << join(a.to, ",") << "});\n";
                break;
            case ActionKind::WaitSendAll:
                out << "    wait_all_sends();\n";
                break;
            case ActionKind::ReadInput:
                out << "    input = read_image();\n";
                break;
            case ActionKind::WriteOutput:
                out << "    write_output();\n";
                break;
        }
    }
    out << "}\n";
    return out.str();
}

}  // namespace pipecut

#endif
