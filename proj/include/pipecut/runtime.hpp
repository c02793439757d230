// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_RUNTIME_HPP
#define PIPECUT_RUNTIME_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipecut/config.hpp"
#include "pipecut/kernels.hpp"
#include "pipecut/plan.hpp"
#include "pipecut/splitter.hpp"
#include "pipecut/wire.hpp"

namespace pipecut {

/// host:port per rank for the loopback mesh.
struct RankEndpoints {
    std::map<int, std::string> endpoints;

    std::pair<std::string, int> host_port(int rank) const {
        auto it = endpoints.find(rank);
        if (it == endpoints.end()) throw ValidationError("no endpoint for rank " + std::to_string(rank));
        auto colon = it->second.rfind(':');
        if (colon == std::string::npos) throw ParseError("bad endpoint '" + it->second + "'");
        return {it->second.substr(0, colon), std::stoi(it->second.substr(colon + 1))};
    }
};

inline nlohmann::json endpoints_to_json(const RankEndpoints& ep) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [rank, hp] : ep.endpoints) j[std::to_string(rank)] = hp;
    return j;
}

inline RankEndpoints endpoints_from_json(const nlohmann::json& j) {
    RankEndpoints ep;
    for (auto it = j.begin(); it != j.end(); ++it) ep.endpoints[std::stoi(it.key())] = it.value().get<std::string>();
    return ep;
}

inline void save_endpoints(const RankEndpoints& ep, const std::filesystem::path& path) {
    write_file_atomic(path, endpoints_to_json(ep).dump(2) + "\n");
}

inline RankEndpoints load_endpoints(const std::filesystem::path& path) {
    try {
        return endpoints_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

namespace detail {

using Clock = std::chrono::steady_clock;

/// Buffer-keyed mailbox the receiver threads park inbound tensors in.
/// Waiters block until their (buffer, seq) slot fills, the owning peer's
/// channel closes, an error is recorded, or the deadline passes.
class Mailbox {
public:
    void register_src(std::uint32_t buffer_id, int src) {
        std::lock_guard<std::mutex> lock(mu_);
        src_of_[buffer_id] = src;
    }

    void put(std::uint32_t buffer_id, std::uint32_t seq, Tensor tensor) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            slots_.emplace(std::make_pair(buffer_id, seq), std::move(tensor));
        }
        cv_.notify_all();
    }

    void mark_closed(int src) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            closed_.insert(src);
        }
        cv_.notify_all();
    }

    void poison(std::exception_ptr e) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (!error_) error_ = e;
        }
        cv_.notify_all();
    }

    Tensor wait(const std::string& buffer, std::uint32_t buffer_id, std::uint32_t seq, Clock::time_point deadline) {
        std::unique_lock<std::mutex> lock(mu_);
        auto key = std::make_pair(buffer_id, seq);
        auto ready = [&] {
            return slots_.count(key) || error_ ||
                   (src_of_.count(buffer_id) && closed_.count(src_of_.at(buffer_id)));
        };
        if (!cv_.wait_until(lock, deadline, ready))
            throw TimeoutError("waiting for buffer " + buffer + " seq " + std::to_string(seq) +
                               " (suspected deadlock)");
        auto it = slots_.find(key);
        if (it != slots_.end()) {
            Tensor t = std::move(it->second);
            slots_.erase(it);
            return t;
        }
        if (error_) std::rethrow_exception(error_);
        throw PeerUnreachable("rank " + std::to_string(src_of_.at(buffer_id)) + " closed before delivering " +
                              buffer + " seq " + std::to_string(seq));
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::pair<std::uint32_t, std::uint32_t>, Tensor> slots_;
    std::map<std::uint32_t, int> src_of_;
    std::set<int> closed_;
    std::exception_ptr error_;
};

/// One outbound connection with a dedicated writer thread: Send enqueues a
/// frame and returns immediately; WaitSendAll blocks until the queue is
/// flushed to the kernel.
class SenderChannel {
public:
    SenderChannel(int dst, std::string host, int port, Clock::time_point connect_deadline)
        : dst_(dst), host_(std::move(host)), port_(port), connect_deadline_(connect_deadline) {
        thread_ = std::thread([this] { writer_loop(); });
    }

    ~SenderChannel() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        sock_.close();  // wakes a blocked send
        thread_.join();
    }

    void enqueue(std::string frame) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (!error_) queue_.push_back(std::move(frame));
        }
        cv_.notify_all();
    }

    void wait_drained(Clock::time_point deadline) {
        std::unique_lock<std::mutex> lock(mu_);
        bool ok = drained_cv_.wait_until(lock, deadline, [&] { return error_ || (queue_.empty() && !busy_); });
        if (error_) std::rethrow_exception(error_);
        if (!ok) throw TimeoutError("flushing sends to rank " + std::to_string(dst_));
    }

private:
    void writer_loop() {
        try {
            sock_ = tcp_connect(host_, port_, connect_deadline_);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu_);
            error_ = std::current_exception();
            drained_cv_.notify_all();
            return;
        }
        while (true) {
            std::string frame;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
                if (queue_.empty()) return;  // stop after drain
                frame = std::move(queue_.front());
                queue_.pop_front();
                busy_ = true;
            }
            try {
                write_all(sock_.fd(), frame.data(), frame.size());
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu_);
                error_ = std::current_exception();
                busy_ = false;
                queue_.clear();
                drained_cv_.notify_all();
                return;
            }
            std::lock_guard<std::mutex> lock(mu_);
            busy_ = false;
            if (queue_.empty()) drained_cv_.notify_all();
        }
    }

    int dst_;
    std::string host_;
    int port_;
    Clock::time_point connect_deadline_;
    Socket sock_;
    std::thread thread_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable drained_cv_;
    std::deque<std::string> queue_;
    bool busy_ = false;
    bool stop_ = false;
    std::exception_ptr error_;
};

/// Inbound side: an accept loop plus one reader thread per connection,
/// parking frames into the mailbox.
class Receiver {
public:
    Receiver(int rank, Socket listener, Mailbox& mailbox) : rank_(rank), listener_(std::move(listener)), mailbox_(mailbox) {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    ~Receiver() {
        listener_.close();  // wakes accept()
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (auto& conn : conns_) ::shutdown(conn->sock.fd(), SHUT_RDWR);
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        for (auto& conn : conns_)
            if (conn->thread.joinable()) conn->thread.join();
    }

private:
    struct Conn {
        Socket sock;
        std::thread thread;
    };

    void accept_loop() {
        while (true) {
            int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                return;  // listener closed
            }
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            auto conn = std::make_unique<Conn>();
            conn->sock = Socket(fd);
            Conn* raw = conn.get();
            conn->thread = std::thread([this, raw] { reader_loop(raw); });
            std::lock_guard<std::mutex> lock(mu_);
            conns_.push_back(std::move(conn));
        }
    }

    void reader_loop(Conn* conn) {
        int attributed_src = -1;
        try {
            Message msg;
            while (read_frame(conn->sock.fd(), msg)) {
                if (static_cast<int>(msg.dst) != rank_)
                    throw ProtocolError("frame for rank " + std::to_string(msg.dst) + " arrived at rank " +
                                        std::to_string(rank_));
                attributed_src = static_cast<int>(msg.src);
                mailbox_.put(msg.buffer_id, msg.seq, Tensor(msg.spec, std::move(msg.payload)));
                msg.payload = {};
            }
            if (attributed_src >= 0) mailbox_.mark_closed(attributed_src);
        } catch (...) {
            mailbox_.poison(std::current_exception());
        }
    }

    int rank_;
    Socket listener_;
    Mailbox& mailbox_;
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<std::unique_ptr<Conn>> conns_;
};

inline std::uint64_t read_vm_hwm_bytes() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            std::istringstream ss(line.substr(6));
            std::uint64_t kb = 0;
            ss >> kb;
            return kb * 1024;
        }
    }
    return 0;
}

}  // namespace detail

struct RankStats {
    int rank = 0;
    int iterations = 0;
    double wall_ms = 0;
    std::int64_t start_epoch_us = 0;
    std::int64_t end_epoch_us = 0;
    std::uint64_t peak_mem_estimate_bytes = 0;
    std::uint64_t rss_peak_bytes = 0;
};

struct RankResult {
    std::vector<Tensor> outputs;  // one per iteration when this rank owns the Output layer
    RankStats stats;
};

struct RunOptions {
    int repeat = 1;
    int timeout_ms = 30000;
    int listener_fd = -1;  // pre-bound listening socket; -1 binds from the endpoints entry
};

/// Portable per-rank peak-memory estimate: sub-model weights (twice for
/// GPU-kind ranks, which keep a host and an engine copy), resident
/// communication buffers, plus the fixed runtime overhead.
inline std::uint64_t submodel_memory_estimate(const SubModel& sm) {
    std::uint64_t weights = sm.weights.total_bytes() * (sm.key.is_gpu() ? 2 : 1);
    return weights + sm.buffer_bytes() + kRuntimeOverheadBytes;
}

/// Executes one rank's plan with message-passing semantics: registered
/// receives are asynchronous, WaitRecv blocks for data, Send returns
/// immediately, WaitSendAll flushes. Runs the plan `repeat` times with
/// distinct sequence numbers, pipelining across iterations.
inline RankResult run_rank(const ExecutionPlan& plan, const SubModel& sm, const RankEndpoints& endpoints,
                           const std::optional<Tensor>& input, const RunOptions& opts = {}) {
    check_plan(plan, sm);
    if (opts.repeat < 1) throw ValidationError("repeat must be >= 1");

    if (sm.owns_input) {
        if (!input) throw ValidationError("rank " + std::to_string(sm.rank) + " owns the model input; none given");
        if (input->spec != sm.input_spec)
            throw ShapeError("input tensor is " + input->spec.str() + ", sub-model expects " +
                             sm.input_spec.str());
    }

    const auto deadline = detail::Clock::now() + std::chrono::milliseconds(opts.timeout_ms);

    bool needs_recv = false, needs_send = false;
    for (const auto& a : plan.actions) {
        if (a.kind == ActionKind::RegisterRecv) needs_recv = true;
        if (a.kind == ActionKind::Send) needs_send = true;
    }

    detail::Mailbox mailbox;
    std::unique_ptr<detail::Receiver> receiver;
    if (needs_recv) {
        Socket listener;
        if (opts.listener_fd >= 0) {
            listener = Socket(opts.listener_fd);
        } else {
            auto [host, port] = endpoints.host_port(sm.rank);
            auto [sock, actual] = tcp_listen(port);
            listener = std::move(sock);
        }
        receiver = std::make_unique<detail::Receiver>(sm.rank, std::move(listener), mailbox);
    }

    std::map<int, std::unique_ptr<detail::SenderChannel>> channels;
    auto channel_for = [&](int dst) -> detail::SenderChannel& {
        auto it = channels.find(dst);
        if (it == channels.end()) {
            auto [host, port] = endpoints.host_port(dst);
            it = channels.emplace(dst, std::make_unique<detail::SenderChannel>(dst, host, port, deadline)).first;
        }
        return *it->second;
    };
    (void)needs_send;

    ThreadPool pool(plan.num_threads);
    RankResult result;
    result.stats.rank = sm.rank;
    result.stats.iterations = opts.repeat;

    const auto t0 = detail::Clock::now();
    result.stats.start_epoch_us =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();

    for (int iter = 0; iter < opts.repeat; ++iter) {
        const auto seq = static_cast<std::uint32_t>(iter);
        std::map<std::string, Tensor> values;
        for (const auto& a : plan.actions) {
            switch (a.kind) {
                case ActionKind::RegisterRecv:
                    if (iter == 0) mailbox.register_src(buffer_id_of(a.buffer), a.src);
                    break;
                case ActionKind::WaitRecv: {
                    Tensor t = mailbox.wait(a.buffer, buffer_id_of(a.buffer), seq, deadline);
                    const TensorSpec& expected = sm.input_buffers.at(a.buffer);
                    if (t.spec != expected)
                        throw ProtocolError("buffer " + a.buffer + " arrived as " + t.spec.str() +
                                            ", expected " + expected.str());
                    values[a.buffer] = std::move(t);
                    break;
                }
                case ActionKind::Compute: {
                    const Layer& l = *sm.find(a.layer);
                    std::vector<const Tensor*> ins;
                    ins.reserve(l.inputs.size());
                    for (const auto& src : l.inputs) ins.push_back(&values.at(src));
                    values[l.name] = execute_layer(l, ins, sm.weights, &pool);
                    break;
                }
                case ActionKind::Send: {
                    const Tensor& t = values.at(sm.buffer_sources.at(a.buffer));
                    Message msg;
                    msg.src = static_cast<std::uint32_t>(sm.rank);
                    msg.buffer_id = buffer_id_of(a.buffer);
                    msg.seq = seq;
                    msg.spec = t.spec;
                    msg.payload = t.data;
                    for (int dst : a.to) {
                        msg.dst = static_cast<std::uint32_t>(dst);
                        channel_for(dst).enqueue(encode_frame(msg));
                    }
                    break;
                }
                case ActionKind::WaitSendAll:
                    for (auto& [dst, channel] : channels) channel->wait_drained(deadline);
                    break;
                case ActionKind::ReadInput:
                    values[sm.input_name] = *input;
                    break;
                case ActionKind::WriteOutput:
                    result.outputs.push_back(values.at(sm.output_source));
                    break;
            }
        }
    }

    result.stats.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(detail::Clock::now() - t0).count();
    result.stats.end_epoch_us =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    result.stats.peak_mem_estimate_bytes = submodel_memory_estimate(sm);
    result.stats.rss_peak_bytes = detail::read_vm_hwm_bytes();
    return result;
}

}  // namespace pipecut

#endif
