// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_WIRE_HPP
#define PIPECUT_WIRE_HPP

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include "pipecut/errors.hpp"
#include "pipecut/tensor.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

// Wire frame: magic "ADCM", u32 version=1, u32 src, u32 dst, u32 buffer id,
// u32 sequence number, u8 rank(dims), dims as u32 LE, u64 payload length,
// payload float32 LE.

inline constexpr char kWireMagic[4] = {'A', 'D', 'C', 'M'};
inline constexpr std::uint32_t kWireVersion = 1;

struct Message {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t buffer_id = 0;
    std::uint32_t seq = 0;
    TensorSpec spec;
    std::vector<float> payload;
};

/// Buffer names are Buff<n>; the wire carries the numeric id. Other names
/// fall back to a name hash (documented limitation: hand-written buffer
/// names must not collide modulo 2^32).
inline std::uint32_t buffer_id_of(const std::string& name) {
    if (name.rfind("Buff", 0) == 0 && name.size() > 4) {
        bool digits = true;
        for (std::size_t i = 4; i < name.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
        if (digits) return static_cast<std::uint32_t>(std::stoul(name.substr(4)));
    }
    return static_cast<std::uint32_t>(fnv1a64(name) & 0xffffffffu);
}

inline std::string encode_frame(const Message& msg) {
    std::string out;
    out.reserve(40 + msg.payload.size() * 4);
    out.append(kWireMagic, 4);
    put_u32(out, kWireVersion);
    put_u32(out, msg.src);
    put_u32(out, msg.dst);
    put_u32(out, msg.buffer_id);
    put_u32(out, msg.seq);
    out.push_back(static_cast<char>(msg.spec.dims.size()));
    for (std::int64_t d : msg.spec.dims) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, static_cast<std::uint64_t>(msg.payload.size()) * 4);
    const char* bytes = reinterpret_cast<const char*>(msg.payload.data());
    out.append(bytes, msg.payload.size() * 4);  // host is little-endian; format is LE
    return out;
}

// --- minimal TCP plumbing over loopback ---

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

/// Listening socket bound to 127.0.0.1:<port>; port 0 picks a free port.
/// Returns the socket and the actual port.
inline std::pair<Socket, int> tcp_listen(int port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw IoError("socket(): " + std::string(std::strerror(errno)));
    Socket s(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw IoError("bind(127.0.0.1:" + std::to_string(port) + "): " + std::strerror(errno));
    if (::listen(fd, 64) != 0) throw IoError("listen(): " + std::string(std::strerror(errno)));
    socklen_t len = sizeof(addr);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        throw IoError("getsockname(): " + std::string(std::strerror(errno)));
    return {std::move(s), ntohs(addr.sin_port)};
}

/// Connects to host:port, retrying until the deadline (the peer's listener
/// may come up later). Throws PeerUnreachable when the deadline passes.
inline Socket tcp_connect(const std::string& host, int port,
                          std::chrono::steady_clock::time_point deadline) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw IoError("bad host address: " + host);

    int delay_ms = 2;
    while (true) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw IoError("socket(): " + std::string(std::strerror(errno)));
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return Socket(fd);
        }
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline)
            throw PeerUnreachable("cannot connect to " + host + ":" + std::to_string(port));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        if (delay_ms < 50) delay_ms *= 2;
    }
}

/// Writes the whole buffer; MSG_NOSIGNAL so a dead peer surfaces as an error
/// rather than SIGPIPE.
inline void write_all(int fd, const char* data, std::size_t size) {
    std::size_t sent = 0;
    while (sent < size) {
        ssize_t n = ::send(fd, data + sent, size - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw PeerUnreachable("send(): " + std::string(std::strerror(errno)));
        }
        sent += static_cast<std::size_t>(n);
    }
}

/// Reads exactly size bytes; returns false on a clean EOF at a frame
/// boundary (start==true), throws mid-frame.
inline bool read_exact(int fd, char* data, std::size_t size, bool at_frame_boundary) {
    std::size_t got = 0;
    while (got < size) {
        ssize_t n = ::read(fd, data + got, size - got);
        if (n == 0) {
            if (got == 0 && at_frame_boundary) return false;
            throw ProtocolError("connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (got == 0 && at_frame_boundary && (errno == ECONNRESET || errno == EPIPE)) return false;
            throw PeerUnreachable("read(): " + std::string(std::strerror(errno)));
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

/// Reads one frame; returns false on clean EOF before a new frame starts.
inline bool read_frame(int fd, Message& msg) {
    char header[24];
    if (!read_exact(fd, header, sizeof(header), true)) return false;
    if (std::memcmp(header, kWireMagic, 4) != 0) throw ProtocolError("bad frame magic");
    ByteReader r(reinterpret_cast<const std::uint8_t*>(header + 4), sizeof(header) - 4);
    std::uint32_t version = r.u32();
    if (version != kWireVersion) throw ProtocolError("unsupported frame version " + std::to_string(version));
    msg.src = r.u32();
    msg.dst = r.u32();
    msg.buffer_id = r.u32();
    msg.seq = r.u32();

    char rank_byte;
    if (!read_exact(fd, &rank_byte, 1, false)) return false;
    auto rank = static_cast<std::uint8_t>(rank_byte);
    if (rank == 0 || rank > 8) throw ProtocolError("bad tensor rank " + std::to_string(rank));
    std::vector<char> tail(rank * 4 + 8);
    read_exact(fd, tail.data(), tail.size(), false);
    ByteReader tr(reinterpret_cast<const std::uint8_t*>(tail.data()), tail.size());
    msg.spec.dims.clear();
    for (std::uint8_t i = 0; i < rank; ++i) msg.spec.dims.push_back(static_cast<std::int64_t>(tr.u32()));
    std::uint64_t payload_bytes = tr.u64();
    if (payload_bytes % 4 != 0) throw ProtocolError("payload length not a multiple of 4");
    if (payload_bytes != msg.spec.bytes())
        throw ProtocolError("payload length " + std::to_string(payload_bytes) + " does not match dims " +
                            msg.spec.str());
    msg.payload.resize(payload_bytes / 4);
    read_exact(fd, reinterpret_cast<char*>(msg.payload.data()), payload_bytes, false);
    return true;
}

}  // namespace pipecut

#endif
