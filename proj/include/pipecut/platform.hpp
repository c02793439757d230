// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_PLATFORM_HPP
#define PIPECUT_PLATFORM_HPP

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pipecut/errors.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

struct GpuInfo {
    std::string arch;
    std::string api;
    bool operator==(const GpuInfo& o) const { return arch == o.arch && api == o.api; }
};

struct DeviceSpec {
    std::string name;
    std::string cpu_arch;
    int cores = 1;  // addressable slots are 0..cores-1
    std::optional<GpuInfo> gpu;

    bool operator==(const DeviceSpec& o) const {
        return name == o.name && cpu_arch == o.cpu_arch && cores == o.cores && gpu == o.gpu;
    }
};

struct PlatformSpec {
    std::vector<DeviceSpec> devices;

    const DeviceSpec* find(const std::string& name) const {
        for (const auto& d : devices)
            if (d.name == name) return &d;
        return nullptr;
    }

    const DeviceSpec& at(const std::string& name) const {
        const DeviceSpec* d = find(name);
        if (!d) throw UnknownResource("device " + name + " not in platform");
        return *d;
    }

    bool operator==(const PlatformSpec& o) const { return devices == o.devices; }
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Device names become the prefix of resource keys, split at the first '_',
// so '_' is disallowed in names.
inline bool valid_device_name(const std::string& s) {
    if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '-'; });
}

inline bool valid_arch(const std::string& s) {
    if (s.empty()) return false;
    if (!std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c); })) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0]))) return false;
    return lower(s) != "gpu";
}

}  // namespace detail

/// Platform file grammar, one device per line:
///   <name> cpu=<arch> slots=<a>-<b> [gpu=<arch> api=<api>]
/// '#' starts a comment; blank lines are skipped.
inline PlatformSpec parse_platform_text(const std::string& text, const std::string& origin) {
    PlatformSpec p;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> ParseError {
        return ParseError(origin + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream tokens(line);
        std::string name;
        if (!(tokens >> name)) continue;  // blank line

        DeviceSpec dev;
        dev.name = name;
        if (!detail::valid_device_name(name))
            throw fail("device name '" + name + "' must be alphanumeric (no underscores)");
        if (!seen.insert(name).second) throw DuplicateDevice(name);

        bool have_cpu = false, have_slots = false;
        std::string gpu_arch, gpu_api;
        std::string field;
        while (tokens >> field) {
            auto eq = field.find('=');
            if (eq == std::string::npos) throw fail("expected key=value, got '" + field + "'");
            std::string key = field.substr(0, eq);
            std::string value = field.substr(eq + 1);
            if (value.empty()) throw fail("empty value for '" + key + "'");
            if (key == "cpu") {
                if (!detail::valid_arch(value)) throw fail("bad cpu arch '" + value + "'");
                dev.cpu_arch = value;
                have_cpu = true;
            } else if (key == "slots") {
                auto dash = value.find('-');
                if (dash == std::string::npos) throw fail("slots must be '<a>-<b>', got '" + value + "'");
                int a, b;
                try {
                    a = std::stoi(value.substr(0, dash));
                    b = std::stoi(value.substr(dash + 1));
                } catch (const std::exception&) {
                    throw fail("bad slot range '" + value + "'");
                }
                if (a != 0 || b < a) throw fail("slot range must start at 0, got '" + value + "'");
                dev.cores = b + 1;
                have_slots = true;
            } else if (key == "gpu") {
                gpu_arch = value;
            } else if (key == "api") {
                gpu_api = value;
            } else {
                throw fail("unknown field '" + key + "'");
            }
        }
        if (!have_cpu) throw fail("device " + name + " missing cpu=<arch>");
        if (!have_slots) throw fail("device " + name + " missing slots=<a>-<b>");
        if (!gpu_arch.empty() != !gpu_api.empty()) throw fail("gpu= and api= must appear together");
        if (!gpu_arch.empty()) dev.gpu = GpuInfo{gpu_arch, gpu_api};
        p.devices.push_back(std::move(dev));
    }
    if (p.devices.empty()) throw ParseError(origin + ": no devices");
    return p;
}

inline PlatformSpec parse_platform(const std::filesystem::path& path) {
    return parse_platform_text(read_file(path), path.filename().string());
}

inline std::string format_platform(const PlatformSpec& p) {
    std::ostringstream out;
    for (const auto& d : p.devices) {
        out << d.name << " cpu=" << d.cpu_arch << " slots=0-" << (d.cores - 1);
        if (d.gpu) out << " gpu=" << d.gpu->arch << " api=" << d.gpu->api;
        out << "\n";
    }
    return out.str();
}

/// One compute-resource selection on one device: a CPU core subset or the GPU.
/// Canonical text is "<device>_<arch><core digits>" (e.g. edge01_arm123) or
/// "<device>_gpu". Core indices are single digits, so only cores 0-9 are
/// addressable per device.
struct ResourceKey {
    enum class Kind { CpuCores, Gpu };

    std::string device;
    Kind kind = Kind::CpuCores;
    std::set<int> slots;     // CpuCores only
    std::string arch_token;  // lowercase cpu arch, for canonical text

    static ResourceKey cpu(const DeviceSpec& dev, std::set<int> slots) {
        ResourceKey k;
        k.device = dev.name;
        k.kind = Kind::CpuCores;
        k.slots = std::move(slots);
        k.arch_token = detail::lower(dev.cpu_arch);
        return k;
    }

    static ResourceKey gpu(const DeviceSpec& dev) {
        ResourceKey k;
        k.device = dev.name;
        k.kind = Kind::Gpu;
        return k;
    }

    bool is_gpu() const { return kind == Kind::Gpu; }

    int num_threads() const { return is_gpu() ? 1 : static_cast<int>(slots.size()); }

    std::string canonical_text() const {
        if (is_gpu()) return device + "_gpu";
        std::string out = device + "_" + arch_token;
        for (int s : slots) out += static_cast<char>('0' + s);
        return out;
    }

    bool operator==(const ResourceKey& o) const { return canonical_text() == o.canonical_text(); }
    bool operator!=(const ResourceKey& o) const { return !(*this == o); }
};

inline ResourceKey parse_resource_key(const std::string& text, const PlatformSpec& p) {
    auto underscore = text.find('_');
    if (underscore == std::string::npos || underscore == 0)
        throw UnknownResource("key '" + text + "' has no '<device>_' prefix");
    std::string device = text.substr(0, underscore);
    std::string rest = text.substr(underscore + 1);
    const DeviceSpec* dev = p.find(device);
    if (!dev) throw UnknownResource("key '" + text + "': device " + device + " not in platform");

    if (rest == "gpu") {
        if (!dev->gpu) throw UnknownResource("key '" + text + "': device " + device + " has no gpu");
        return ResourceKey::gpu(*dev);
    }

    std::string arch = detail::lower(dev->cpu_arch);
    if (rest.rfind(arch, 0) != 0)
        throw UnknownResource("key '" + text + "': expected '" + device + "_" + arch + "<cores>' or '" + device +
                              "_gpu'");
    std::string digits = rest.substr(arch.size());
    if (digits.empty()) throw UnknownResource("key '" + text + "': no core digits");
    std::set<int> slots;
    int prev = -1;
    for (char c : digits) {
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw UnknownResource("key '" + text + "': bad core digit '" + std::string(1, c) + "'");
        int slot = c - '0';
        if (slot <= prev)
            throw UnknownResource("key '" + text + "': core digits must be strictly ascending");
        if (slot >= dev->cores)
            throw UnknownResource("key '" + text + "': core " + std::to_string(slot) + " out of range for " +
                                  device + " (" + std::to_string(dev->cores) + " cores)");
        slots.insert(slot);
        prev = slot;
    }
    return ResourceKey::cpu(*dev, std::move(slots));
}

struct OptionPolicy {
    bool single_core = true;
    bool all_cores = true;
    bool gpu = true;
};

/// The per-device mapping options explored by the DSE: one CPU core,
/// all CPU cores, and the GPU when present. Order is deterministic:
/// device order, then single/all/gpu. Duplicate canonical texts collapse.
inline std::vector<ResourceKey> resource_options(const PlatformSpec& p, const OptionPolicy& policy = {}) {
    std::vector<ResourceKey> out;
    std::set<std::string> seen;
    auto push = [&](ResourceKey k) {
        if (seen.insert(k.canonical_text()).second) out.push_back(std::move(k));
    };
    for (const auto& dev : p.devices) {
        int usable = std::min(dev.cores, 10);
        if (policy.single_core) push(ResourceKey::cpu(dev, {0}));
        if (policy.all_cores) {
            std::set<int> all;
            for (int i = 0; i < usable; ++i) all.insert(i);
            push(ResourceKey::cpu(dev, std::move(all)));
        }
        if (policy.gpu && dev.gpu) push(ResourceKey::gpu(dev));
    }
    return out;
}

}  // namespace pipecut

#endif
