// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_CONFIG_HPP
#define PIPECUT_CONFIG_HPP

#include <cstdint>

namespace pipecut {

inline constexpr char kVersion[] = "0.1.0";

// Fixed per-rank runtime overhead used by both the cost model and the
// runtime's portable peak-memory estimate.
inline constexpr std::uint64_t kRuntimeOverheadBytes = 16ull << 20;

}  // namespace pipecut

#endif
