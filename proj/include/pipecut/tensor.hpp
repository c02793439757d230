// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_TENSOR_HPP
#define PIPECUT_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pipecut/errors.hpp"
#include "pipecut/util.hpp"

namespace pipecut {

enum class DType { Float32 };

/// Shape of a tensor flowing between layers. 4-D tensors are NCHW,
/// 2-D tensors are [N, features]; batch size is always 1.
struct TensorSpec {
    std::vector<std::int64_t> dims;
    DType dtype = DType::Float32;

    std::int64_t elements() const {
        std::int64_t n = 1;
        for (std::int64_t d : dims) n *= d;
        return n;
    }

    std::uint64_t bytes() const { return static_cast<std::uint64_t>(elements()) * 4; }

    bool operator==(const TensorSpec& other) const { return dims == other.dims && dtype == other.dtype; }
    bool operator!=(const TensorSpec& other) const { return !(*this == other); }

    std::string str() const { return "[" + join(dims, ",") + "]"; }
};

inline void check_tensor_spec(const TensorSpec& spec, const std::string& what) {
    if (spec.dims.empty()) throw ShapeError(what + ": empty dims");
    for (std::int64_t d : spec.dims)
        if (d < 1) throw ShapeError(what + ": non-positive dim in " + spec.str());
}

/// Dense row-major float32 tensor.
struct Tensor {
    TensorSpec spec;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(TensorSpec s) : spec(std::move(s)), data(static_cast<std::size_t>(spec.elements()), 0.0f) {}
    Tensor(TensorSpec s, std::vector<float> d) : spec(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != spec.elements())
            throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match spec " +
                             spec.str());
    }

    std::int64_t elements() const { return spec.elements(); }

    bool operator==(const Tensor& other) const { return spec == other.spec && data == other.data; }
};

}  // namespace pipecut

#endif
