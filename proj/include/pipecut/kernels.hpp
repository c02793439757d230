// Copyright 2026 The pipecut authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PIPECUT_KERNELS_HPP
#define PIPECUT_KERNELS_HPP

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "pipecut/model.hpp"
#include "pipecut/tensor.hpp"
#include "pipecut/thread_pool.hpp"

namespace pipecut {

// Float32 operator kernels. Parallelism partitions independent output
// elements; the accumulation order within one output element is a fixed
// serial order, so results are bit-identical for any num_threads.

namespace kernels {

inline void parallel(ThreadPool* pool, std::int64_t count,
                     const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (pool)
        pool->parallel_for(count, fn);
    else
        fn(0, count);
}

inline Tensor conv2d(const Layer& l, const Tensor& in, const WeightStore& weights, ThreadPool* pool) {
    const std::int64_t k = l.attr_int("kernel");
    const std::int64_t s = l.attr_int_or("stride", 1);
    const std::int64_t p = l.attr_int_or("padding", 0);
    const std::int64_t filters = l.attr_int("filters");
    const std::int64_t channels = in.spec.dims[1];
    const std::int64_t in_h = in.spec.dims[2];
    const std::int64_t in_w = in.spec.dims[3];
    const std::int64_t out_h = (in_h + 2 * p - k) / s + 1;
    const std::int64_t out_w = (in_w + 2 * p - k) / s + 1;

    const auto& w = weights.at(l.weight_refs[0]).data;
    const auto& bias = weights.at(l.weight_refs[1]).data;

    Tensor out(TensorSpec{{1, filters, out_h, out_w}});
    parallel(pool, filters, [&](std::int64_t f0, std::int64_t f1) {
        for (std::int64_t f = f0; f < f1; ++f) {
            float* dst = out.data.data() + f * out_h * out_w;
            const float* wf = w.data() + f * channels * k * k;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    float acc = bias[static_cast<std::size_t>(f)];
                    const std::int64_t base_y = oy * s - p;
                    const std::int64_t base_x = ox * s - p;
                    for (std::int64_t c = 0; c < channels; ++c) {
                        const float* src = in.data.data() + c * in_h * in_w;
                        const float* wc = wf + c * k * k;
                        for (std::int64_t ky = 0; ky < k; ++ky) {
                            const std::int64_t y = base_y + ky;
                            if (y < 0 || y >= in_h) continue;
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t x = base_x + kx;
                                if (x < 0 || x >= in_w) continue;
                                acc += src[y * in_w + x] * wc[ky * k + kx];
                            }
                        }
                    }
                    dst[oy * out_w + ox] = acc;
                }
            }
        }
    });
    return out;
}

inline Tensor pool2d(const Layer& l, const Tensor& in, bool max_pool, ThreadPool* pool) {
    const std::int64_t k = l.attr_int("kernel");
    const std::int64_t s = l.attr_int_or("stride", k);
    const std::int64_t p = l.attr_int_or("padding", 0);
    const std::int64_t channels = in.spec.dims[1];
    const std::int64_t in_h = in.spec.dims[2];
    const std::int64_t in_w = in.spec.dims[3];
    const std::int64_t out_h = (in_h + 2 * p - k) / s + 1;
    const std::int64_t out_w = (in_w + 2 * p - k) / s + 1;

    Tensor out(TensorSpec{{1, channels, out_h, out_w}});
    parallel(pool, channels, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const float* src = in.data.data() + c * in_h * in_w;
            float* dst = out.data.data() + c * out_h * out_w;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const std::int64_t base_y = oy * s - p;
                    const std::int64_t base_x = ox * s - p;
                    float best = -std::numeric_limits<float>::infinity();
                    float sum = 0.0f;
                    int valid = 0;
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t y = base_y + ky;
                        if (y < 0 || y >= in_h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t x = base_x + kx;
                            if (x < 0 || x >= in_w) continue;
                            float v = src[y * in_w + x];
                            if (v > best) best = v;
                            sum += v;
                            ++valid;
                        }
                    }
                    // average pooling divides by the in-bounds count
                    dst[oy * out_w + ox] = max_pool ? best : (valid ? sum / static_cast<float>(valid) : 0.0f);
                }
            }
        }
    });
    return out;
}

inline Tensor global_avg_pool(const Tensor& in, ThreadPool* pool) {
    const std::int64_t channels = in.spec.dims[1];
    const std::int64_t hw = in.spec.dims[2] * in.spec.dims[3];
    Tensor out(TensorSpec{{1, channels, 1, 1}});
    parallel(pool, channels, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const float* src = in.data.data() + c * hw;
            float sum = 0.0f;
            for (std::int64_t i = 0; i < hw; ++i) sum += src[i];
            out.data[static_cast<std::size_t>(c)] = sum / static_cast<float>(hw);
        }
    });
    return out;
}

inline Tensor relu(const Tensor& in, ThreadPool* pool) {
    Tensor out(in.spec);
    parallel(pool, in.elements(), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) out.data[static_cast<std::size_t>(i)] = std::max(0.0f, in.data[static_cast<std::size_t>(i)]);
    });
    return out;
}

inline Tensor add(const std::vector<const Tensor*>& in, ThreadPool* pool) {
    Tensor out(in[0]->spec);
    parallel(pool, out.elements(), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) {
            auto idx = static_cast<std::size_t>(i);
            float acc = in[0]->data[idx];
            for (std::size_t t = 1; t < in.size(); ++t) acc += in[t]->data[idx];
            out.data[idx] = acc;
        }
    });
    return out;
}

inline Tensor concat(const Layer& l, const std::vector<const Tensor*>& in, const TensorSpec& out_spec) {
    const auto axis = static_cast<std::size_t>(l.attr_int("axis"));
    Tensor out(out_spec);
    // outer = product of dims before the axis, inner = product after it
    std::int64_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out_spec.dims[d];
    std::int64_t inner = 1;
    for (std::size_t d = axis + 1; d < out_spec.dims.size(); ++d) inner *= out_spec.dims[d];

    std::int64_t dst_axis_offset = 0;
    for (const Tensor* t : in) {
        const std::int64_t t_axis = t->spec.dims[axis];
        for (std::int64_t o = 0; o < outer; ++o) {
            const float* src = t->data.data() + o * t_axis * inner;
            float* dst = out.data.data() + (o * out_spec.dims[axis] + dst_axis_offset) * inner;
            std::memcpy(dst, src, static_cast<std::size_t>(t_axis * inner) * sizeof(float));
        }
        dst_axis_offset += t_axis;
    }
    return out;
}

inline Tensor fully_connected(const Layer& l, const Tensor& in, const WeightStore& weights, ThreadPool* pool) {
    const std::int64_t out_features = l.attr_int("out_features");
    const std::int64_t in_features = in.elements();  // batch 1: flatten implicitly
    const auto& w = weights.at(l.weight_refs[0]).data;
    const auto& bias = weights.at(l.weight_refs[1]).data;

    Tensor out(TensorSpec{{1, out_features}});
    parallel(pool, out_features, [&](std::int64_t o0, std::int64_t o1) {
        for (std::int64_t o = o0; o < o1; ++o) {
            const float* wo = w.data() + o * in_features;
            float acc = bias[static_cast<std::size_t>(o)];
            for (std::int64_t i = 0; i < in_features; ++i) acc += wo[i] * in.data[static_cast<std::size_t>(i)];
            out.data[static_cast<std::size_t>(o)] = acc;
        }
    });
    return out;
}

inline Tensor batch_norm(const Layer& l, const Tensor& in, const WeightStore& weights, ThreadPool* pool) {
    const auto eps = static_cast<float>(l.attr_float_or("epsilon", 1e-5));
    const std::int64_t channels = in.spec.dims[1];
    const std::int64_t hw = in.spec.dims[2] * in.spec.dims[3];
    const auto& gamma = weights.at(l.weight_refs[0]).data;
    const auto& beta = weights.at(l.weight_refs[1]).data;
    const auto& mean = weights.at(l.weight_refs[2]).data;
    const auto& var = weights.at(l.weight_refs[3]).data;

    Tensor out(in.spec);
    parallel(pool, channels, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            auto ci = static_cast<std::size_t>(c);
            const float scale = gamma[ci] / std::sqrt(var[ci] + eps);
            const float shift = beta[ci] - mean[ci] * scale;
            const float* src = in.data.data() + c * hw;
            float* dst = out.data.data() + c * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
        }
    });
    return out;
}

inline Tensor softmax(const Layer& l, const Tensor& in, ThreadPool* pool) {
    const auto axis = static_cast<std::size_t>(l.attr_int_or("axis", 1));
    std::int64_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= in.spec.dims[d];
    const std::int64_t n = in.spec.dims[axis];
    std::int64_t inner = 1;
    for (std::size_t d = axis + 1; d < in.spec.dims.size(); ++d) inner *= in.spec.dims[d];

    Tensor out(in.spec);
    parallel(pool, outer * inner, [&](std::int64_t s0, std::int64_t s1) {
        for (std::int64_t s = s0; s < s1; ++s) {
            const std::int64_t o = s / inner;
            const std::int64_t i = s % inner;
            const float* src = in.data.data() + o * n * inner + i;
            float* dst = out.data.data() + o * n * inner + i;
            float best = src[0];
            for (std::int64_t j = 1; j < n; ++j) best = std::max(best, src[j * inner]);
            float sum = 0.0f;
            for (std::int64_t j = 0; j < n; ++j) {
                float e = std::exp(src[j * inner] - best);
                dst[j * inner] = e;
                sum += e;
            }
            for (std::int64_t j = 0; j < n; ++j) dst[j * inner] /= sum;
        }
    });
    return out;
}

}  // namespace kernels

/// Executes one layer on validated inputs. Results are deterministic and
/// independent of num_threads.
inline Tensor execute_layer(const Layer& l, const std::vector<const Tensor*>& inputs, const WeightStore& weights,
                            ThreadPool* pool = nullptr) {
    std::vector<TensorSpec> in_specs;
    in_specs.reserve(inputs.size());
    for (const Tensor* t : inputs) in_specs.push_back(t->spec);
    TensorSpec out_spec = layer_output_shape(l, in_specs);  // throws ShapeError on bad inputs

    switch (l.op) {
        case Op::Input:
            throw UnsupportedOp("Input pseudo-layer is not executable");
        case Op::Output:
            return *inputs.at(0);
        case Op::Conv2D:
            return kernels::conv2d(l, *inputs[0], weights, pool);
        case Op::MaxPool2D:
            return kernels::pool2d(l, *inputs[0], true, pool);
        case Op::AvgPool2D:
            return kernels::pool2d(l, *inputs[0], false, pool);
        case Op::GlobalAvgPool2D:
            return kernels::global_avg_pool(*inputs[0], pool);
        case Op::ReLU:
            return kernels::relu(*inputs[0], pool);
        case Op::Add:
            return kernels::add(inputs, pool);
        case Op::Concat:
            return kernels::concat(l, inputs, out_spec);
        case Op::FullyConnected:
            return kernels::fully_connected(l, *inputs[0], weights, pool);
        case Op::BatchNorm:
            return kernels::batch_norm(l, *inputs[0], weights, pool);
        case Op::Softmax:
            return kernels::softmax(l, *inputs[0], pool);
        case Op::Flatten: {
            Tensor out(out_spec);
            out.data = inputs[0]->data;
            return out;
        }
    }
    throw UnsupportedOp(op_name(l.op));
}

/// Single-threaded, single-process reference evaluation of the whole model:
/// the oracle every distributed run must match bit-for-bit.
inline Tensor infer_reference(const Model& m, const Tensor& input) {
    const Layer& in_layer = m.input_layer();
    if (input.spec != m.shape_of(in_layer.name))
        throw ShapeError("input tensor is " + input.spec.str() + ", model expects " +
                         m.shape_of(in_layer.name).str());
    std::map<std::string, Tensor> values;
    values[in_layer.name] = input;
    Tensor output;
    for (const auto& name : topo_order(m)) {
        const Layer& l = m.at(name);
        if (l.op == Op::Input) continue;
        std::vector<const Tensor*> ins;
        ins.reserve(l.inputs.size());
        for (const auto& src : l.inputs) ins.push_back(&values.at(src));
        Tensor out = execute_layer(l, ins, m.weights, nullptr);
        if (l.op == Op::Output) output = out;
        values[name] = std::move(out);
    }
    return output;
}

}  // namespace pipecut

#endif
