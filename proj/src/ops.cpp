// Copyright 2026 The PA-Net Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "panet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace panet {

namespace {

struct ConvGeometry {
    Extent in, out, k;
    std::size_t cin = 0, cout = 0;
    int stride = 1;
    // Padding per axis; the depth axis of a 2D grid is never padded.
    int pd = 0, ph = 0, pw = 0;
};

std::size_t conv_out(std::size_t in, std::size_t k, int stride, int pad, const std::string& axis)
{
    const long long span = static_cast<long long>(in) + 2LL * pad - static_cast<long long>(k);
    if (span < 0)
        throw ShapeError("conv: kernel " + std::to_string(k) + " larger than padded " + axis + " extent " +
                         std::to_string(in));
    return static_cast<std::size_t>(span / stride) + 1;
}

ConvGeometry conv_geometry(const TensorGrid& input, const TensorGrid& kernel, int stride, int padding)
{
    if (stride < 1)
        throw ShapeError("conv: stride must be >= 1");
    if (padding < 0)
        throw ShapeError("conv: padding must be >= 0");
    const auto rank = input.spatial_rank();
    if (kernel.rank() != rank + 2)
        throw ShapeError("conv: kernel " + shape_to_string(kernel.shape()) + " does not match input " +
                         shape_to_string(input.shape()));
    if (kernel.shape()[1] != input.channels())
        throw ShapeError("conv: kernel expects " + std::to_string(kernel.shape()[1]) + " input channels, got " +
                         std::to_string(input.channels()));
    for (std::size_t a = 2; a < kernel.rank(); ++a)
        if (kernel.shape()[a] % 2 == 0)
            throw ShapeError("conv: kernel spatial extents must be odd, got " + shape_to_string(kernel.shape()));

    ConvGeometry g;
    g.cin = input.channels();
    g.cout = kernel.shape()[0];
    g.stride = stride;
    g.in = input.extent();
    g.k = extent_of(Shape(kernel.shape().begin() + 2, kernel.shape().end()));
    g.ph = g.pw = padding;
    g.pd = rank == 3 ? padding : 0;
    g.out.d = rank == 3 ? conv_out(g.in.d, g.k.d, stride, g.pd, "depth") : 1;
    g.out.h = conv_out(g.in.h, g.k.h, stride, g.ph, "height");
    g.out.w = conv_out(g.in.w, g.k.w, stride, g.pw, "width");
    return g;
}

Shape conv_output_shape(const ConvGeometry& g, std::size_t rank)
{
    if (rank == 3)
        return {g.cout, g.out.d, g.out.h, g.out.w};
    return {g.cout, g.out.h, g.out.w};
}

// Output indices o in [lo, hi) for which o*stride + koff - pad lands inside [0, n).
struct Range {
    std::size_t lo, hi;
};

Range valid_range(std::size_t n, std::size_t out, std::size_t koff, int stride, int pad)
{
    const long long shift = static_cast<long long>(koff) - pad;
    long long lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    long long hi = (static_cast<long long>(n) - 1 - shift);
    hi = hi < 0 ? 0 : hi / stride + 1;
    if (shift > static_cast<long long>(n) - 1)
        hi = 0;
    hi = std::min<long long>(hi, static_cast<long long>(out));
    lo = std::min(lo, hi);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

std::size_t kernel_index(const ConvGeometry& g, std::size_t co, std::size_t ci, std::size_t kz, std::size_t ky,
                         std::size_t kx)
{
    return (((co * g.cin + ci) * g.k.d + kz) * g.k.h + ky) * g.k.w + kx;
}

// Visits every (kernel tap, output row) pair with the matching input row and the valid
// width range; `fn(kidx, in_row_offset, out_row_offset, xr, kx)` handles one row.
template <typename Fn>
void for_each_tap_row(const ConvGeometry& g, std::size_t co, std::size_t ci, Fn&& fn)
{
    for (std::size_t kz = 0; kz < g.k.d; ++kz) {
        const auto zr = valid_range(g.in.d, g.out.d, kz, g.stride, g.pd);
        for (std::size_t ky = 0; ky < g.k.h; ++ky) {
            const auto yr = valid_range(g.in.h, g.out.h, ky, g.stride, g.ph);
            for (std::size_t kx = 0; kx < g.k.w; ++kx) {
                const auto xr = valid_range(g.in.w, g.out.w, kx, g.stride, g.pw);
                if (xr.lo >= xr.hi)
                    continue;
                const auto kidx = kernel_index(g, co, ci, kz, ky, kx);
                for (std::size_t oz = zr.lo; oz < zr.hi; ++oz) {
                    const std::size_t iz = oz * g.stride + kz - g.pd;
                    for (std::size_t oy = yr.lo; oy < yr.hi; ++oy) {
                        const std::size_t iy = oy * g.stride + ky - g.ph;
                        const std::size_t in_row = ((ci * g.in.d + iz) * g.in.h + iy) * g.in.w;
                        const std::size_t out_row = ((co * g.out.d + oz) * g.out.h + oy) * g.out.w;
                        fn(kidx, in_row, out_row, xr, kx);
                    }
                }
            }
        }
    }
}

std::ptrdiff_t row_base(std::size_t in_row, std::size_t kx, int pad)
{
    return static_cast<std::ptrdiff_t>(in_row) + static_cast<std::ptrdiff_t>(kx) - pad;
}

void require_image(const TensorGrid& t, const std::string& op)
{
    if (t.rank() != 3 && t.rank() != 4)
        throw ShapeError(op + ": expected a channels-first 2D or 3D grid, got " + shape_to_string(t.shape()));
}

Shape scaled_shape(const Shape& shape, bool down)
{
    Shape out = shape;
    for (std::size_t a = 1; a < out.size(); ++a)
        out[a] = down ? out[a] / 2 : out[a] * 2;
    return out;
}

template <typename Fn>
void for_each_coarse_fine(const Extent& coarse, std::size_t rank, Fn&& fn)
{
    // Each coarse cell maps onto a 2x2 (or 2x2x2) block of fine cells.
    const std::size_t dz = rank == 3 ? 2 : 1;
    const Extent fine{coarse.d * dz, coarse.h * 2, coarse.w * 2};
    for (std::size_t z = 0; z < coarse.d; ++z)
        for (std::size_t y = 0; y < coarse.h; ++y)
            for (std::size_t x = 0; x < coarse.w; ++x) {
                const std::size_t c = (z * coarse.h + y) * coarse.w + x;
                for (std::size_t a = 0; a < dz; ++a)
                    for (std::size_t b = 0; b < 2; ++b)
                        for (std::size_t e = 0; e < 2; ++e) {
                            const std::size_t f = ((z * dz + a) * fine.h + (y * 2 + b)) * fine.w + (x * 2 + e);
                            fn(c, f);
                        }
            }
}

}  // namespace

TensorGrid conv_forward(const TensorGrid& input, const TensorGrid& kernel, std::span<const double> bias,
                        int stride, int padding)
{
    require_image(input, "conv");
    const auto g = conv_geometry(input, kernel, stride, padding);
    if (bias.size() != g.cout)
        throw ShapeError("conv: bias length " + std::to_string(bias.size()) + " does not match " +
                         std::to_string(g.cout) + " output channels");

    TensorGrid out(conv_output_shape(g, input.spatial_rank()));
    const std::size_t plane = g.out.count();
    for (std::size_t co = 0; co < g.cout; ++co)
        std::fill_n(out.data().begin() + co * plane, plane, bias[co]);

    const double* in = input.data().data();
    const double* k = kernel.data().data();
    double* o = out.data().data();
    const auto s = static_cast<std::size_t>(g.stride);
    for (std::size_t co = 0; co < g.cout; ++co)
        for (std::size_t ci = 0; ci < g.cin; ++ci)
            for_each_tap_row(g, co, ci, [&](std::size_t kidx, std::size_t in_row, std::size_t out_row, Range xr,
                                            std::size_t kx) {
                const double w = k[kidx];
                const std::ptrdiff_t base = row_base(in_row, kx, g.pw);
                double* dst = o + out_row;
                if (s == 1) {
                    const double* src = in + base + static_cast<std::ptrdiff_t>(xr.lo);
                    for (std::size_t ox = xr.lo; ox < xr.hi; ++ox)
                        dst[ox] += w * *src++;
                } else {
                    for (std::size_t ox = xr.lo; ox < xr.hi; ++ox)
                        dst[ox] += w * in[base + static_cast<std::ptrdiff_t>(ox * s)];
                }
            });
    return out;
}

ConvGradients conv_backward(const TensorGrid& upstream, const TensorGrid& input, const TensorGrid& kernel,
                            int stride, int padding)
{
    require_image(input, "conv backward");
    const auto g = conv_geometry(input, kernel, stride, padding);
    require_same_shape(upstream.shape(), conv_output_shape(g, input.spatial_rank()), "conv backward upstream");

    ConvGradients grads{TensorGrid(input.shape()), TensorGrid(kernel.shape()), std::vector<double>(g.cout, 0.0)};
    const std::size_t plane = g.out.count();
    for (std::size_t co = 0; co < g.cout; ++co) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
            acc += upstream[co * plane + i];
        grads.bias[co] = acc;
    }

    const double* in = input.data().data();
    const double* k = kernel.data().data();
    const double* up = upstream.data().data();
    double* gin = grads.input.data().data();
    double* gk = grads.kernel.data().data();
    const auto s = static_cast<std::size_t>(g.stride);
    for (std::size_t co = 0; co < g.cout; ++co)
        for (std::size_t ci = 0; ci < g.cin; ++ci)
            for_each_tap_row(g, co, ci, [&](std::size_t kidx, std::size_t in_row, std::size_t out_row, Range xr,
                                            std::size_t kx) {
                const double w = k[kidx];
                const std::ptrdiff_t base = row_base(in_row, kx, g.pw);
                const double* u = up + out_row;
                double acc = 0.0;
                for (std::size_t ox = xr.lo; ox < xr.hi; ++ox) {
                    const auto ix = base + static_cast<std::ptrdiff_t>(ox * s);
                    gin[ix] += w * u[ox];
                    acc += u[ox] * in[ix];
                }
                gk[kidx] += acc;
            });
    return grads;
}

TensorGrid avgpool2(const TensorGrid& input)
{
    require_image(input, "avgpool2");
    for (std::size_t a = 1; a < input.rank(); ++a)
        if (input.shape()[a] % 2 != 0)
            throw ShapeError("avgpool2: spatial extents must be even, got " + shape_to_string(input.shape()));
    TensorGrid out(scaled_shape(input.shape(), true));
    const auto rank = input.spatial_rank();
    const double norm = rank == 3 ? 1.0 / 8.0 : 1.0 / 4.0;
    const auto coarse = out.extent();
    for (std::size_t c = 0; c < input.channels(); ++c) {
        auto src = input.channel(c);
        auto dst = out.channel(c);
        for_each_coarse_fine(coarse, rank, [&](std::size_t ci, std::size_t fi) { dst[ci] += src[fi]; });
        for (auto& v : dst)
            v *= norm;
    }
    return out;
}

TensorGrid avgpool2_backward(const TensorGrid& upstream, const Shape& input_shape)
{
    require_same_shape(upstream.shape(), scaled_shape(input_shape, true), "avgpool2 backward upstream");
    TensorGrid grad(input_shape);
    const auto rank = input_shape.size() - 1;
    const double norm = rank == 3 ? 1.0 / 8.0 : 1.0 / 4.0;
    const auto coarse = upstream.extent();
    for (std::size_t c = 0; c < upstream.channels(); ++c) {
        auto src = upstream.channel(c);
        auto dst = grad.channel(c);
        for_each_coarse_fine(coarse, rank, [&](std::size_t ci, std::size_t fi) { dst[fi] = src[ci] * norm; });
    }
    return grad;
}

TensorGrid nearest_upsample2(const TensorGrid& input)
{
    require_image(input, "nearest_upsample2");
    TensorGrid out(scaled_shape(input.shape(), false));
    const auto coarse = input.extent();
    for (std::size_t c = 0; c < input.channels(); ++c) {
        auto src = input.channel(c);
        auto dst = out.channel(c);
        for_each_coarse_fine(coarse, input.spatial_rank(), [&](std::size_t ci, std::size_t fi) { dst[fi] = src[ci]; });
    }
    return out;
}

TensorGrid nearest_upsample2_backward(const TensorGrid& upstream, const Shape& input_shape)
{
    require_same_shape(upstream.shape(), scaled_shape(input_shape, false), "nearest_upsample2 backward upstream");
    TensorGrid grad(input_shape);
    const auto coarse = grad.extent();
    for (std::size_t c = 0; c < grad.channels(); ++c) {
        auto src = upstream.channel(c);
        auto dst = grad.channel(c);
        for_each_coarse_fine(coarse, input_shape.size() - 1,
                             [&](std::size_t ci, std::size_t fi) { dst[ci] += src[fi]; });
    }
    return grad;
}

TensorGrid relu(const TensorGrid& input)
{
    TensorGrid out = input;
    for (auto& v : out.data())
        v = v > 0.0 ? v : 0.0;
    return out;
}

TensorGrid relu_backward(const TensorGrid& upstream, const TensorGrid& input)
{
    require_same_shape(upstream.shape(), input.shape(), "relu backward upstream");
    TensorGrid grad = upstream;
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(input[i] > 0.0))
            grad[i] = 0.0;
    return grad;
}

TensorGrid linear(const TensorGrid& input, const TensorGrid& weight, std::span<const double> bias)
{
    if (weight.rank() != 2)
        throw ShapeError("linear: weight must be [out, in], got " + shape_to_string(weight.shape()));
    const auto m = weight.shape()[0], n = weight.shape()[1];
    if (input.size() != n)
        throw ShapeError("linear: weight " + shape_to_string(weight.shape()) + " cannot act on input " +
                         shape_to_string(input.shape()));
    if (bias.size() != m)
        throw ShapeError("linear: bias length " + std::to_string(bias.size()) + " != " + std::to_string(m));
    TensorGrid out({m});
    const double* x = input.data().data();
    for (std::size_t r = 0; r < m; ++r) {
        const double* w = weight.data().data() + r * n;
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c)
            acc += w[c] * x[c];
        out[r] = acc + bias[r];
    }
    return out;
}

LinearGradients linear_backward(const TensorGrid& upstream, const TensorGrid& input, const TensorGrid& weight)
{
    if (weight.rank() != 2 || weight.shape()[1] != input.size())
        throw ShapeError("linear backward: weight " + shape_to_string(weight.shape()) + " does not match input of " +
                         std::to_string(input.size()) + " entries");
    const auto m = weight.shape()[0], n = weight.shape()[1];
    if (upstream.size() != m)
        throw ShapeError("linear backward: upstream " + shape_to_string(upstream.shape()) + " != [" +
                         std::to_string(m) + "]");
    LinearGradients g{TensorGrid(input.shape()), TensorGrid(weight.shape()), TensorGrid({m})};
    for (std::size_t r = 0; r < m; ++r) {
        const double u = upstream[r];
        g.bias[r] = u;
        const double* w = weight.data().data() + r * n;
        double* gwr = g.weight.data().data() + r * n;
        for (std::size_t c = 0; c < n; ++c) {
            g.input[c] += w[c] * u;
            gwr[c] = u * input[c];
        }
    }
    return g;
}

TensorGrid concat_channels(std::span<const TensorGrid> parts)
{
    if (parts.empty())
        throw ShapeError("concat_channels: no inputs");
    for (const auto& p : parts)
        require_image(p, "concat_channels");
    const auto spatial = parts.front().spatial_shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        require_same_shape(p.spatial_shape(), spatial, "concat_channels");
        channels += p.channels();
    }
    Shape shape{channels};
    shape.insert(shape.end(), spatial.begin(), spatial.end());
    std::vector<double> data;
    data.reserve(shape_product(shape));
    for (const auto& p : parts)
        data.insert(data.end(), p.data().begin(), p.data().end());
    return TensorGrid(std::move(shape), std::move(data));
}

TensorGrid slice_channels(const TensorGrid& input, std::size_t begin, std::size_t count)
{
    require_image(input, "slice_channels");
    if (count == 0 || begin + count > input.channels())
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + std::to_string(input.channels()) + " channels");
    Shape shape = input.shape();
    shape[0] = count;
    const auto plane = input.extent().count();
    auto first = input.data().begin() + static_cast<std::ptrdiff_t>(begin * plane);
    return TensorGrid(std::move(shape), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * plane)));
}

CrossEntropyResult softmax_cross_entropy(const TensorGrid& logits, const LabelGrid& target)
{
    require_image(logits, "softmax_cross_entropy");
    require_same_shape(logits.spatial_shape(), target.shape(), "softmax_cross_entropy labels");
    const auto k = logits.channels();
    const auto pixels = target.size();
    CrossEntropyResult res{0.0, TensorGrid(logits.shape())};
    const double inv = 1.0 / static_cast<double>(pixels);
    std::vector<double> z(k);
    double total = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        const int label = target[p];
        if (label < 0 || static_cast<std::size_t>(label) >= k)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(k) + ")");
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            z[c] = logits[c * pixels + p];
            peak = std::max(peak, z[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            sum += std::exp(z[c] - peak);
        total += std::log(sum) + peak - z[static_cast<std::size_t>(label)];
        for (std::size_t c = 0; c < k; ++c) {
            const double prob = std::exp(z[c] - peak) / sum;
            res.grad_logits[c * pixels + p] = (prob - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv;
        }
    }
    res.loss = total * inv;
    return res;
}

// --- cached ops -------------------------------------------------------------

namespace {

void require_arity(std::span<const TensorGrid> inputs, std::size_t n, const std::string& op)
{
    if (inputs.size() != n)
        throw ShapeError(op + ": expected " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
}

[[noreturn]] void backward_before_forward(const std::string& op)
{
    throw StateError(op + ": backward called before forward");
}

}  // namespace

ConvOp::ConvOp(int stride, int padding)
    : stride_(stride), padding_(padding)
{
}

TensorGrid ConvOp::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 3, "conv");
    auto out = conv_forward(inputs[0], inputs[1], inputs[2].data(), stride_, padding_);
    input_ = inputs[0];
    kernel_ = inputs[1];
    out_shape_ = out.shape();
    return out;
}

std::vector<TensorGrid> ConvOp::backward(const TensorGrid& upstream)
{
    if (!input_)
        backward_before_forward(name());
    auto g = conv_backward(upstream, *input_, *kernel_, stride_, padding_);
    const auto cout = g.bias.size();
    return {std::move(g.input), std::move(g.kernel), TensorGrid({cout}, std::move(g.bias))};
}

TensorGrid AvgPool2Op::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 1, name());
    auto out = avgpool2(inputs[0]);
    in_shape_ = inputs[0].shape();
    return out;
}

std::vector<TensorGrid> AvgPool2Op::backward(const TensorGrid& upstream)
{
    if (!in_shape_)
        backward_before_forward(name());
    return {avgpool2_backward(upstream, *in_shape_)};
}

TensorGrid Upsample2Op::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 1, name());
    auto out = nearest_upsample2(inputs[0]);
    in_shape_ = inputs[0].shape();
    return out;
}

std::vector<TensorGrid> Upsample2Op::backward(const TensorGrid& upstream)
{
    if (!in_shape_)
        backward_before_forward(name());
    return {nearest_upsample2_backward(upstream, *in_shape_)};
}

TensorGrid ReluOp::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 1, name());
    input_ = inputs[0];
    return relu(inputs[0]);
}

std::vector<TensorGrid> ReluOp::backward(const TensorGrid& upstream)
{
    if (!input_)
        backward_before_forward(name());
    return {relu_backward(upstream, *input_)};
}

TensorGrid LinearOp::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 3, name());
    auto out = linear(inputs[0], inputs[1], inputs[2].data());
    input_ = inputs[0];
    weight_ = inputs[1];
    return out;
}

std::vector<TensorGrid> LinearOp::backward(const TensorGrid& upstream)
{
    if (!input_)
        backward_before_forward(name());
    auto g = linear_backward(upstream, *input_, *weight_);
    return {std::move(g.input), std::move(g.weight), std::move(g.bias)};
}

TensorGrid ConcatOp::forward(std::span<const TensorGrid> inputs)
{
    auto out = concat_channels(inputs);
    std::vector<Shape> shapes;
    for (const auto& t : inputs)
        shapes.push_back(t.shape());
    in_shapes_ = std::move(shapes);
    return out;
}

std::vector<TensorGrid> ConcatOp::backward(const TensorGrid& upstream)
{
    if (!in_shapes_)
        backward_before_forward(name());
    std::size_t total = 0;
    for (const auto& s : *in_shapes_)
        total += s[0];
    Shape expect = in_shapes_->front();
    expect[0] = total;
    require_same_shape(upstream.shape(), expect, "concat backward upstream");
    std::vector<TensorGrid> grads;
    std::size_t begin = 0;
    for (const auto& s : *in_shapes_) {
        grads.push_back(slice_channels(upstream, begin, s[0]));
        begin += s[0];
    }
    return grads;
}

CrossEntropyOp::CrossEntropyOp(LabelGrid target)
    : target_(std::move(target))
{
}

TensorGrid CrossEntropyOp::forward(std::span<const TensorGrid> inputs)
{
    require_arity(inputs, 1, name());
    auto res = softmax_cross_entropy(inputs[0], target_);
    grad_ = std::move(res.grad_logits);
    return TensorGrid({1}, {res.loss});
}

std::vector<TensorGrid> CrossEntropyOp::backward(const TensorGrid& upstream)
{
    if (!grad_)
        backward_before_forward(name());
    if (upstream.size() != 1)
        throw ShapeError("softmax_cross_entropy backward: upstream must be a scalar");
    TensorGrid g = *grad_;
    g *= upstream[0];
    return {std::move(g)};
}

}  // namespace panet
