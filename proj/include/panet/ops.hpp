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

#pragma once

#include "panet/tensor.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace panet {

// Pure primitives. All grids are channels-first 2D ([C,H,W]) or 3D ([C,D,H,W]).

/// Cross-correlation of `input` [Cin, S...] with `kernel` [Cout, Cin, k...] (odd k).
/// Output spatial size per axis is floor((in + 2*padding - k) / stride) + 1.
TensorGrid conv_forward(const TensorGrid& input, const TensorGrid& kernel, std::span<const double> bias,
                        int stride, int padding);

struct ConvGradients {
    TensorGrid input;
    TensorGrid kernel;
    std::vector<double> bias;
};

ConvGradients conv_backward(const TensorGrid& upstream, const TensorGrid& input, const TensorGrid& kernel,
                            int stride, int padding);

/// Factor-2 average pooling over every spatial axis; extents must be even.
TensorGrid avgpool2(const TensorGrid& input);
TensorGrid avgpool2_backward(const TensorGrid& upstream, const Shape& input_shape);

/// Factor-2 nearest-neighbour upsampling over every spatial axis.
TensorGrid nearest_upsample2(const TensorGrid& input);
TensorGrid nearest_upsample2_backward(const TensorGrid& upstream, const Shape& input_shape);

/// max(x, 0); the subgradient at 0 is 0.
TensorGrid relu(const TensorGrid& input);
TensorGrid relu_backward(const TensorGrid& upstream, const TensorGrid& input);

/// weight [M, N] times flattened input (N entries) plus bias [M]; output shape [M].
TensorGrid linear(const TensorGrid& input, const TensorGrid& weight, std::span<const double> bias);

struct LinearGradients {
    TensorGrid input;
    TensorGrid weight;
    TensorGrid bias;
};

LinearGradients linear_backward(const TensorGrid& upstream, const TensorGrid& input, const TensorGrid& weight);

TensorGrid concat_channels(std::span<const TensorGrid> parts);
TensorGrid slice_channels(const TensorGrid& input, std::size_t begin, std::size_t count);

struct CrossEntropyResult {
    double loss = 0.0;
    TensorGrid grad_logits;
};

/// Mean over pixels of -log softmax(logits)[label]; gradient is (softmax - onehot) / pixels.
CrossEntropyResult softmax_cross_entropy(const TensorGrid& logits, const LabelGrid& target);

/// Differentiable operation with cached forward state.
///
/// forward() takes the op's inputs in a fixed order and remembers what backward()
/// needs. backward() takes a gradient with the forward output's shape and returns one
/// gradient per input, each with that input's shape.
class DiffOp {
public:
    virtual ~DiffOp() = default;
    virtual std::string name() const = 0;
    virtual TensorGrid forward(std::span<const TensorGrid> inputs) = 0;
    virtual std::vector<TensorGrid> backward(const TensorGrid& upstream) = 0;
};

/// Inputs: {input, kernel, bias[Cout]}.
class ConvOp final : public DiffOp {
public:
    ConvOp(int stride, int padding);
    std::string name() const override { return "conv"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    int stride_, padding_;
    std::optional<TensorGrid> input_, kernel_;
    Shape out_shape_;
};

class AvgPool2Op final : public DiffOp {
public:
    std::string name() const override { return "avgpool2"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    std::optional<Shape> in_shape_;
    Shape out_shape_;
};

class Upsample2Op final : public DiffOp {
public:
    std::string name() const override { return "nearest_upsample2"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    std::optional<Shape> in_shape_;
    Shape out_shape_;
};

class ReluOp final : public DiffOp {
public:
    std::string name() const override { return "relu"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    std::optional<TensorGrid> input_;
};

/// Inputs: {input (flattened), weight [M, N], bias [M]}.
class LinearOp final : public DiffOp {
public:
    std::string name() const override { return "linear"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    std::optional<TensorGrid> input_, weight_;
};

/// Any number of inputs sharing spatial shape; concatenated along channels.
class ConcatOp final : public DiffOp {
public:
    std::string name() const override { return "concat_channels"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    std::optional<std::vector<Shape>> in_shapes_;
};

/// Scalar ([1]) cross-entropy of the logits input against fixed labels.
class CrossEntropyOp final : public DiffOp {
public:
    explicit CrossEntropyOp(LabelGrid target);
    std::string name() const override { return "softmax_cross_entropy"; }
    TensorGrid forward(std::span<const TensorGrid> inputs) override;
    std::vector<TensorGrid> backward(const TensorGrid& upstream) override;

private:
    LabelGrid target_;
    std::optional<TensorGrid> grad_;
};

}  // namespace panet
