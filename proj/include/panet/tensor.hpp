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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace panet {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is used out of order (e.g. backward before forward).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised when a computation produces non-finite values.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Spatial extent normalized to three axes (depth, height, width); 2D grids have depth 1.
struct Extent {
    std::size_t d = 1, h = 1, w = 1;
    std::size_t count() const { return d * h * w; }
    bool operator==(const Extent&) const = default;
};

/// Dense row-major array of doubles. Image-like grids are channels-first:
/// [C, H, W] or [C, D, H, W].
class TensorGrid {
public:
    TensorGrid() = default;
    explicit TensorGrid(Shape shape, double fill = 0.0);
    TensorGrid(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Image-like accessors; valid for rank 3 (2D) or rank 4 (3D) grids.
    std::size_t channels() const;
    std::size_t spatial_rank() const;
    Shape spatial_shape() const;
    Extent extent() const;

    std::span<double> channel(std::size_t c);
    std::span<const double> channel(std::size_t c) const;

    void fill(double value);
    TensorGrid& operator+=(const TensorGrid& other);
    TensorGrid& operator*=(double factor);

    /// Same data, new shape; the element count must agree.
    TensorGrid reshaped(Shape shape) const;

    bool all_finite() const;
    bool operator==(const TensorGrid&) const = default;

private:
    void require_image_like() const;

    Shape shape_;
    std::vector<double> data_;
};

/// Integer class-label map over a 2D or 3D spatial grid (no channel axis).
class LabelGrid {
public:
    LabelGrid() = default;
    explicit LabelGrid(Shape spatial, int fill = 0);
    LabelGrid(Shape spatial, std::vector<int> labels);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return labels_.size(); }
    std::size_t spatial_rank() const { return shape_.size(); }
    Extent extent() const;

    std::span<int> data() { return labels_; }
    std::span<const int> data() const { return labels_; }
    int& operator[](std::size_t i) { return labels_[i]; }
    int operator[](std::size_t i) const { return labels_[i]; }

    int max_label() const;
    bool operator==(const LabelGrid&) const = default;

private:
    Shape shape_;
    std::vector<int> labels_;
};

Extent extent_of(const Shape& spatial);

/// Throws ShapeError with `what` prefixed when the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace panet
