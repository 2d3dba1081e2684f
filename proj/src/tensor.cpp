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

#include "panet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace panet {

std::string shape_to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_product(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

static void require_positive(const Shape& shape)
{
    if (shape.empty())
        throw ShapeError("tensor shape must have at least one axis");
    for (auto n : shape)
        if (n == 0)
            throw ShapeError("tensor shape " + shape_to_string(shape) + " has a zero extent");
}

TensorGrid::TensorGrid(Shape shape, double fill)
    : shape_(std::move(shape))
{
    require_positive(shape_);
    data_.assign(shape_product(shape_), fill);
}

TensorGrid::TensorGrid(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    require_positive(shape_);
    if (data_.size() != shape_product(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
}

void TensorGrid::require_image_like() const
{
    if (shape_.size() != 3 && shape_.size() != 4)
        throw ShapeError("expected a channels-first 2D or 3D grid, got shape " + shape_to_string(shape_));
}

std::size_t TensorGrid::channels() const
{
    require_image_like();
    return shape_[0];
}

std::size_t TensorGrid::spatial_rank() const
{
    require_image_like();
    return shape_.size() - 1;
}

Shape TensorGrid::spatial_shape() const
{
    require_image_like();
    return Shape(shape_.begin() + 1, shape_.end());
}

Extent TensorGrid::extent() const
{
    return extent_of(spatial_shape());
}

std::span<double> TensorGrid::channel(std::size_t c)
{
    const auto n = extent().count();
    return std::span<double>(data_).subspan(c * n, n);
}

std::span<const double> TensorGrid::channel(std::size_t c) const
{
    const auto n = extent().count();
    return std::span<const double>(data_).subspan(c * n, n);
}

void TensorGrid::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

TensorGrid& TensorGrid::operator+=(const TensorGrid& other)
{
    require_same_shape(shape_, other.shape_, "tensor accumulate");
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] += other.data_[i];
    return *this;
}

TensorGrid& TensorGrid::operator*=(double factor)
{
    for (auto& v : data_)
        v *= factor;
    return *this;
}

TensorGrid TensorGrid::reshaped(Shape shape) const
{
    if (shape_product(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    return TensorGrid(std::move(shape), data_);
}

bool TensorGrid::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LabelGrid::LabelGrid(Shape spatial, int fill)
    : shape_(std::move(spatial))
{
    if (shape_.size() != 2 && shape_.size() != 3)
        throw ShapeError("label grid must be 2D or 3D, got " + shape_to_string(shape_));
    require_positive(shape_);
    labels_.assign(shape_product(shape_), fill);
}

LabelGrid::LabelGrid(Shape spatial, std::vector<int> labels)
    : shape_(std::move(spatial)), labels_(std::move(labels))
{
    if (shape_.size() != 2 && shape_.size() != 3)
        throw ShapeError("label grid must be 2D or 3D, got " + shape_to_string(shape_));
    require_positive(shape_);
    if (labels_.size() != shape_product(shape_))
        throw ShapeError("label count does not match shape " + shape_to_string(shape_));
}

Extent LabelGrid::extent() const
{
    return extent_of(shape_);
}

int LabelGrid::max_label() const
{
    return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
}

Extent extent_of(const Shape& spatial)
{
    if (spatial.size() == 2)
        return {1, spatial[0], spatial[1]};
    if (spatial.size() == 3)
        return {spatial[0], spatial[1], spatial[2]};
    throw ShapeError("expected 2 or 3 spatial axes, got " + shape_to_string(spatial));
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what)
{
    if (a != b)
        throw ShapeError(what + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

}  // namespace panet
