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

#include "panet/ops.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace panet {

/// Coordinates above this count are subsampled (seeded) by the checkers.
inline constexpr std::size_t kGradCheckMaxCoords = 256;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::vector<double> per_input;  // one entry per op input
    std::size_t coords_checked = 0;
};

/// Relative error of one analytic/numeric pair. `scale` is the largest analytic
/// magnitude of the tensor; denominators are floored at 1e-3 * scale so entries that
/// are numerically zero are judged on the tensor's own scale.
double relative_error(double analytic, double numeric, double scale);

/// Central-difference check of op.backward against the scalar <w, op.forward(inputs)>
/// for a seeded random projection w.
GradCheckResult check_gradient(DiffOp& op, std::vector<TensorGrid> inputs, double h, std::uint64_t seed = 7);

/// Central-difference check of an arbitrary scalar function. `x` is perturbed in
/// place through `f` (restored afterwards); `analytic` must have x's length.
double check_function_gradient(const std::function<double(std::span<const double>)>& f, std::span<double> x,
                               std::span<const double> analytic, double h, std::uint64_t seed = 7);

/// Seeded subset of [0, n): everything when n <= limit.
std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t limit, std::uint64_t seed);

}  // namespace panet
