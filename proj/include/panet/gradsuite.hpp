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

#include <cstdint>
#include <string>
#include <vector>

namespace panet {

struct GradSuiteRow {
    std::string name;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    std::size_t coords_checked = 0;
    bool pass() const { return max_relative_error < tolerance; }
};

/// Central-difference checks of every primitive (h = 1e-5, tolerance 1e-6), the warp's
/// pose gradient on smooth atlases (h = 1e-6, 1e-5), and every parameter of the tiny
/// 2D model in each variant (D = 2, C = 2, 8x8 input; h = 1e-5, 1e-4).
std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed = 7);

}  // namespace panet
