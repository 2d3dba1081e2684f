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

#include <array>
#include <filesystem>
#include <vector>

namespace panet {

using Rgb = std::array<double, 3>;

/// 2D slice of a single-channel grid: the grid itself for 2D, the z = depth index for 3D.
std::vector<double> spatial_slice(const TensorGrid& grid, std::size_t channel, std::size_t depth_index);

/// Binary P5 graymap; values are clamped to [0, 1] and scaled to 0..255.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<double>& values);

/// Binary P6 pixmap from per-class intensities and hues: each class contributes its hue
/// weighted by its value (saturation proportional to probability).
void write_composite_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
                         const std::vector<std::vector<double>>& layers, const std::vector<Rgb>& hues);

/// Class hues: first class green, second red, third blue, then repeats.
Rgb class_hue(std::size_t class_index);

}  // namespace panet
