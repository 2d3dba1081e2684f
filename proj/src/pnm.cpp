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

#include "panet/pnm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace panet {

namespace {

unsigned char to_byte(double v)
{
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::ofstream open_binary(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

std::vector<double> spatial_slice(const TensorGrid& grid, std::size_t channel, std::size_t depth_index)
{
    const auto e = grid.extent();
    if (depth_index >= e.d)
        throw ShapeError("spatial_slice: depth index out of range");
    const auto plane = e.h * e.w;
    auto ch = grid.channel(channel);
    auto first = ch.begin() + static_cast<std::ptrdiff_t>(depth_index * plane);
    return std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane));
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<double>& values)
{
    if (values.size() != width * height)
        throw ShapeError("write_pgm: value count does not match image size");
    auto out = open_binary(path);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    for (double v : values)
        out.put(static_cast<char>(to_byte(v)));
}

void write_composite_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
                         const std::vector<std::vector<double>>& layers, const std::vector<Rgb>& hues)
{
    if (layers.size() != hues.size())
        throw ShapeError("write_composite_ppm: one hue per layer required");
    for (const auto& l : layers)
        if (l.size() != width * height)
            throw ShapeError("write_composite_ppm: layer size does not match image size");
    auto out = open_binary(path);
    out << "P6\n" << width << ' ' << height << "\n255\n";
    for (std::size_t p = 0; p < width * height; ++p) {
        Rgb px{0.0, 0.0, 0.0};
        for (std::size_t k = 0; k < layers.size(); ++k)
            for (int c = 0; c < 3; ++c)
                px[c] += layers[k][p] * hues[k][c];
        for (int c = 0; c < 3; ++c)
            out.put(static_cast<char>(to_byte(px[c])));
    }
}

Rgb class_hue(std::size_t class_index)
{
    switch (class_index % 3) {
    case 0:
        return {0.0, 1.0, 0.0};
    case 1:
        return {1.0, 0.0, 0.0};
    default:
        return {0.0, 0.0, 1.0};
    }
}

}  // namespace panet
