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

#include "panet/tgrid_io.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace panet {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'G', 'R', 'I', 'D', '\0', 'v', '1'};

void put_u32(std::ostream& out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in)
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("TGRID: truncated header length");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f64(std::ostream& out, double v)
{
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void write_tgrid(std::ostream& out, const TensorGrid& grid)
{
    nlohmann::json header = {{"shape", grid.shape()}, {"dtype", "f64"}};
    const std::string text = header.dump();
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : grid.data())
        put_f64(out, v);
    if (!out)
        throw FormatError("TGRID: write failed");
}

TensorGrid read_tgrid(std::istream& in)
{
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw FormatError("TGRID: bad magic");
    const auto len = get_u32(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), len))
        throw FormatError("TGRID: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("TGRID: malformed header: ") + e.what());
    }
    if (!header.contains("dtype") || header["dtype"] != "f64")
        throw FormatError("TGRID: unsupported dtype");
    if (!header.contains("shape") || !header["shape"].is_array())
        throw FormatError("TGRID: missing shape");
    Shape shape;
    for (const auto& n : header["shape"]) {
        if (!n.is_number_unsigned() || n.get<std::size_t>() == 0)
            throw FormatError("TGRID: shape entries must be positive integers");
        shape.push_back(n.get<std::size_t>());
    }

    std::vector<double> data(shape_product(shape));
    std::vector<unsigned char> raw(data.size() * 8);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw FormatError("TGRID: truncated payload");
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= std::uint64_t(raw[8 * i + b]) << (8 * b);
        data[i] = std::bit_cast<double>(bits);
    }
    return TensorGrid(std::move(shape), std::move(data));
}

void save_tgrid(const std::filesystem::path& path, const TensorGrid& grid)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open " + path.string() + " for writing");
    write_tgrid(out, grid);
}

TensorGrid load_tgrid(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open " + path.string());
    return read_tgrid(in);
}

void save_labels(const std::filesystem::path& path, const LabelGrid& labels)
{
    std::vector<double> values(labels.data().begin(), labels.data().end());
    save_tgrid(path, TensorGrid(labels.shape(), std::move(values)));
}

LabelGrid load_labels(const std::filesystem::path& path)
{
    const auto grid = load_tgrid(path);
    std::vector<int> labels;
    labels.reserve(grid.size());
    for (double v : grid.data()) {
        if (v != std::floor(v))
            throw FormatError(path.string() + ": label grid holds non-integral values");
        labels.push_back(static_cast<int>(v));
    }
    return LabelGrid(grid.shape(), std::move(labels));
}

}  // namespace panet
