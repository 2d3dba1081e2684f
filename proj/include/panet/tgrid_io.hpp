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

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace panet {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// TGRID v1 layout: 8-byte magic "TGRID\0v1", u32 little-endian header length,
// UTF-8 JSON header {"shape":[...],"dtype":"f64"}, little-endian f64 payload.
void write_tgrid(std::ostream& out, const TensorGrid& grid);
TensorGrid read_tgrid(std::istream& in);

void save_tgrid(const std::filesystem::path& path, const TensorGrid& grid);
TensorGrid load_tgrid(const std::filesystem::path& path);

// Label grids are stored as TGRID with the spatial shape and integral values.
void save_labels(const std::filesystem::path& path, const LabelGrid& labels);
LabelGrid load_labels(const std::filesystem::path& path);

}  // namespace panet
