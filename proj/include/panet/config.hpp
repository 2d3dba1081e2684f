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

#include "panet/metrics.hpp"
#include "panet/synthgen.hpp"
#include "panet/train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace panet {

/// Malformed configuration. The message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

constexpr int kConfigSchemaVersion = 1;

struct SplitCounts {
    std::size_t train = 64, val = 16, test = 32;
    std::size_t total() const { return train + val + test; }
    std::array<double, 3> fractions() const;
    bool operator==(const SplitCounts&) const = default;
};

/// One experiment: scene, dataset split, atlas, training and topology settings.
/// A single master seed drives generation, splitting and initialization.
struct ExperimentConfig {
    SceneParams scene;
    SplitCounts splits;
    double atlas_softness = 0.1;
    TrainConfig train;
    std::string topology = "builtin";  // "builtin" for the regime's spec, "synapse"/"retina", or a JSON path
    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 1;

    static ExperimentConfig defaults(Regime r, std::uint64_t seed);
    void set_seed(std::uint64_t s);
    void validate() const;
    TopologySpec topology_spec() const;

    std::string to_json() const;
    /// Keys other than `regime` and `seed` are optional and fall back to the regime defaults.
    static ExperimentConfig from_json(const std::string& text);
    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Output root: $PANET_OUTPUT_ROOT/<dir> when the variable is set and dir is relative.
std::filesystem::path resolve_output(const std::filesystem::path& dir);

struct Dataset {
    SceneParams scene;
    std::vector<Sample> samples;
    SplitIndices splits;

    std::vector<Sample> subset(const std::vector<std::size_t>& indices) const;
};

/// Generates and splits the dataset described by the config.
Dataset build_dataset(const ExperimentConfig& config);

// Dataset directory: manifest.json plus samples/<index>.image.tgrid, .labels.tgrid and .pose.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace panet
