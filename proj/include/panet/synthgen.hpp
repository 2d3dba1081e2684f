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

#include "panet/atlas.hpp"
#include "panet/metrics.hpp"
#include "panet/pose.hpp"
#include "panet/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace panet {

enum class Regime { synapse3d, retina2d };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& name);
int regime_dim(Regime r);

/// Pose sampling bounds: |t| per axis, |log s| per axis, rotation angle in degrees
/// (in-plane angle for 2D, angle-axis magnitude for 3D).
struct PoseRanges {
    double translation = 0.25;
    double log_scale = 0.2;
    double rotation_deg = 45.0;
    bool operator==(const PoseRanges&) const = default;
};

struct SceneParams {
    Regime regime = Regime::retina2d;
    int size = 32;
    PoseRanges ranges;
    std::vector<double> class_means;  // background first, then each class
    std::vector<double> class_stds;   // per-class texture; 0 keeps regions flat
    double noise = 0.1;               // additive Gaussian noise sigma
    int distractors = 3;              // ellipses drawn in the background
    double distractor_min_radius = 0.06;  // fraction of size
    double distractor_max_radius = 0.14;
    double cleft_halfwidth = 0.1;     // synapse3d
    double disc_radius = 0.28;        // retina2d
    double cup_radius = 0.14;         // retina2d
    std::uint64_t seed = 1;

    static SceneParams defaults(Regime r);
    std::vector<std::string> class_names() const;
    std::size_t num_classes() const { return class_names().size(); }
    void validate() const;
    bool operator==(const SceneParams&) const = default;
};

/// Canonical atlas of the regime with the given softness.
AtlasSet scene_atlas(const SceneParams& p, double softness);

/// Built-in topology spec matching the regime.
TopologySpec scene_topology(const SceneParams& p);

struct Sample {
    TensorGrid image;   // [1, spatial...]
    LabelGrid labels;   // 0 background, class i at i + 1
    PoseVector pose;
    Regime regime = Regime::retina2d;
};

/// Sample `index` of the stream defined by p.seed; independent of any other index.
///
/// The pose is drawn uniformly from the ranges, the hard atlas is warped and argmaxed to
/// labels, and draws whose labels break the regime's topology are redrawn. The image is
/// per-class intensity plus texture and noise, with distractor ellipses painted over
/// background only.
Sample generate_sample(const SceneParams& p, std::size_t index);

std::vector<Sample> generate(const SceneParams& p, std::size_t n);

/// Per-split sample counts: floor(f * n) each, then the remaining samples go one at a
/// time to the largest fractional parts (earlier split first on ties).
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Seeded disjoint partition of [0, n).
SplitIndices split(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed);

}  // namespace panet
