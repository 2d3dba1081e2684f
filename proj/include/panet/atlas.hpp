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
#include <map>
#include <string>
#include <vector>

namespace panet {

/// Per-class probability grids over a shared 2D or 3D spatial grid.
///
/// Background is implicit: at every location it carries 1 - sum(classes), so the class
/// probabilities lie in [0, 1] and sum to at most 1. Atlases live in a canonical
/// centered pose; pose variation is applied by warping.
struct AtlasSet {
    std::vector<std::string> classes;
    std::vector<TensorGrid> grids;  // one [1, spatial...] grid per class
    std::string builder;            // "synapse", "disc_cup", or empty for custom data
    std::map<std::string, double> parameters;

    std::size_t num_classes() const { return classes.size(); }
    Shape spatial_shape() const;
    int spatial_rank() const;

    /// Class grids stacked along the channel axis: [K, spatial...].
    TensorGrid stacked() const;
    static AtlasSet from_stacked(std::vector<std::string> classes, const TensorGrid& stacked);

    /// Throws std::invalid_argument when bounds, the sub-simplex sum, or shapes are violated.
    void validate(double tolerance = 1e-12) const;
};

struct SynapseAtlasParams {
    int size = 16;
    double cleft_halfwidth = 0.1;  // fraction of size
    double softness = 0.0;         // ramp width, fraction of size
};

/// Semi-axes of the synapse atlas' ellipsoidal support, as fractions of the grid size
/// along x, y, z. The unequal axes make in-range orientations distinguishable.
inline constexpr double kSynapseSupportX = 0.42;
inline constexpr double kSynapseSupportY = 0.30;
inline constexpr double kSynapseSupportZ = 0.40;

/// Three parallel slabs along z (pre below, cleft band, post above) clipped to an
/// axis-aligned ellipsoid centered in a size^3 cube.
AtlasSet build_synapse_atlas(const SynapseAtlasParams& p);

struct DiscCupAtlasParams {
    int size = 32;
    double disc_radius = 0.28;  // fraction of size
    double cup_radius = 0.14;   // fraction of size
    double softness = 0.0;
};

/// Concentric profiles centered in a size^2 grid: cup inside cup_radius, disc on the
/// annulus between cup_radius and disc_radius.
AtlasSet build_disc_cup_atlas(const DiscCupAtlasParams& p);

/// Average-pools every class grid by `divisor` in {1, 2, 4, 8}.
AtlasSet rescale_atlas(const AtlasSet& atlas, int divisor);

/// Label map of the atlas including the implicit background (label 0, classes from 1);
/// ties resolve toward the lower label.
LabelGrid atlas_argmax(const AtlasSet& atlas);

// Atlas directory: atlas.json (classes, shape, builder parameters) + <class>.tgrid.
void save_atlas(const std::filesystem::path& dir, const AtlasSet& atlas);
AtlasSet load_atlas(const std::filesystem::path& dir);

/// One grayscale PGM per class (central z slice for 3D) plus a composite color PPM.
void write_atlas_previews(const std::filesystem::path& dir, const AtlasSet& atlas, const std::string& prefix);

}  // namespace panet
