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
#include "panet/pose.hpp"
#include "panet/tensor.hpp"

#include <optional>
#include <vector>

namespace panet {

/// Sample positions closer than this (in voxels) to a grid node are snapped onto it, so
/// axis-aligned maps (identity, integer shifts, quarter turns) resample exactly.
inline constexpr double kNodeSnap = 1e-10;

/// Inverse-mapping resampling of every channel of `source` ([K, spatial...]).
///
/// Output location x (normalized coordinates, x/y/z from the last axis backwards) takes
/// the linearly interpolated source value at A^-1(x) with A = pose_to_affine(q). Each
/// interpolation corner outside the grid contributes 0.
TensorGrid warp_grid(const TensorGrid& source, const PoseVector& q);

/// Gradient of <upstream, warp_grid(source, q)> with respect to q, in to_vector() order.
std::vector<double> warp_grid_pose_gradient(const TensorGrid& upstream, const TensorGrid& source,
                                            const PoseVector& q);

/// Converts a gradient in to_vector() coordinates to to_raw() (log-scale) coordinates.
std::vector<double> pose_gradient_to_raw(std::span<const double> grad, const PoseVector& q);

AtlasSet warp(const AtlasSet& atlas, const PoseVector& q);

/// Cached warp: forward() keeps the atlas and pose; backward() returns the pose gradient.
class AtlasWarp {
public:
    AtlasSet forward(const AtlasSet& atlas, const PoseVector& q);

    /// One upstream grid per class, each shaped like the class grids.
    std::vector<double> backward(const std::vector<TensorGrid>& upstream) const;

private:
    std::optional<TensorGrid> source_;
    std::vector<std::string> classes_;
    PoseVector pose_;
};

}  // namespace panet
