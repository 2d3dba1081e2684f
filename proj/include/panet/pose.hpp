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

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace panet {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // row-major: m[row][col]

Mat3 identity3();
Mat3 matmul(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);
Vec3 mat_vec(const Mat3& m, const Vec3& v);
double determinant(const Mat3& m);
Mat3 inverse(const Mat3& m);
Mat3 skew(const Vec3& v);

/// Rotations below this angle (radians) use the second-order series.
inline constexpr double kSmallAngle = 1e-8;

/// Rodrigues' formula for an angle-axis vector (direction = axis, norm = angle).
Mat3 angle_axis_to_matrix(const Vec3& r);

/// Partial derivatives dR/dr_i of angle_axis_to_matrix, i = 0..2.
std::array<Mat3, 3> angle_axis_jacobian(const Vec3& r);

/// Rotation angle of R in radians.
double rotation_angle(const Mat3& rotation);

/// Affine registration parameters.
///
/// Components are stored in 3D form. A 2D pose uses x/y translation and scale and a
/// single in-plane angle carried as rotation about z (rotation[2]); the z entries stay at
/// their identity values. Translations are in normalized units where [-1, 1] spans the
/// grid, scales are ratios, rotations are radians.
struct PoseVector {
    int dim = 2;
    Vec3 translation{0.0, 0.0, 0.0};
    Vec3 scale{1.0, 1.0, 1.0};
    Vec3 rotation{0.0, 0.0, 0.0};

    static PoseVector identity(int dim);

    /// Parameter count: 5 for 2D, 9 for 3D.
    std::size_t size() const { return dim == 3 ? 9 : 5; }

    /// [tx, ty, tz, sx, sy, sz, rx, ry, rz] or [tx, ty, sx, sy, r].
    std::vector<double> to_vector() const;
    static PoseVector from_vector(int dim, std::span<const double> values);

    /// Same layout as to_vector() but with log-scales, the unconstrained space the
    /// network predicts in and the pose loss is measured in.
    std::vector<double> to_raw() const;
    static PoseVector from_raw(int dim, std::span<const double> raw);

    Mat3 rotation_matrix() const;
    void validate() const;
    bool operator==(const PoseVector&) const = default;
};

/// Names of the pose components in to_vector() order.
std::vector<std::string> pose_component_names(int dim);

/// x -> linear * x + offset in normalized coordinates (x, y, z order).
struct AffineMap {
    Mat3 linear = identity3();
    Vec3 offset{0.0, 0.0, 0.0};

    Vec3 operator()(const Vec3& x) const;
};

/// Scale, then rotate, then translate: linear = R(r) * diag(s), offset = t.
AffineMap pose_to_affine(const PoseVector& q);

struct PoseLoss {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean squared componentwise difference and its gradient 2 (pred - truth) / n.
PoseLoss pose_loss(std::span<const double> pred, std::span<const double> truth);

struct PoseErrors {
    double orientation_deg = 0.0;
    double localization_px = 0.0;
};

/// Relative rotation angle in degrees and translation distance in pixels
/// (normalized units times grid_size / 2).
PoseErrors pose_errors(const PoseVector& pred, const PoseVector& truth, double grid_size);

// Pose file: JSON array of {"name": ..., "value": ...}; angles in radians.
void save_pose(const std::filesystem::path& path, const PoseVector& q);
PoseVector load_pose(const std::filesystem::path& path);
std::string pose_to_json(const PoseVector& q);
PoseVector pose_from_json(const std::string& text);

}  // namespace panet
