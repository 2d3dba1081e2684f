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

#include "panet/pose.hpp"

#include "panet/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace panet {

Mat3 identity3()
{
    return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

Mat3 matmul(const Mat3& a, const Mat3& b)
{
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    return c;
}

Mat3 transpose(const Mat3& m)
{
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            t[i][j] = m[j][i];
    return t;
}

Vec3 mat_vec(const Mat3& m, const Vec3& v)
{
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double determinant(const Mat3& m)
{
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

Mat3 inverse(const Mat3& m)
{
    const double det = determinant(m);
    if (!(std::abs(det) > 1e-12))
        throw std::domain_error("affine map is not invertible (det = " + std::to_string(det) + ")");
    Mat3 inv{};
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

Mat3 skew(const Vec3& v)
{
    return {{{0.0, -v[2], v[1]}, {v[2], 0.0, -v[0]}, {-v[1], v[0], 0.0}}};
}

namespace {

Mat3 add(const Mat3& a, const Mat3& b, double fb = 1.0)
{
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            c[i][j] = a[i][j] + fb * b[i][j];
    return c;
}

Mat3 scaled(const Mat3& a, double f)
{
    Mat3 c = a;
    for (auto& row : c)
        for (auto& v : row)
            v *= f;
    return c;
}

Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& v)
{
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

// Below this angle the closed-form Jacobian loses digits to cancellation.
constexpr double kSmallJacobianAngle = 1e-6;

}  // namespace

Mat3 angle_axis_to_matrix(const Vec3& r)
{
    const double theta = norm(r);
    const Mat3 k = skew(r);
    const Mat3 k2 = matmul(k, k);
    if (theta < kSmallAngle)
        return add(add(identity3(), k), k2, 0.5);
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    return add(add(identity3(), k, a), k2, b);
}

std::array<Mat3, 3> angle_axis_jacobian(const Vec3& r)
{
    const double theta = norm(r);
    std::array<Mat3, 3> out{};
    const Mat3 k = skew(r);
    for (int i = 0; i < 3; ++i) {
        Vec3 e{0.0, 0.0, 0.0};
        e[i] = 1.0;
        const Mat3 ei = skew(e);
        if (theta < kSmallJacobianAngle) {
            out[i] = add(ei, add(matmul(ei, k), matmul(k, ei)), 0.5);
            continue;
        }
        // dR/dr_i = (r_i [r]x + [r x (I - R) e_i]x) R / |r|^2
        const Mat3 rot = angle_axis_to_matrix(r);
        const Vec3 col{-rot[0][i], -rot[1][i], -rot[2][i]};
        Vec3 ie_minus_re = col;
        ie_minus_re[i] += 1.0;
        const Mat3 lhs = add(scaled(k, r[i]), skew(cross(r, ie_minus_re)));
        out[i] = scaled(matmul(lhs, rot), 1.0 / (theta * theta));
    }
    return out;
}

double rotation_angle(const Mat3& rotation)
{
    // atan2 form stays accurate near 0 and pi where acos is ill-conditioned.
    const Vec3 axis{rotation[2][1] - rotation[1][2], rotation[0][2] - rotation[2][0], rotation[1][0] - rotation[0][1]};
    const double s = 0.5 * norm(axis);
    const double c = 0.5 * (rotation[0][0] + rotation[1][1] + rotation[2][2] - 1.0);
    return std::atan2(s, c);
}

PoseVector PoseVector::identity(int dim)
{
    PoseVector q;
    q.dim = dim;
    q.validate();
    return q;
}

std::vector<double> PoseVector::to_vector() const
{
    if (dim == 3)
        return {translation[0], translation[1], translation[2], scale[0], scale[1],
                scale[2],       rotation[0],    rotation[1],    rotation[2]};
    return {translation[0], translation[1], scale[0], scale[1], rotation[2]};
}

PoseVector PoseVector::from_vector(int dim, std::span<const double> v)
{
    PoseVector q;
    q.dim = dim;
    if (dim == 3) {
        if (v.size() != 9)
            throw ShapeError("3D pose needs 9 components, got " + std::to_string(v.size()));
        q.translation = {v[0], v[1], v[2]};
        q.scale = {v[3], v[4], v[5]};
        q.rotation = {v[6], v[7], v[8]};
    } else if (dim == 2) {
        if (v.size() != 5)
            throw ShapeError("2D pose needs 5 components, got " + std::to_string(v.size()));
        q.translation = {v[0], v[1], 0.0};
        q.scale = {v[2], v[3], 1.0};
        q.rotation = {0.0, 0.0, v[4]};
    } else {
        throw ShapeError("pose dimension must be 2 or 3");
    }
    q.validate();
    return q;
}

std::vector<double> PoseVector::to_raw() const
{
    auto v = to_vector();
    const std::size_t first = dim == 3 ? 3 : 2;
    for (std::size_t i = first; i < first + static_cast<std::size_t>(dim); ++i)
        v[i] = std::log(v[i]);
    return v;
}

PoseVector PoseVector::from_raw(int dim, std::span<const double> raw)
{
    std::vector<double> v(raw.begin(), raw.end());
    const std::size_t first = dim == 3 ? 3 : 2;
    if (v.size() == (dim == 3 ? 9u : 5u))
        for (std::size_t i = first; i < first + static_cast<std::size_t>(dim); ++i)
            v[i] = std::exp(v[i]);
    return from_vector(dim, v);
}

Mat3 PoseVector::rotation_matrix() const
{
    return angle_axis_to_matrix(rotation);
}

void PoseVector::validate() const
{
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("pose dimension must be 2 or 3");
    for (int i = 0; i < 3; ++i) {
        if (!std::isfinite(translation[i]) || !std::isfinite(scale[i]) || !std::isfinite(rotation[i]))
            throw std::invalid_argument("pose components must be finite");
        if (!(scale[i] > 0.0))
            throw std::invalid_argument("pose scales must be positive");
    }
    if (dim == 2 && (translation[2] != 0.0 || scale[2] != 1.0 || rotation[0] != 0.0 || rotation[1] != 0.0))
        throw std::invalid_argument("2D pose carries out-of-plane components");
}

std::vector<std::string> pose_component_names(int dim)
{
    if (dim == 3)
        return {"tx", "ty", "tz", "sx", "sy", "sz", "rx", "ry", "rz"};
    return {"tx", "ty", "sx", "sy", "r"};
}

Vec3 AffineMap::operator()(const Vec3& x) const
{
    auto y = mat_vec(linear, x);
    for (int i = 0; i < 3; ++i)
        y[i] += offset[i];
    return y;
}

AffineMap pose_to_affine(const PoseVector& q)
{
    q.validate();
    AffineMap map;
    const Mat3 rot = q.rotation_matrix();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            map.linear[i][j] = rot[i][j] * q.scale[j];
    map.offset = q.translation;
    return map;
}

PoseLoss pose_loss(std::span<const double> pred, std::span<const double> truth)
{
    if (pred.size() != truth.size() || pred.empty())
        throw ShapeError("pose_loss: dimension mismatch (" + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()) + ")");
    PoseLoss out;
    out.grad.resize(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        out.loss += d * d;
        out.grad[i] = 2.0 * d / n;
    }
    out.loss /= n;
    return out;
}

PoseErrors pose_errors(const PoseVector& pred, const PoseVector& truth, double grid_size)
{
    if (pred.dim != truth.dim)
        throw ShapeError("pose_errors: dimension mismatch");
    const Mat3 rel = matmul(transpose(pred.rotation_matrix()), truth.rotation_matrix());
    PoseErrors e;
    e.orientation_deg = rotation_angle(rel) * 180.0 / std::numbers::pi;
    double d2 = 0.0;
    for (int i = 0; i < pred.dim; ++i) {
        const double d = pred.translation[i] - truth.translation[i];
        d2 += d * d;
    }
    e.localization_px = std::sqrt(d2) * grid_size / 2.0;
    return e;
}

std::string pose_to_json(const PoseVector& q)
{
    nlohmann::json arr = nlohmann::json::array();
    const auto names = pose_component_names(q.dim);
    const auto values = q.to_vector();
    for (std::size_t i = 0; i < names.size(); ++i)
        arr.push_back({{"name", names[i]}, {"value", values[i]}});
    return arr.dump(2);
}

PoseVector pose_from_json(const std::string& text)
{
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("pose: malformed JSON: ") + e.what());
    }
    if (!arr.is_array() || (arr.size() != 5 && arr.size() != 9))
        throw std::invalid_argument("pose: expected an array of 5 or 9 named components");
    const int dim = arr.size() == 9 ? 3 : 2;
    const auto names = pose_component_names(dim);
    std::vector<double> values;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& item = arr[i];
        if (!item.is_object() || !item.contains("name") || !item.contains("value") || !item["value"].is_number())
            throw std::invalid_argument("pose[" + std::to_string(i) + "]: expected {\"name\", \"value\"}");
        if (item["name"] != names[i])
            throw std::invalid_argument("pose[" + std::to_string(i) + "]: expected component '" + names[i] + "'");
        values.push_back(item["value"].get<double>());
    }
    return PoseVector::from_vector(dim, values);
}

void save_pose(const std::filesystem::path& path, const PoseVector& q)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << pose_to_json(q) << '\n';
}

PoseVector load_pose(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return pose_from_json(ss.str());
}

}  // namespace panet
