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

#include "panet/warp.hpp"

#include "panet/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace panet {

namespace {

struct Axis {
    std::size_t n = 1;
    double center = 0.0;  // (n - 1) / 2
    double half = 0.5;    // n / 2: voxels per normalized unit
};

// Axis geometry in x, y, z order; z is inactive for 2D grids.
struct Frame {
    int dim = 2;
    std::array<Axis, 3> axis;
    std::size_t channels = 0;
    Extent extent;
};

Frame make_frame(const TensorGrid& source, const PoseVector& q)
{
    Frame f;
    f.dim = static_cast<int>(source.spatial_rank());
    if (f.dim != q.dim)
        throw ShapeError("warp: " + std::to_string(q.dim) + "D pose applied to " + std::to_string(f.dim) + "D grid");
    f.channels = source.channels();
    f.extent = source.extent();
    const std::size_t n[3] = {f.extent.w, f.extent.h, f.extent.d};
    for (int a = 0; a < 3; ++a) {
        f.axis[a].n = n[a];
        f.axis[a].center = (double(n[a]) - 1.0) / 2.0;
        f.axis[a].half = double(n[a]) / 2.0;
    }
    return f;
}

// Maps an output voxel index to a continuous source index.
struct IndexMap {
    Mat3 m{};      // index-space linear part
    Vec3 b{};      // index-space offset
    Mat3 inv_lin;  // normalized-space inverse linear part diag(1/s) R^T
};

IndexMap make_index_map(const Frame& f, const PoseVector& q)
{
    q.validate();
    const Mat3 rot = q.rotation_matrix();
    IndexMap map;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            map.inv_lin[a][b] = rot[b][a] / q.scale[a];
    if (!(std::abs(determinant(map.inv_lin)) > 1e-9))
        throw std::domain_error("warp: affine map is not invertible");
    // c_a = center_a + sum_b inv_ab (n_a / n_b)(i_b - center_b) - half_a sum_b inv_ab t_b
    for (int a = 0; a < f.dim; ++a) {
        double shift = 0.0;
        double offset = f.axis[a].center;
        for (int b = 0; b < f.dim; ++b) {
            map.m[a][b] = map.inv_lin[a][b] * (double(f.axis[a].n) / double(f.axis[b].n));
            offset -= map.m[a][b] * f.axis[b].center;
            shift += map.inv_lin[a][b] * q.translation[b];
        }
        map.b[a] = offset - f.axis[a].half * shift;
    }
    return map;
}

double snap(double c)
{
    const double r = std::round(c);
    return std::abs(c - r) < kNodeSnap ? r : c;
}

// Linear interpolation stencil along one axis: base index and the two weights.
struct Stencil {
    long long i0;
    double w0, w1;
};

Stencil stencil(double c)
{
    const double fl = std::floor(c);
    const double t = c - fl;
    return {static_cast<long long>(fl), 1.0 - t, t};
}

bool inside(long long i, std::size_t n)
{
    return i >= 0 && i < static_cast<long long>(n);
}

template <typename Visit>
void for_each_output(const Frame& f, const IndexMap& map, Visit&& visit)
{
    const Extent& e = f.extent;
    for (std::size_t z = 0; z < e.d; ++z)
        for (std::size_t y = 0; y < e.h; ++y)
            for (std::size_t x = 0; x < e.w; ++x) {
                const double idx[3] = {double(x), double(y), double(z)};
                Vec3 c{0.0, 0.0, 0.0};
                for (int a = 0; a < f.dim; ++a) {
                    double v = map.b[a];
                    for (int b = 0; b < f.dim; ++b)
                        v += map.m[a][b] * idx[b];
                    c[a] = snap(v);
                }
                visit((z * e.h + y) * e.w + x, c, idx);
            }
}

}  // namespace

TensorGrid warp_grid(const TensorGrid& source, const PoseVector& q)
{
    const Frame f = make_frame(source, q);
    const IndexMap map = make_index_map(f, q);
    TensorGrid out(source.shape());
    const Extent& e = f.extent;
    const std::size_t plane = e.count();

    for_each_output(f, map, [&](std::size_t o, const Vec3& c, const double*) {
        const Stencil sx = stencil(c[0]), sy = stencil(c[1]);
        const Stencil sz = f.dim == 3 ? stencil(c[2]) : Stencil{0, 1.0, 0.0};
        for (int dz = 0; dz < (f.dim == 3 ? 2 : 1); ++dz) {
            const long long iz = sz.i0 + dz;
            const double wz = dz ? sz.w1 : sz.w0;
            if (!inside(iz, e.d) || wz == 0.0)
                continue;
            for (int dy = 0; dy < 2; ++dy) {
                const long long iy = sy.i0 + dy;
                const double wy = dy ? sy.w1 : sy.w0;
                if (!inside(iy, e.h) || wy == 0.0)
                    continue;
                for (int dx = 0; dx < 2; ++dx) {
                    const long long ix = sx.i0 + dx;
                    const double wx = dx ? sx.w1 : sx.w0;
                    if (!inside(ix, e.w) || wx == 0.0)
                        continue;
                    const double w = wz * wy * wx;
                    const std::size_t src = (std::size_t(iz) * e.h + std::size_t(iy)) * e.w + std::size_t(ix);
                    for (std::size_t k = 0; k < f.channels; ++k)
                        out[k * plane + o] += w * source[k * plane + src];
                }
            }
        }
    });
    return out;
}

std::vector<double> warp_grid_pose_gradient(const TensorGrid& upstream, const TensorGrid& source,
                                            const PoseVector& q)
{
    require_same_shape(upstream.shape(), source.shape(), "warp backward upstream");
    const Frame f = make_frame(source, q);
    const IndexMap map = make_index_map(f, q);
    const Mat3 rot = q.rotation_matrix();
    const Extent& e = f.extent;
    const std::size_t plane = e.count();

    Vec3 g_t{0.0, 0.0, 0.0}, g_s{0.0, 0.0, 0.0};
    Mat3 outer{};  // sum of d g_u^T, contracted with dR/dr afterwards

    for_each_output(f, map, [&](std::size_t o, const Vec3& c, const double* idx) {
        // dvalue/dc for the upstream-weighted channel sum.
        Vec3 g_c{0.0, 0.0, 0.0};
        const Stencil sx = stencil(c[0]), sy = stencil(c[1]);
        const Stencil sz = f.dim == 3 ? stencil(c[2]) : Stencil{0, 1.0, 0.0};
        for (int dz = 0; dz < (f.dim == 3 ? 2 : 1); ++dz) {
            const long long iz = sz.i0 + dz;
            if (!inside(iz, e.d))
                continue;
            const double wz = dz ? sz.w1 : sz.w0, dwz = dz ? 1.0 : -1.0;
            for (int dy = 0; dy < 2; ++dy) {
                const long long iy = sy.i0 + dy;
                if (!inside(iy, e.h))
                    continue;
                const double wy = dy ? sy.w1 : sy.w0, dwy = dy ? 1.0 : -1.0;
                for (int dx = 0; dx < 2; ++dx) {
                    const long long ix = sx.i0 + dx;
                    if (!inside(ix, e.w))
                        continue;
                    const double wx = dx ? sx.w1 : sx.w0, dwx = dx ? 1.0 : -1.0;
                    const std::size_t src = (std::size_t(iz) * e.h + std::size_t(iy)) * e.w + std::size_t(ix);
                    double v = 0.0;
                    for (std::size_t k = 0; k < f.channels; ++k)
                        v += upstream[k * plane + o] * source[k * plane + src];
                    g_c[0] += dwx * wy * wz * v;
                    g_c[1] += wx * dwy * wz * v;
                    if (f.dim == 3)
                        g_c[2] += wx * wy * dwz * v;
                }
            }
        }
        if (g_c[0] == 0.0 && g_c[1] == 0.0 && g_c[2] == 0.0)
            return;

        // Chain through c = p * half + center, p = diag(1/s) R^T (x - t).
        Vec3 d{0.0, 0.0, 0.0}, p{0.0, 0.0, 0.0}, g_u{0.0, 0.0, 0.0};
        for (int a = 0; a < f.dim; ++a)
            d[a] = (idx[a] - f.axis[a].center) / f.axis[a].half - q.translation[a];
        for (int a = 0; a < f.dim; ++a)
            for (int b = 0; b < f.dim; ++b)
                p[a] += map.inv_lin[a][b] * d[b];
        for (int a = 0; a < f.dim; ++a) {
            const double g_p = g_c[a] * f.axis[a].half;
            g_s[a] -= g_p * p[a] / q.scale[a];
            g_u[a] = g_p / q.scale[a];
        }
        const Vec3 r_gu = mat_vec(rot, g_u);
        for (int a = 0; a < f.dim; ++a)
            g_t[a] -= r_gu[a];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                outer[a][b] += d[a] * g_u[b];
    });

    const auto jac = angle_axis_jacobian(q.rotation);
    Vec3 g_r{0.0, 0.0, 0.0};
    for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                g_r[i] += jac[i][a][b] * outer[a][b];

    if (f.dim == 3)
        return {g_t[0], g_t[1], g_t[2], g_s[0], g_s[1], g_s[2], g_r[0], g_r[1], g_r[2]};
    return {g_t[0], g_t[1], g_s[0], g_s[1], g_r[2]};
}

std::vector<double> pose_gradient_to_raw(std::span<const double> grad, const PoseVector& q)
{
    std::vector<double> raw(grad.begin(), grad.end());
    if (raw.size() != q.size())
        throw ShapeError("pose gradient length does not match pose dimension");
    const std::size_t first = q.dim == 3 ? 3 : 2;
    for (int a = 0; a < q.dim; ++a)
        raw[first + std::size_t(a)] *= q.scale[a];
    return raw;
}

AtlasSet warp(const AtlasSet& atlas, const PoseVector& q)
{
    auto out = AtlasSet::from_stacked(atlas.classes, warp_grid(atlas.stacked(), q));
    out.builder = atlas.builder;
    out.parameters = atlas.parameters;
    return out;
}

AtlasSet AtlasWarp::forward(const AtlasSet& atlas, const PoseVector& q)
{
    source_ = atlas.stacked();
    classes_ = atlas.classes;
    pose_ = q;
    return AtlasSet::from_stacked(atlas.classes, warp_grid(*source_, q));
}

std::vector<double> AtlasWarp::backward(const std::vector<TensorGrid>& upstream) const
{
    if (!source_)
        throw StateError("warp: backward called before forward");
    if (upstream.size() != classes_.size())
        throw ShapeError("warp backward: expected one upstream grid per class");
    return warp_grid_pose_gradient(concat_channels(upstream), *source_, pose_);
}

}  // namespace panet
