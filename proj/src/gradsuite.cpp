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

#include "panet/gradsuite.hpp"

#include "panet/atlas.hpp"
#include "panet/gradcheck.hpp"
#include "panet/model.hpp"
#include "panet/ops.hpp"
#include "panet/warp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace panet {

namespace {

constexpr double kStep = 1e-5;
constexpr double kPrimitiveTol = 1e-6;
constexpr double kWarpStep = 1e-6;
constexpr double kWarpTol = 1e-5;
// Central differences straddling an interpolation node mix two linear pieces; poses whose
// resampling positions come this close (voxels) to a node are redrawn.
constexpr double kWarpNodeClearance = 1e-4;
constexpr double kModelTol = 1e-4;

TensorGrid random_grid(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    TensorGrid t(shape);
    for (double& v : t.data())
        v = u(rng);
    return t;
}

GradSuiteRow op_row(const std::string& name, DiffOp& op, std::vector<TensorGrid> inputs, double h, double tol,
                    std::uint64_t seed)
{
    const auto r = check_gradient(op, std::move(inputs), h, seed);
    return {name, r.max_relative_error, tol, r.coords_checked};
}

// Smallest distance (in voxels) from any resampling position to a grid-node coordinate;
// linear interpolation is non-smooth there.
double node_clearance(const Shape& spatial, const PoseVector& q)
{
    const auto map = pose_to_affine(q);
    const Mat3 inv = inverse(map.linear);
    const int dim = static_cast<int>(spatial.size());
    const Extent e = extent_of(spatial);
    const std::size_t n[3] = {e.w, e.h, e.d};
    double clearance = 1.0;
    for (std::size_t z = 0; z < e.d; ++z)
        for (std::size_t y = 0; y < e.h; ++y)
            for (std::size_t x = 0; x < e.w; ++x) {
                const std::size_t idx[3] = {x, y, z};
                Vec3 u{0.0, 0.0, 0.0};
                for (int a = 0; a < dim; ++a)
                    u[a] = (2.0 * double(idx[a]) + 1.0) / double(n[a]) - 1.0 - q.translation[a];
                const Vec3 p = mat_vec(inv, u);
                for (int a = 0; a < dim; ++a) {
                    const double c = (p[a] + 1.0) * double(n[a]) / 2.0 - 0.5;
                    clearance = std::min(clearance, std::abs(c - std::round(c)));
                }
            }
    return clearance;
}

GradSuiteRow warp_row(int dim, std::mt19937_64& rng, std::uint64_t seed)
{
    const auto atlas = dim == 3 ? build_synapse_atlas({12, 0.12, 0.15}) : build_disc_cup_atlas({16, 0.3, 0.15, 0.15});
    const auto src = atlas.stacked();
    const auto up = random_grid(src.shape(), rng);
    GradSuiteRow row{"warp_pose_" + std::to_string(dim) + "d", 0.0, kWarpTol, 0};
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> raw(dim == 3 ? 9 : 5);
        PoseVector q;
        do {
            for (double& v : raw)
                v = 0.25 * u(rng);
            q = PoseVector::from_raw(dim, raw);
        } while (node_clearance(atlas.spatial_shape(), q) < kWarpNodeClearance);
        auto params = q.to_vector();
        const auto analytic = warp_grid_pose_gradient(up, src, PoseVector::from_vector(dim, params));
        auto f = [&](std::span<const double> v) {
            return dot(warp_grid(src, PoseVector::from_vector(dim, v)).data(), up.data());
        };
        row.max_relative_error =
            std::max(row.max_relative_error, check_function_gradient(f, params, analytic, kWarpStep, seed + trial));
        row.coords_checked += params.size();
    }
    return row;
}

struct ModelCase {
    ModelParams params;
    TensorGrid x;
    AtlasSet atlas;
    LabelGrid y;
    PoseVector q_true;
};

ModelCase tiny_case(Variant v, std::uint64_t seed)
{
    Architecture a;
    a.variant = v;
    a.depth = 2;
    a.width = 2;
    a.classes = 2;
    a.pose_hidden = 8;
    a.spatial = {8, 8};
    ModelCase c{ModelParams::initialize(a, seed), TensorGrid(), build_disc_cup_atlas({8, 0.4, 0.2, 0.3}),
                LabelGrid(a.spatial), PoseVector::identity(2)};
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // Nonzero biases keep ReLU inputs off the kink (a dead window gives exactly 0 otherwise);
    // a larger pose output layer makes the warp's contribution visible.
    for (auto& p : c.params.parameters()) {
        if (p.value.rank() == 1)
            for (double& v : p.value.data())
                v = 0.1 * u(rng);
        if (p.name == "pose.fc2.w")
            p.value *= 30.0;
    }
    c.x = random_grid({1, 8, 8}, rng);
    std::uniform_int_distribution<int> lab(0, a.classes);
    for (int& v : c.y.data())
        v = lab(rng);
    std::vector<double> raw(5);
    for (double& v : raw)
        v = 0.2 * u(rng);
    c.q_true = PoseVector::from_raw(2, raw);
    return c;
}

// Worst error over every parameter entry whose name does not start with `skip_prefix`.
void check_model(ModelCase& c, const LossOptions& o, const std::string& skip_prefix, GradSuiteRow& row)
{
    c.params.zero_grad();
    loss_and_gradients(c.params, c.x, c.atlas, c.y, c.q_true, o);
    ModelParams probe = c.params;
    for (const auto& p : c.params.parameters()) {
        if (!skip_prefix.empty() && p.name.rfind(skip_prefix, 0) == 0)
            continue;
        double scale = 0.0;
        for (double g : p.grad.data())
            scale = std::max(scale, std::abs(g));
        auto& value = probe.at(p.name).value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + kStep;
            const double lp = loss_and_gradients(probe, c.x, c.atlas, c.y, c.q_true, o).loss;
            value[i] = saved - kStep;
            const double lm = loss_and_gradients(probe, c.x, c.atlas, c.y, c.q_true, o).loss;
            value[i] = saved;
            const double numeric = (lp - lm) / (2.0 * kStep);
            row.max_relative_error = std::max(row.max_relative_error, relative_error(p.grad[i], numeric, scale));
            ++row.coords_checked;
        }
    }
}

GradSuiteRow model_row(Variant v, std::uint64_t seed)
{
    GradSuiteRow row{"model_" + variant_name(v), 0.0, kModelTol, 0};
    auto c = tiny_case(v, seed);
    if (v != Variant::naive) {
        check_model(c, {}, "", row);
    } else {
        // The naive pose stream never receives L_seg, so each loss term is checked
        // against the parameters it actually trains.
        check_model(c, {0.0, 1.0, false}, "", row);
        check_model(c, {1.0, 0.0, false}, "pose", row);
    }
    return row;
}

}  // namespace

std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<GradSuiteRow> rows;
    {
        ConvOp op(1, 1);
        rows.push_back(op_row("conv_2d", op, {random_grid({2, 5, 5}, rng), random_grid({3, 2, 3, 3}, rng),
                                              random_grid({3}, rng)},
                              kStep, kPrimitiveTol, seed));
    }
    {
        ConvOp op(2, 0);
        rows.push_back(op_row("conv_2d_stride2", op, {random_grid({2, 7, 7}, rng), random_grid({2, 2, 3, 3}, rng),
                                                      random_grid({2}, rng)},
                              kStep, kPrimitiveTol, seed));
    }
    {
        ConvOp op(1, 1);
        rows.push_back(op_row("conv_3d", op, {random_grid({2, 4, 4, 4}, rng), random_grid({2, 2, 3, 3, 3}, rng),
                                              random_grid({2}, rng)},
                              kStep, kPrimitiveTol, seed));
    }
    {
        AvgPool2Op op;
        rows.push_back(op_row("avgpool2", op, {random_grid({2, 4, 6}, rng)}, kStep, kPrimitiveTol, seed));
    }
    {
        Upsample2Op op;
        rows.push_back(op_row("nearest_upsample2", op, {random_grid({2, 2, 3, 2}, rng)}, kStep, kPrimitiveTol, seed));
    }
    {
        // Inputs at least 0.1 away from the kink, far beyond 10 * h.
        auto x = random_grid({3, 6, 6}, rng, 0.1, 1.0);
        std::bernoulli_distribution flip(0.5);
        for (double& v : x.data())
            if (flip(rng))
                v = -v;
        ReluOp op;
        rows.push_back(op_row("relu", op, {x}, kStep, kPrimitiveTol, seed));
    }
    {
        // Exactly linear in each input, so a large step only reduces roundoff.
        LinearOp op;
        rows.push_back(op_row("linear", op, {random_grid({2, 3, 3}, rng), random_grid({4, 18}, rng),
                                             random_grid({4}, rng)},
                              1e-2, kPrimitiveTol, seed));
    }
    {
        ConcatOp op;
        rows.push_back(op_row("concat_channels", op, {random_grid({2, 3, 3}, rng), random_grid({1, 3, 3}, rng)},
                              kStep, kPrimitiveTol, seed));
    }
    {
        LabelGrid y({3, 3});
        std::uniform_int_distribution<int> lab(0, 3);
        for (int& v : y.data())
            v = lab(rng);
        CrossEntropyOp op(y);
        rows.push_back(op_row("softmax_cross_entropy", op, {random_grid({4, 3, 3}, rng, -2.0, 2.0)}, kStep,
                              kPrimitiveTol, seed));
    }
    rows.push_back(warp_row(2, rng, seed));
    rows.push_back(warp_row(3, rng, seed));
    for (auto v : {Variant::plain, Variant::panet, Variant::naive})
        rows.push_back(model_row(v, seed));
    return rows;
}

}  // namespace panet
