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

#include "panet/synthgen.hpp"

#include "panet/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace panet {

namespace {

// Redraw budget for poses whose labels break the topology.
constexpr int kMaxPoseAttempts = 200;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

PoseVector draw_pose(const SceneParams& p, std::mt19937_64& rng)
{
    const int dim = regime_dim(p.regime);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    PoseVector q = PoseVector::identity(dim);
    for (int a = 0; a < dim; ++a)
        q.translation[a] = p.ranges.translation * unit(rng);
    for (int a = 0; a < dim; ++a)
        q.scale[a] = std::exp(p.ranges.log_scale * unit(rng));
    const double max_angle = p.ranges.rotation_deg * std::numbers::pi / 180.0;
    if (dim == 2) {
        q.rotation[2] = max_angle * unit(rng);
    } else {
        std::normal_distribution<double> normal;
        Vec3 axis{normal(rng), normal(rng), normal(rng)};
        const double len = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        const double angle = max_angle * 0.5 * (unit(rng) + 1.0);
        for (int a = 0; a < 3; ++a)
            q.rotation[a] = len > 0.0 ? axis[a] / len * angle : 0.0;
    }
    return q;
}

}  // namespace

std::string regime_name(Regime r)
{
    return r == Regime::synapse3d ? "synapse3d" : "retina2d";
}

Regime parse_regime(const std::string& name)
{
    if (name == "synapse3d")
        return Regime::synapse3d;
    if (name == "retina2d")
        return Regime::retina2d;
    throw std::invalid_argument("unknown regime '" + name + "' (expected synapse3d or retina2d)");
}

int regime_dim(Regime r)
{
    return r == Regime::synapse3d ? 3 : 2;
}

SceneParams SceneParams::defaults(Regime r)
{
    SceneParams p;
    p.regime = r;
    if (r == Regime::synapse3d) {
        p.size = 16;
        p.ranges = {0.25, 0.2, 30.0};
        p.class_means = {0.15, 0.45, 0.9, 0.65};
        p.distractors = 2;
    } else {
        p.size = 32;
        p.ranges = {0.25, 0.2, 45.0};
        p.class_means = {0.15, 0.5, 0.85};
        p.distractors = 3;
    }
    p.class_stds.assign(p.class_means.size(), 0.0);
    return p;
}

std::vector<std::string> SceneParams::class_names() const
{
    if (regime == Regime::synapse3d)
        return {"pre", "cleft", "post"};
    return {"disc", "cup"};
}

void SceneParams::validate() const
{
    if (size < 8)
        throw std::invalid_argument("scene: size must be >= 8");
    const std::size_t k = num_classes() + 1;
    if (class_means.size() != k || class_stds.size() != k)
        throw std::invalid_argument("scene: class_means and class_stds need " + std::to_string(k) +
                                    " entries (background first)");
    for (double m : class_means)
        if (!(m >= 0.0 && m <= 1.0))
            throw std::invalid_argument("scene: class intensities must lie in [0, 1]");
    for (double s : class_stds)
        if (!(s >= 0.0))
            throw std::invalid_argument("scene: class_stds must be >= 0");
    if (!(noise >= 0.0))
        throw std::invalid_argument("scene: noise must be >= 0");
    if (!(ranges.translation >= 0.0 && ranges.translation < 1.0))
        throw std::invalid_argument("scene: translation range must lie in [0, 1)");
    if (!(ranges.log_scale >= 0.0 && ranges.log_scale < 1.0))
        throw std::invalid_argument("scene: log_scale range must lie in [0, 1)");
    if (!(ranges.rotation_deg >= 0.0 && ranges.rotation_deg <= 180.0))
        throw std::invalid_argument("scene: rotation range must lie in [0, 180] degrees");
    if (distractors < 0)
        throw std::invalid_argument("scene: distractors must be >= 0");
    if (!(distractor_min_radius > 0.0 && distractor_min_radius <= distractor_max_radius))
        throw std::invalid_argument("scene: distractor radii must satisfy 0 < min <= max");
}

AtlasSet scene_atlas(const SceneParams& p, double softness)
{
    if (p.regime == Regime::synapse3d)
        return build_synapse_atlas({p.size, p.cleft_halfwidth, softness});
    return build_disc_cup_atlas({p.size, p.disc_radius, p.cup_radius, softness});
}

TopologySpec scene_topology(const SceneParams& p)
{
    return p.regime == Regime::synapse3d ? TopologySpec::synapse() : TopologySpec::retina();
}

Sample generate_sample(const SceneParams& p, std::size_t index)
{
    p.validate();
    std::mt19937_64 rng(splitmix64(p.seed ^ splitmix64(index)));
    const auto hard = scene_atlas(p, 0.0).stacked();
    const auto classes = p.class_names();
    const auto spec = scene_topology(p);

    Sample s;
    s.regime = p.regime;
    bool clean = false;
    for (int attempt = 0; attempt < kMaxPoseAttempts && !clean; ++attempt) {
        s.pose = draw_pose(p, rng);
        s.labels = atlas_argmax(AtlasSet::from_stacked(classes, warp_grid(hard, s.pose)));
        clean = check_topology(s.labels, spec).empty();
    }
    if (!clean)
        throw std::invalid_argument("scene: pose ranges keep pushing the structure out of the grid or breaking "
                                    "its topology");

    const int dim = regime_dim(p.regime);
    const Extent e = s.labels.extent();
    std::vector<double> base(s.labels.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        base[i] = p.class_means[static_cast<std::size_t>(s.labels[i])];

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_class(1, classes.size());
    for (int k = 0; k < p.distractors; ++k) {
        double centre[3] = {0.0, 0.0, 0.0}, radius[3] = {1.0, 1.0, 1.0};
        for (int a = 0; a < dim; ++a) {
            centre[a] = unit(rng) * p.size;
            radius[a] = (p.distractor_min_radius + (p.distractor_max_radius - p.distractor_min_radius) * unit(rng)) *
                        p.size;
        }
        const double value = p.class_means[pick_class(rng)];
        for (std::size_t z = 0; z < e.d; ++z)
            for (std::size_t y = 0; y < e.h; ++y)
                for (std::size_t x = 0; x < e.w; ++x) {
                    const double pos[3] = {x + 0.5, y + 0.5, z + 0.5};
                    double r2 = 0.0;
                    for (int a = 0; a < dim; ++a) {
                        const double d = (pos[a] - centre[a]) / radius[a];
                        r2 += d * d;
                    }
                    const std::size_t i = (z * e.h + y) * e.w + x;
                    if (r2 <= 1.0 && s.labels[i] == 0)
                        base[i] = value;
                }
    }

    Shape shape{1};
    for (auto n : s.labels.shape())
        shape.push_back(n);
    s.image = TensorGrid(shape);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < base.size(); ++i) {
        double v = base[i];
        const double tex = p.class_stds[static_cast<std::size_t>(s.labels[i])];
        if (tex > 0.0)
            v += tex * normal(rng);
        if (p.noise > 0.0)
            v += p.noise * normal(rng);
        s.image[i] = v;
    }
    return s;
}

std::vector<Sample> generate(const SceneParams& p, std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("generate: need at least one sample");
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(generate_sample(p, i));
    return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions)
{
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0))
            throw std::invalid_argument("split: fractions must be >= 0");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> rest{};
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = fractions[i] * double(n);
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rest[i] = exact - double(sizes[i]);
        used += sizes[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rest[a] > rest[b]; });
    for (std::size_t k = 0; used < n; ++k, ++used)
        ++sizes[order[k % 3]];
    return sizes;
}

SplitIndices split(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed)
{
    const auto sizes = split_sizes(n, fractions);
    if (sizes[0] == 0)
        throw std::invalid_argument("split: training split is empty");
    for (int i = 0; i < 3; ++i)
        if (fractions[i] > 0.0 && sizes[i] == 0)
            throw std::invalid_argument("split: a split with a positive fraction is empty");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + sizes[0]);
    s.val.assign(order.begin() + sizes[0], order.begin() + sizes[0] + sizes[1]);
    s.test.assign(order.begin() + sizes[0] + sizes[1], order.end());
    return s;
}

}  // namespace panet
