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

#include "panet/atlas.hpp"

#include "panet/ops.hpp"
#include "panet/pnm.hpp"
#include "panet/tgrid_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace panet {

Shape AtlasSet::spatial_shape() const
{
    if (grids.empty())
        throw std::invalid_argument("atlas has no class grids");
    return grids.front().spatial_shape();
}

int AtlasSet::spatial_rank() const
{
    return static_cast<int>(spatial_shape().size());
}

TensorGrid AtlasSet::stacked() const
{
    return concat_channels(grids);
}

AtlasSet AtlasSet::from_stacked(std::vector<std::string> classes, const TensorGrid& stacked)
{
    if (classes.size() != stacked.channels())
        throw ShapeError("atlas: " + std::to_string(classes.size()) + " class names for " +
                         std::to_string(stacked.channels()) + " channels");
    AtlasSet a;
    a.classes = std::move(classes);
    for (std::size_t k = 0; k < a.classes.size(); ++k)
        a.grids.push_back(slice_channels(stacked, k, 1));
    return a;
}

void AtlasSet::validate(double tolerance) const
{
    if (classes.empty() || classes.size() != grids.size())
        throw std::invalid_argument("atlas: class names and grids must be non-empty and paired");
    const auto spatial = spatial_shape();
    for (const auto& g : grids) {
        if (g.channels() != 1)
            throw std::invalid_argument("atlas: class grids must have one channel");
        require_same_shape(g.spatial_shape(), spatial, "atlas class grid");
    }
    const auto n = grids.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const auto& g : grids) {
            const double v = g[i];
            if (!(v >= -tolerance && v <= 1.0 + tolerance))
                throw std::invalid_argument("atlas: probability " + std::to_string(v) + " outside [0, 1]");
            sum += v;
        }
        if (sum > 1.0 + tolerance)
            throw std::invalid_argument("atlas: class probabilities sum to " + std::to_string(sum) + " > 1");
    }
}

namespace {

double ramp(double signed_distance, double width)
{
    // Linear transition of total width `width` centred on the boundary.
    return std::clamp(signed_distance / width + 0.5, 0.0, 1.0);
}

}  // namespace

AtlasSet build_synapse_atlas(const SynapseAtlasParams& p)
{
    if (p.size < 8)
        throw std::invalid_argument("synapse atlas: size must be >= 8");
    if (!(p.cleft_halfwidth > 0.0 && p.cleft_halfwidth < 0.5))
        throw std::invalid_argument("synapse atlas: cleft_halfwidth must lie in (0, 0.5)");
    if (!(p.softness >= 0.0))
        throw std::invalid_argument("synapse atlas: softness must be >= 0");

    const auto n = static_cast<std::size_t>(p.size);
    const double size = p.size;
    const double c = (size - 1.0) / 2.0;
    const double hw = p.cleft_halfwidth * size;
    const double w = p.softness * size;
    const double ax = kSynapseSupportX * size, ay = kSynapseSupportY * size, az = kSynapseSupportZ * size;
    const double amin = std::min({ax, ay, az});

    TensorGrid pre({1, n, n, n}), cleft({1, n, n, n}), post({1, n, n, n});
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double dx = double(x) - c, dy = double(y) - c, dz = double(z) - c;
                const double rho = std::sqrt((dx / ax) * (dx / ax) + (dy / ay) * (dy / ay) + (dz / az) * (dz / az));
                double vp, vc, vq, support;
                if (w == 0.0) {
                    support = rho <= 1.0 ? 1.0 : 0.0;
                    vc = std::abs(dz) <= hw ? 1.0 : 0.0;
                    vp = dz < -hw ? 1.0 : 0.0;
                    vq = dz > hw ? 1.0 : 0.0;
                } else {
                    support = ramp((1.0 - rho) * amin, w);
                    vc = ramp(hw - std::abs(dz), w);
                    vp = ramp(-dz - hw, w);
                    vq = ramp(dz - hw, w);
                    // Wide ramps can overlap across a thin cleft; renormalize onto the simplex.
                    const double sum = (vp + vq) + vc;  // symmetric under pre<->post
                    if (sum > 1.0) {
                        vp /= sum;
                        vc /= sum;
                        vq /= sum;
                    }
                }
                const std::size_t i = (z * n + y) * n + x;
                pre[i] = vp * support;
                cleft[i] = vc * support;
                post[i] = vq * support;
            }

    AtlasSet a;
    a.classes = {"pre", "cleft", "post"};
    a.grids = {std::move(pre), std::move(cleft), std::move(post)};
    a.builder = "synapse";
    a.parameters = {{"size", size}, {"cleft_halfwidth", p.cleft_halfwidth}, {"softness", p.softness}};
    return a;
}

AtlasSet build_disc_cup_atlas(const DiscCupAtlasParams& p)
{
    if (p.size < 8)
        throw std::invalid_argument("disc/cup atlas: size must be >= 8");
    if (!(p.cup_radius > 0.0 && p.cup_radius < p.disc_radius && p.disc_radius < 0.5))
        throw std::invalid_argument("disc/cup atlas: require 0 < cup_radius < disc_radius < 0.5");
    if (!(p.softness >= 0.0))
        throw std::invalid_argument("disc/cup atlas: softness must be >= 0");

    const auto n = static_cast<std::size_t>(p.size);
    const double size = p.size;
    const double c = (size - 1.0) / 2.0;
    const double rc = p.cup_radius * size, rd = p.disc_radius * size;
    const double w = p.softness * size;

    TensorGrid disc({1, n, n}), cup({1, n, n});
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double rho = std::hypot(double(x) - c, double(y) - c);
            double vc, outer;
            if (w == 0.0) {
                vc = rho <= rc ? 1.0 : 0.0;
                outer = rho <= rd ? 1.0 : 0.0;
            } else {
                vc = ramp(rc - rho, w);
                outer = ramp(rd - rho, w);
            }
            cup[y * n + x] = vc;
            disc[y * n + x] = outer - vc;
        }

    AtlasSet a;
    a.classes = {"disc", "cup"};
    a.grids = {std::move(disc), std::move(cup)};
    a.builder = "disc_cup";
    a.parameters = {{"size", size},
                    {"disc_radius", p.disc_radius},
                    {"cup_radius", p.cup_radius},
                    {"softness", p.softness}};
    return a;
}

AtlasSet rescale_atlas(const AtlasSet& atlas, int divisor)
{
    if (divisor != 1 && divisor != 2 && divisor != 4 && divisor != 8)
        throw std::invalid_argument("rescale_atlas: factor must be 1, 1/2, 1/4 or 1/8");
    for (auto n : atlas.spatial_shape())
        if (n % static_cast<std::size_t>(divisor) != 0)
            throw ShapeError("rescale_atlas: shape " + shape_to_string(atlas.spatial_shape()) +
                             " is not divisible by " + std::to_string(divisor));
    AtlasSet out = atlas;
    for (int f = divisor; f > 1; f /= 2)
        for (auto& g : out.grids)
            g = avgpool2(g);
    return out;
}

LabelGrid atlas_argmax(const AtlasSet& atlas)
{
    LabelGrid labels(atlas.spatial_shape());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double sum = 0.0;
        for (const auto& g : atlas.grids)
            sum += g[i];
        double best = 1.0 - sum;
        int label = 0;
        for (std::size_t k = 0; k < atlas.grids.size(); ++k)
            if (atlas.grids[k][i] > best) {
                best = atlas.grids[k][i];
                label = static_cast<int>(k) + 1;
            }
        labels[i] = label;
    }
    return labels;
}

void save_atlas(const std::filesystem::path& dir, const AtlasSet& atlas)
{
    atlas.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["classes"] = atlas.classes;
    meta["shape"] = atlas.spatial_shape();
    meta["builder"] = atlas.builder;
    meta["parameters"] = atlas.parameters;
    std::ofstream out(dir / "atlas.json");
    out << meta.dump(2) << '\n';
    for (std::size_t k = 0; k < atlas.classes.size(); ++k)
        save_tgrid(dir / (atlas.classes[k] + ".tgrid"), atlas.grids[k]);
}

AtlasSet load_atlas(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "atlas.json");
    if (!in)
        throw std::runtime_error("cannot open " + (dir / "atlas.json").string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
        AtlasSet a;
        a.classes = meta.at("classes").get<std::vector<std::string>>();
        a.builder = meta.value("builder", "");
        if (meta.contains("parameters"))
            a.parameters = meta["parameters"].get<std::map<std::string, double>>();
        const auto shape = meta.at("shape").get<Shape>();
        for (const auto& name : a.classes) {
            auto g = load_tgrid(dir / (name + ".tgrid"));
            if (g.rank() == shape.size())
                g = g.reshaped([&] {
                    Shape s{1};
                    s.insert(s.end(), shape.begin(), shape.end());
                    return s;
                }());
            a.grids.push_back(std::move(g));
        }
        a.validate();
        require_same_shape(a.spatial_shape(), shape, "atlas.json shape");
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("atlas.json: " + std::string(e.what()));
    }
}

void write_atlas_previews(const std::filesystem::path& dir, const AtlasSet& atlas, const std::string& prefix)
{
    std::filesystem::create_directories(dir);
    const auto e = atlas.grids.front().extent();
    const std::size_t mid = e.d / 2;
    std::vector<std::vector<double>> layers;
    std::vector<Rgb> hues;
    for (std::size_t k = 0; k < atlas.classes.size(); ++k) {
        auto slice = spatial_slice(atlas.grids[k], 0, mid);
        write_pgm(dir / (prefix + atlas.classes[k] + ".pgm"), e.w, e.h, slice);
        layers.push_back(std::move(slice));
        hues.push_back(class_hue(k));
    }
    write_composite_ppm(dir / (prefix + "composite.ppm"), e.w, e.h, layers, hues);
}

}  // namespace panet
