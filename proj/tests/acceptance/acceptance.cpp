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

// Acceptance suite: one PASS/FAIL line per criterion, details indented below it.
// Exit status is 0 only when every selected criterion passes.

#include "panet/config.hpp"
#include "panet/gradsuite.hpp"
#include "panet/pose.hpp"
#include "panet/train.hpp"
#include "panet/warp.hpp"

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace panet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void note(const char* format, ...) __attribute__((format(printf, 2, 3)))
    {
        char buf[512];
        va_list args;
        va_start(args, format);
        std::vsnprintf(buf, sizeof buf, format, args);
        va_end(args);
        details.emplace_back(buf);
    }
    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            details.push_back("failed: " + what);
        }
    }
};

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome criterion_gradients()
{
    Outcome o;
    const auto t0 = Clock::now();
    const auto rows = run_gradient_suite(7);
    const double elapsed = seconds_since(t0);
    for (const auto& r : rows) {
        const bool primitive = r.name.rfind("model_", 0) != 0 && r.name.rfind("warp_", 0) != 0;
        const double limit = primitive ? 1e-6 : 1e-4;
        o.note("%-22s max rel err %.3e (limit %.0e, %zu coords)", r.name.c_str(), r.max_relative_error, limit,
               r.coords_checked);
        o.require(r.max_relative_error < limit && r.pass(), r.name);
    }
    std::set<std::string> names;
    for (const auto& r : rows)
        names.insert(r.name);
    for (const char* needed : {"conv_2d", "conv_3d", "avgpool2", "nearest_upsample2", "relu", "linear",
                               "concat_channels", "softmax_cross_entropy", "warp_pose_2d", "warp_pose_3d",
                               "model_plain", "model_panet", "model_naive"})
        o.require(names.count(needed) == 1, std::string("suite covers ") + needed);
    o.note("suite time %.1f s (limit 60 s)", elapsed);
    o.require(elapsed < 60.0, "suite time");
    return o;
}

// ---------------------------------------------------------------------------
// 2. Warp exactness

TensorGrid random_grid(Shape shape, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TensorGrid g(std::move(shape));
    for (double& v : g.data())
        v = u(rng);
    return g;
}

Mat3 quaternion_rotation(const Vec3& r)
{
    const double theta = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
    if (theta > 0.0) {
        const double s = std::sin(theta / 2.0) / theta;
        w = std::cos(theta / 2.0);
        x = r[0] * s;
        y = r[1] * s;
        z = r[2] * s;
    }
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

// Spatial extent of a channels-first grid as (d, h, w) with d = 1 in 2D.
std::array<long, 3> dims(const TensorGrid& g)
{
    const auto e = g.extent();
    return {long(e.d), long(e.h), long(e.w)};
}

// Output voxel p reads source voxel src(p); outside the grid reads zero.
using IndexMap = std::function<std::array<long, 3>(const std::array<long, 3>&)>;

bool matches_index_oracle(const TensorGrid& src, const TensorGrid& out, const IndexMap& src_of)
{
    const auto n = dims(src);
    const auto plane = std::size_t(n[0] * n[1] * n[2]);
    for (std::size_t c = 0; c < src.channels(); ++c)
        for (long z = 0; z < n[0]; ++z)
            for (long y = 0; y < n[1]; ++y)
                for (long x = 0; x < n[2]; ++x) {
                    const auto s = src_of({z, y, x});
                    double want = 0.0;
                    if (s[0] >= 0 && s[0] < n[0] && s[1] >= 0 && s[1] < n[1] && s[2] >= 0 && s[2] < n[2])
                        want = src[c * plane + std::size_t((s[0] * n[1] + s[1]) * n[2] + s[2])];
                    if (out[c * plane + std::size_t((z * n[1] + y) * n[2] + x)] != want)
                        return false;
                }
    return true;
}

Outcome criterion_warp()
{
    Outcome o;
    std::mt19937_64 rng(2024);
    constexpr double kPi = std::numbers::pi;

    // Identity pose.
    double identity_dev = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const bool three = trial % 2 == 1;
        std::uniform_int_distribution<std::size_t> side(3, three ? 12 : 24);
        const Shape s = three ? Shape{2, side(rng), side(rng), side(rng)} : Shape{3, side(rng), side(rng)};
        const auto g = random_grid(s, rng);
        const auto w = warp_grid(g, PoseVector::identity(three ? 3 : 2));
        for (std::size_t i = 0; i < g.size(); ++i)
            identity_dev = std::max(identity_dev, std::abs(w[i] - g[i]));
    }
    o.note("identity warp max deviation %.3e (limit 1e-12) over 20 random grids", identity_dev);
    o.require(identity_dev <= 1e-12, "identity warp");

    // Integer translations: t = 2k/n in half-extent units moves content by k voxels.
    int shift_ok = 0, shift_total = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const bool three = trial % 2 == 1;
        std::uniform_int_distribution<long> side(4, three ? 10 : 20);
        const long d = three ? side(rng) : 1, h = side(rng), w = side(rng);
        const Shape s = three ? Shape{2, std::size_t(d), std::size_t(h), std::size_t(w)}
                              : Shape{2, std::size_t(h), std::size_t(w)};
        const auto g = random_grid(s, rng);
        auto shift = [&](long n) { return std::uniform_int_distribution<long>(-n / 2, n / 2)(rng); };
        const long kx = shift(w), ky = shift(h), kz = three ? shift(d) : 0;
        auto q = PoseVector::identity(three ? 3 : 2);
        q.translation = {2.0 * double(kx) / double(w), 2.0 * double(ky) / double(h),
                         three ? 2.0 * double(kz) / double(d) : 0.0};
        const auto out = warp_grid(g, q);
        ++shift_total;
        shift_ok += matches_index_oracle(g, out, [&](const std::array<long, 3>& p) {
            return std::array<long, 3>{p[0] - kz, p[1] - ky, p[2] - kx};
        });
    }
    o.note("integer translations exact: %d/%d", shift_ok, shift_total);
    o.require(shift_ok == shift_total, "integer translation oracle");

    // Quarter turns about the grid centre. In doubled centred coordinates c = 2p - (n - 1)
    // every node is an integer, and the source of output node c is R^T c.
    int turn_ok = 0, turn_total = 0;
    const std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    for (int trial = 0; trial < 24; ++trial) {
        const bool three = trial % 3 != 0;
        const long n = std::uniform_int_distribution<long>(3, three ? 9 : 17)(rng);
        const Shape s = three ? Shape{1, std::size_t(n), std::size_t(n), std::size_t(n)}
                              : Shape{2, std::size_t(n), std::size_t(n)};
        const auto g = random_grid(s, rng);
        const int quarter = std::uniform_int_distribution<int>(1, 3)(rng);
        const double sign = trial % 2 == 0 ? 1.0 : -1.0;
        const Vec3 axis = three ? axes[std::size_t(trial % 3)] : axes[2];
        auto q = PoseVector::identity(three ? 3 : 2);
        for (int a = 0; a < 3; ++a)
            q.rotation[a] = axis[a] * sign * quarter * kPi / 2;
        // Integer rotation matrix for the same turn (x, y, z order).
        const Mat3 rf = quaternion_rotation(q.rotation);
        std::array<std::array<long, 3>, 3> r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r[i][j] = std::lround(rf[i][j]);
        const auto out = warp_grid(g, q);
        ++turn_total;
        turn_ok += matches_index_oracle(g, out, [&](const std::array<long, 3>& p) {
            const std::array<long, 3> c{2 * p[2] - (n - 1), 2 * p[1] - (n - 1), three ? 2 * p[0] - (n - 1) : 0};
            std::array<long, 3> s{};
            for (int i = 0; i < 3; ++i)
                s[i] = r[0][i] * c[0] + r[1][i] * c[1] + r[2][i] * c[2];
            return std::array<long, 3>{three ? (s[2] + n - 1) / 2 : 0, (s[1] + n - 1) / 2, (s[0] + n - 1) / 2};
        });
    }
    o.note("quarter turns exact: %d/%d", turn_ok, turn_total);
    o.require(turn_ok == turn_total, "quarter-turn oracle");

    // Rotation matrices against the quaternion oracle, including tiny and near-pi angles.
    double rot_dev = 0.0, det_dev = 0.0;
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 2000; ++trial) {
        Vec3 axis{normal(rng), normal(rng), normal(rng)};
        const double len = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        double angle = std::uniform_real_distribution<double>(0.0, kPi)(rng);
        if (trial % 10 == 0)
            angle = std::pow(10.0, -std::uniform_real_distribution<double>(3.0, 12.0)(rng));
        if (trial % 10 == 1)
            angle = kPi - std::pow(10.0, -std::uniform_real_distribution<double>(1.0, 8.0)(rng));
        const Vec3 r{axis[0] / len * angle, axis[1] / len * angle, axis[2] / len * angle};
        const auto m = angle_axis_to_matrix(r);
        const auto oracle = quaternion_rotation(r);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                rot_dev = std::max(rot_dev, std::abs(m[i][j] - oracle[i][j]));
        det_dev = std::max(det_dev, std::abs(determinant(m) - 1.0));
    }
    o.note("rotation vs quaternion oracle max deviation %.3e (limit 1e-12), |det - 1| max %.3e (limit 1e-12)",
           rot_dev, det_dev);
    o.require(rot_dev <= 1e-12, "rotation oracle");
    o.require(det_dev <= 1e-12, "rotation determinant");
    return o;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

// Neighbour list by explicit enumeration; full connectivity includes diagonals.
std::vector<std::array<long, 3>> oracle_offsets(bool three, bool full)
{
    std::vector<std::array<long, 3>> out;
    for (long dz = three ? -1 : 0; dz <= (three ? 1 : 0); ++dz)
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
                const long moved = (dz != 0) + (dy != 0) + (dx != 0);
                if (moved == 0 || (!full && moved > 1))
                    continue;
                out.push_back({dz, dy, dx});
            }
    return out;
}

struct OracleGrid {
    long d, h, w;
    bool three;
    std::vector<int> v;
    long index(long z, long y, long x) const { return (z * h + y) * w + x; }
    bool inside(long z, long y, long x) const { return z >= 0 && y >= 0 && x >= 0 && z < d && y < h && x < w; }
};

OracleGrid to_oracle(const LabelGrid& g)
{
    const auto e = g.extent();
    return {long(e.d), long(e.h), long(e.w), g.spatial_rank() == 3, std::vector<int>(g.data().begin(), g.data().end())};
}

// Breadth-first labelling in raster order of first cells.
std::vector<int> oracle_components(const OracleGrid& g, const std::function<bool(int)>& in_set, bool full, int& count)
{
    std::vector<int> id(g.v.size(), 0);
    const auto offs = oracle_offsets(g.three, full);
    count = 0;
    for (long z = 0; z < g.d; ++z)
        for (long y = 0; y < g.h; ++y)
            for (long x = 0; x < g.w; ++x) {
                const long s = g.index(z, y, x);
                if (!in_set(g.v[std::size_t(s)]) || id[std::size_t(s)] != 0)
                    continue;
                ++count;
                std::vector<std::array<long, 3>> queue{{z, y, x}};
                id[std::size_t(s)] = count;
                for (std::size_t head = 0; head < queue.size(); ++head) {
                    const auto p = queue[head];
                    for (const auto& o : offs) {
                        const long nz = p[0] + o[0], ny = p[1] + o[1], nx = p[2] + o[2];
                        if (!g.inside(nz, ny, nx))
                            continue;
                        const auto n = std::size_t(g.index(nz, ny, nx));
                        if (in_set(g.v[n]) && id[n] == 0) {
                            id[n] = count;
                            queue.push_back({nz, ny, nx});
                        }
                    }
                }
            }
    return id;
}

bool oracle_adjacent(const OracleGrid& g, long cell, int other, bool full)
{
    const long x = cell % g.w, y = (cell / g.w) % g.h, z = cell / (g.w * g.h);
    for (const auto& o : oracle_offsets(g.three, full)) {
        const long nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (g.inside(nz, ny, nx) && g.v[std::size_t(g.index(nz, ny, nx))] == other)
            return true;
    }
    return false;
}

// True when the grid breaks any rule in `spec` (minimum component size 1).
bool oracle_violates(const OracleGrid& g, const TopologySpec& spec)
{
    const bool full = spec.connectivity == Connectivity::full;
    auto label = [&](const std::string& name) {
        for (std::size_t i = 0; i < spec.classes.size(); ++i)
            if (spec.classes[i] == name)
                return int(i) + 1;
        return -1;
    };
    if (spec.missing_class_is_violation)
        for (std::size_t c = 0; c < spec.classes.size(); ++c)
            if (std::find(g.v.begin(), g.v.end(), int(c) + 1) == g.v.end())
                return true;
    for (const auto& rule : spec.rules) {
        const int a = label(rule.a);
        switch (rule.type) {
        case RuleType::required_adjacency: {
            const int b = label(rule.b);
            int count = 0;
            const auto id = oracle_components(g, [&](int v) { return v == a; }, full, count);
            std::vector<bool> touches(std::size_t(count) + 1, false);
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (id[i] > 0 && oracle_adjacent(g, long(i), b, full))
                    touches[std::size_t(id[i])] = true;
            for (int c = 1; c <= count; ++c)
                if (!touches[std::size_t(c)])
                    return true;
            break;
        }
        case RuleType::forbidden_adjacency: {
            const int b = label(rule.b);
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (g.v[i] == a && oracle_adjacent(g, long(i), b, full))
                    return true;
            break;
        }
        case RuleType::max_components: {
            int count = 0;
            oracle_components(g, [&](int v) { return v == a; }, full, count);
            if (count > rule.n)
                return true;
            break;
        }
        case RuleType::contained_in: {
            // Everything reachable from outside the grid without crossing b.
            const int b = label(rule.b);
            int count = 0;
            const auto outside = oracle_components(g, [&](int v) { return v != b; }, full, count);
            std::set<int> border;
            for (long z = 0; z < g.d; ++z)
                for (long y = 0; y < g.h; ++y)
                    for (long x = 0; x < g.w; ++x) {
                        const bool edge = x == 0 || y == 0 || x == g.w - 1 || y == g.h - 1 ||
                                          (g.three && (z == 0 || z == g.d - 1));
                        const auto i = std::size_t(g.index(z, y, x));
                        if (edge && outside[i] > 0)
                            border.insert(outside[i]);
                    }
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (g.v[i] == a && border.count(outside[i]))
                    return true;
            break;
        }
        }
    }
    return false;
}

// Structured label grids: a warped regime atlas with random label noise, or pure noise.
LabelGrid random_label_grid(std::mt19937_64& rng, bool three, int trial)
{
    std::uniform_int_distribution<int> side(three ? 8 : 8, 16);
    const int size = side(rng);
    AtlasSet atlas = three ? build_synapse_atlas({size, 0.1, 0.0}) : build_disc_cup_atlas({size, 0.28, 0.14, 0.0});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto q = PoseVector::identity(three ? 3 : 2);
    for (int a = 0; a < (three ? 3 : 2); ++a) {
        q.translation[a] = 0.3 * u(rng);
        q.scale[a] = std::exp(0.3 * u(rng));
    }
    if (three)
        q.rotation = {0.4 * u(rng), 0.4 * u(rng), 0.4 * u(rng)};
    else
        q.rotation[2] = 0.8 * u(rng);
    auto labels = atlas_argmax(warp(atlas, q));
    // Shrink some grids along one axis so extents differ per axis.
    if (trial % 4 == 3) {
        Shape s = labels.shape();
        s.back() = std::max<std::size_t>(1, s.back() - std::size_t(size / 3));
        LabelGrid cut(s);
        const auto e = cut.extent();
        const auto full = labels.extent();
        for (std::size_t z = 0; z < e.d; ++z)
            for (std::size_t y = 0; y < e.h; ++y)
                for (std::size_t x = 0; x < e.w; ++x)
                    cut[(z * e.h + y) * e.w + x] = labels[(z * full.h + y) * full.w + x];
        labels = cut;
    }
    const int classes = three ? 3 : 2;
    const double flip = std::array<double, 5>{0.0, 0.002, 0.01, 0.05, 0.5}[std::size_t(trial % 5)];
    std::uniform_real_distribution<double> p(0.0, 1.0);
    std::uniform_int_distribution<int> any(0, classes);
    for (int& v : labels.data())
        if (p(rng) < flip)
            v = any(rng);
    return labels;
}

Outcome criterion_metrics()
{
    Outcome o;
    std::mt19937_64 rng(77);
    constexpr int kGrids = 200;
    int jaccard_ok = 0, cc_ok = 0, topo_ok = 0;
    std::vector<std::vector<Violation>> per_grid_2d, per_grid_3d;
    std::size_t oracle_bad_2d = 0, oracle_bad_3d = 0;
    for (int trial = 0; trial < kGrids; ++trial) {
        const bool three = trial % 2 == 1;
        const auto pred = random_label_grid(rng, three, trial);
        auto truth = pred;
        std::uniform_int_distribution<int> any(0, three ? 3 : 2);
        std::bernoulli_distribution flip(0.1);
        for (int& v : truth.data())
            if (flip(rng))
                v = any(rng);
        const auto op = to_oracle(pred), ot = to_oracle(truth);

        // Jaccard by pixel counts.
        bool j_ok = true;
        for (int label = 0; label <= (three ? 3 : 2); ++label) {
            std::size_t inter = 0, uni = 0;
            for (std::size_t i = 0; i < op.v.size(); ++i) {
                inter += op.v[i] == label && ot.v[i] == label;
                uni += op.v[i] == label || ot.v[i] == label;
            }
            const double want = uni == 0 ? 1.0 : double(inter) / double(uni);
            j_ok = j_ok && jaccard(pred, truth, label) == want;
        }
        jaccard_ok += j_ok;

        // Components of every class under both connectivities.
        bool c_ok = true;
        for (int label = 1; label <= (three ? 3 : 2); ++label)
            for (bool full : {false, true}) {
                LabelGrid mask(pred.shape());
                for (std::size_t i = 0; i < pred.size(); ++i)
                    mask[i] = pred[i] == label;
                const auto got = connected_components(mask, full ? Connectivity::full : Connectivity::face);
                int count = 0;
                const auto want = oracle_components(op, [&](int v) { return v == label; }, full, count);
                c_ok = c_ok && got.count == std::size_t(count) &&
                       std::equal(want.begin(), want.end(), got.ids.data().begin());
                std::vector<std::size_t> sizes(std::size_t(count), 0);
                for (int id : want)
                    if (id > 0)
                        ++sizes[std::size_t(id - 1)];
                c_ok = c_ok && got.sizes == sizes;
            }
        cc_ok += c_ok;

        // Topology violations per grid, then TER over each regime's grids.
        auto spec = three ? TopologySpec::synapse() : TopologySpec::retina();
        if (trial % 3 == 2)
            spec.connectivity = Connectivity::full;
        const auto got = check_topology(pred, spec);
        const bool want = oracle_violates(op, spec);
        topo_ok += (!got.empty()) == want;
        (three ? per_grid_3d : per_grid_2d).push_back(got);
        (three ? oracle_bad_3d : oracle_bad_2d) += want;
    }
    const auto ter2 = ter(per_grid_2d), ter3 = ter(per_grid_3d);
    const bool ter_ok = ter2.violating == oracle_bad_2d && ter3.violating == oracle_bad_3d &&
                        ter2.total == per_grid_2d.size() && ter3.total == per_grid_3d.size();
    o.note("jaccard exact on %d/%d grids", jaccard_ok, kGrids);
    o.note("connected components exact on %d/%d grids (face and full, every class)", cc_ok, kGrids);
    o.note("violation presence matches oracle on %d/%d grids", topo_ok, kGrids);
    o.note("TER retina %s (oracle %zu/%zu), synapse %s (oracle %zu/%zu)", ter2.fraction().c_str(), oracle_bad_2d,
           per_grid_2d.size(), ter3.fraction().c_str(), oracle_bad_3d, per_grid_3d.size());
    o.require(jaccard_ok == kGrids, "jaccard oracle");
    o.require(cc_ok == kGrids, "component oracle");
    o.require(topo_ok == kGrids, "topology oracle");
    o.require(ter_ok, "TER oracle");
    // Both outcomes must occur, otherwise the TER comparison says little.
    o.require(oracle_bad_2d > 0 && oracle_bad_2d < per_grid_2d.size() && oracle_bad_3d > 0 &&
                  oracle_bad_3d < per_grid_3d.size(),
              "grid set mixes clean and violating grids");
    return o;
}

// ---------------------------------------------------------------------------
// 4 and 5. Training runs on the default benchmarks

struct Budget {
    int retina_epochs = 60;
    int synapse_epochs = 250;
};

struct Run {
    Regime regime;
    Variant variant;
    std::uint64_t seed;
    EvalReport report;
    double seconds = 0.0;
    int best_epoch = 0;
};

class Runner {
public:
    Runner(Budget b, fs::path out) : budget_(b), out_(std::move(out)) {}

    const Run& get(Regime r, Variant v, std::uint64_t seed)
    {
        const auto key = std::make_tuple(int(r), int(v), seed);
        auto it = cache_.find(key);
        if (it != cache_.end())
            return it->second;
        auto config = ExperimentConfig::defaults(r, seed);
        config.train.variant = v;
        config.train.epochs = r == Regime::retina2d ? budget_.retina_epochs : budget_.synapse_epochs;
        auto tc = config.train;
        tc.atlas_softness = config.atlas_softness;
        const auto data = build_dataset(config);
        const auto t0 = Clock::now();
        const auto result = train(tc, config.scene, data.subset(data.splits.train), data.subset(data.splits.val));
        Run run{r, v, seed, {}, 0.0, result.best_epoch};
        run.report = evaluate(result.best, scene_atlas(config.scene, config.atlas_softness),
                              data.subset(data.splits.test), config.topology_spec());
        run.seconds = seconds_since(t0);

        const auto dir = out_ / regime_name(r) / ("seed" + std::to_string(seed)) / variant_name(v);
        fs::create_directories(dir);
        std::ofstream(dir / "config.json") << config.to_json();
        std::ofstream(dir / "history.csv") << history_csv(result.history);
        std::ofstream(dir / "report.csv") << report_csv(run.report, variant_name(v));
        std::printf("    trained %-9s %-5s seed %llu: mean Jaccard %.2f%%, TER %s, orient %.2f deg, loc %.2f px "
                    "(best epoch %d, %.0f s)\n",
                    regime_name(r).c_str(), variant_name(v).c_str(), static_cast<unsigned long long>(seed),
                    100.0 * run.report.mean_jaccard, run.report.ter.fraction().c_str(), run.report.orientation_deg,
                    run.report.localization_px, run.best_epoch, run.seconds);
        std::fflush(stdout);
        return cache_.emplace(key, std::move(run)).first->second;
    }

    double total_seconds() const
    {
        double s = 0.0;
        for (const auto& [k, r] : cache_)
            s += r.seconds;
        return s;
    }

private:
    Budget budget_;
    fs::path out_;
    std::map<std::tuple<int, int, std::uint64_t>, Run> cache_;
};

Outcome criterion_coupling(Runner& runner)
{
    Outcome o;
    const auto& rp = runner.get(Regime::retina2d, Variant::panet, 1);
    const auto& rn = runner.get(Regime::retina2d, Variant::naive, 1);
    o.note("retina2d mean localization error: panet %.3f px, naive %.3f px", rp.report.localization_px,
           rn.report.localization_px);
    o.require(rp.report.localization_px < rn.report.localization_px, "retina2d panet localization < naive");
    const auto& sp = runner.get(Regime::synapse3d, Variant::panet, 1);
    const auto& sn = runner.get(Regime::synapse3d, Variant::naive, 1);
    o.note("synapse3d mean orientation error: panet %.3f deg, naive %.3f deg", sp.report.orientation_deg,
           sn.report.orientation_deg);
    o.require(sp.report.orientation_deg < sn.report.orientation_deg, "synapse3d panet orientation < naive");
    return o;
}

Outcome criterion_topology_gain(Runner& runner, const std::vector<std::uint64_t>& seeds)
{
    Outcome o;
    double elapsed = 0.0;
    for (auto regime : {Regime::retina2d, Regime::synapse3d}) {
        double ter_panet = 0.0, ter_plain = 0.0, j_panet = 0.0, j_plain = 0.0;
        int strict = 0;
        for (auto seed : seeds) {
            const auto& p = runner.get(regime, Variant::panet, seed);
            const auto& b = runner.get(regime, Variant::plain, seed);
            elapsed += p.seconds + b.seconds;
            ter_panet += p.report.ter.ratio();
            ter_plain += b.report.ter.ratio();
            j_panet += p.report.mean_jaccard;
            j_plain += b.report.mean_jaccard;
            strict += p.report.ter.ratio() < b.report.ter.ratio();
            o.note("%s seed %llu: TER panet %s vs plain %s; mean Jaccard panet %.2f%% vs plain %.2f%%",
                   regime_name(regime).c_str(), static_cast<unsigned long long>(seed),
                   p.report.ter.fraction().c_str(), b.report.ter.fraction().c_str(), 100.0 * p.report.mean_jaccard,
                   100.0 * b.report.mean_jaccard);
        }
        const double n = double(seeds.size());
        ter_panet /= n;
        ter_plain /= n;
        j_panet /= n;
        j_plain /= n;
        o.note("%s means: TER panet %.4f vs plain %.4f (strictly lower in %d/%zu seeds); Jaccard panet %.2f%% vs "
               "plain %.2f%%",
               regime_name(regime).c_str(), ter_panet, ter_plain, strict, seeds.size(), 100.0 * j_panet,
               100.0 * j_plain);
        const std::string r = regime_name(regime);
        o.require(ter_panet <= ter_plain, r + " mean TER(panet) <= mean TER(plain)");
        o.require(strict >= 2, r + " strictly lower TER in at least 2 of 3 seeds");
        o.require(j_panet >= j_plain - 0.02, r + " mean Jaccard(panet) >= mean Jaccard(plain) - 2 points");
    }
    o.note("training and evaluation time of these runs %.1f min (limit 30 min)", elapsed / 60.0);
    o.require(elapsed < 30.0 * 60.0, "full benchmark time");
    return o;
}

// ---------------------------------------------------------------------------
// 6. Single-sample overfit

Outcome criterion_overfit()
{
    Outcome o;
    auto scene = SceneParams::defaults(Regime::retina2d);
    scene.noise = 0.0;
    scene.distractors = 0;
    const auto sample = generate_sample(scene, 0);
    TrainConfig c;
    c.variant = Variant::panet;
    c.depth = 2;
    c.width = 4;
    c.pose_hidden = 16;
    c.learning_rate = 1e-2;
    const auto atlas = scene_atlas(scene, c.atlas_softness);
    auto params = ModelParams::initialize(c.architecture(scene), 1);
    auto adam = AdamState::zeros(params);
    int reached = -1;
    double last = 0.0;
    for (int step = 1; step <= 500; ++step) {
        params.zero_grad();
        const auto l = loss_and_gradients(params, sample.image, atlas, sample.labels, sample.pose);
        last = l.loss;
        if (l.loss < 0.05) {
            reached = step - 1;  // loss measured before this step's update
            break;
        }
        adam.apply(params, c);
    }
    if (reached < 0) {
        params.zero_grad();
        last = loss_and_gradients(params, sample.image, atlas, sample.labels, sample.pose).loss;
        if (last < 0.05)
            reached = 500;
    }
    o.note("panet D=2 C=4 on one noise-free retina2d sample, Adam lr 1e-2: %s (loss %.4f)",
           reached >= 0 ? ("loss < 0.05 after " + std::to_string(reached) + " steps").c_str() : "not reached",
           last);
    o.require(reached >= 0 && reached <= 500, "total loss < 0.05 within 500 steps");
    return o;
}

// ---------------------------------------------------------------------------
// 7. Determinism

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_determinism(const fs::path& out)
{
    Outcome o;
    const std::string text = R"({"schema_version": 1, "regime": "retina2d", "seed": 11,
        "splits": {"train": 12, "val": 4, "test": 6}, "train": {"epochs": 3, "batch_size": 4}})";
    for (auto regime_text : {std::string(text), std::string(R"({"schema_version": 1, "regime": "synapse3d",
        "seed": 12, "splits": {"train": 4, "val": 2, "test": 2}, "train": {"epochs": 2, "batch_size": 2}})")}) {
        std::vector<std::string> histories, reports;
        for (int rep = 0; rep < 2; ++rep) {
            const auto c = ExperimentConfig::from_json(regime_text);
            for (auto v : {Variant::plain, Variant::panet, Variant::naive}) {
                auto tc = c.train;
                tc.variant = v;
                tc.atlas_softness = c.atlas_softness;
                const auto data = build_dataset(c);
                const auto r = train(tc, c.scene, data.subset(data.splits.train), data.subset(data.splits.val));
                const auto report = evaluate(r.best, scene_atlas(c.scene, c.atlas_softness),
                                             data.subset(data.splits.test), c.topology_spec());
                const auto dir = out / ("run" + std::to_string(rep)) / regime_name(c.scene.regime) / variant_name(v);
                fs::create_directories(dir);
                std::ofstream(dir / "history.csv") << history_csv(r.history);
                std::ofstream(dir / "report.csv") << report_csv(report, variant_name(v));
                histories.push_back(read_bytes(dir / "history.csv"));
                reports.push_back(read_bytes(dir / "report.csv"));
            }
        }
        const auto half = histories.size() / 2;
        int same = 0;
        for (std::size_t i = 0; i < half; ++i)
            same += histories[i] == histories[i + half] && reports[i] == reports[i + half] &&
                    !histories[i].empty() && !reports[i].empty();
        const auto regime = ExperimentConfig::from_json(regime_text).scene.regime;
        o.note("%s: %d/%zu variants byte-identical across two runs (history.csv and report.csv)",
               regime_name(regime).c_str(), same, half);
        o.require(same == int(half), regime_name(regime) + " determinism");
    }
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    Budget budget;
    std::string out = "acceptance_output";
    app.add_option("--only", only, "run only these criteria (1-7)");
    app.add_option("--retina-epochs", budget.retina_epochs, "training epochs per retina2d run");
    app.add_option("--synapse-epochs", budget.synapse_epochs, "training epochs per synapse3d run");
    app.add_option("--out", out, "directory for run artifacts");
    CLI11_PARSE(app, argc, argv);

    const fs::path root = resolve_output(out);
    fs::create_directories(root);
    auto selected = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    const char* names[] = {"",
                           "gradient suite matches finite differences",
                           "warp exactness",
                           "metric oracles",
                           "stream-coupling ablation",
                           "topology gain over the plain backbone",
                           "single-sample overfit",
                           "determinism"};
    Runner runner(budget, root / "benchmark");
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    int failures = 0;
    for (int n = 1; n <= 7; ++n) {
        if (!selected(n))
            continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            switch (n) {
            case 1: o = criterion_gradients(); break;
            case 2: o = criterion_warp(); break;
            case 3: o = criterion_metrics(); break;
            case 4: o = criterion_coupling(runner); break;
            case 5: o = criterion_topology_gain(runner, seeds); break;
            case 6: o = criterion_overfit(); break;
            case 7: o = criterion_determinism(root / "determinism"); break;
            }
        } catch (const std::exception& e) {
            o.pass = false;
            o.details.push_back(std::string("exception: ") + e.what());
        }
        failures += !o.pass;
        std::printf("CRITERION %d %s: %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", names[n], seconds_since(t0));
        for (const auto& d : o.details)
            std::printf("    %s\n", d.c_str());
        std::fflush(stdout);
    }
    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
