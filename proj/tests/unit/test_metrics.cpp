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
#include "panet/metrics.hpp"

#include <doctest.h>

#include <map>
#include <numeric>
#include <random>

using namespace panet;

namespace {

LabelGrid grid2d(const std::vector<std::string>& rows)
{
    LabelGrid g({rows.size(), rows[0].size()});
    for (std::size_t y = 0; y < rows.size(); ++y)
        for (std::size_t x = 0; x < rows[y].size(); ++x)
            g[y * rows[0].size() + x] = rows[y][x] == '.' ? 0 : rows[y][x] - '0';
    return g;
}

// Union-find over explicit coordinates, independent of the library's traversal.
struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t i)
    {
        while (parent[i] != i)
            i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

std::vector<std::size_t> oracle_roots(const LabelGrid& mask, bool full)
{
    const auto e = mask.extent();
    UnionFind uf(mask.size());
    auto at = [&](long z, long y, long x) { return std::size_t((z * long(e.h) + y) * long(e.w) + x); };
    for (long z = 0; z < long(e.d); ++z)
        for (long y = 0; y < long(e.h); ++y)
            for (long x = 0; x < long(e.w); ++x) {
                if (!mask[at(z, y, x)])
                    continue;
                for (long dz = -1; dz <= 1; ++dz)
                    for (long dy = -1; dy <= 1; ++dy)
                        for (long dx = -1; dx <= 1; ++dx) {
                            const int moved = (dz != 0) + (dy != 0) + (dx != 0);
                            if (moved == 0 || (!full && moved > 1))
                                continue;
                            const long nz = z + dz, ny = y + dy, nx = x + dx;
                            if (nz < 0 || ny < 0 || nx < 0 || nz >= long(e.d) || ny >= long(e.h) || nx >= long(e.w))
                                continue;
                            if (mask[at(nz, ny, nx)])
                                uf.unite(at(z, y, x), at(nz, ny, nx));
                        }
            }
    std::vector<std::size_t> roots(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        roots[i] = uf.find(i);
    return roots;
}

std::size_t count_violations(const std::vector<Violation>& v, const std::string& prefix)
{
    std::size_t n = 0;
    for (const auto& x : v)
        n += x.rule.rfind(prefix, 0) == 0;
    return n;
}

}  // namespace

TEST_CASE("jaccard")
{
    const auto a = grid2d({"11..", "11..", "...."});
    const auto b = grid2d({".11.", ".11.", "...."});
    CHECK(jaccard(a, a, 1) == 1.0);
    CHECK(jaccard(a, grid2d({"....", "....", "..11"}), 1) == 0.0);
    CHECK(jaccard(a, b, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    CHECK(jaccard(a, b, 2) == 1.0);  // both empty
    CHECK(jaccard(a, b, 1) == jaccard(b, a, 1));
    CHECK_THROWS_AS(jaccard(a, LabelGrid({2, 2}), 1), ShapeError);
}

TEST_CASE("connected components examples")
{
    CHECK(connected_components(LabelGrid({4, 4}, 0)).count == 0);
    const auto full = connected_components(LabelGrid({3, 4, 5}, 1));
    CHECK(full.count == 1);
    CHECK(full.sizes[0] == 60);

    LabelGrid checker({6, 6});
    for (std::size_t i = 0; i < 36; ++i)
        checker[i] = ((i / 6) + (i % 6)) % 2;
    CHECK(connected_components(checker, Connectivity::face).count == 18);
    CHECK(connected_components(checker, Connectivity::full).count == 1);

    // Ids follow raster order of each component's first cell.
    const auto c = connected_components(grid2d({"..1.1", "11..1", "....."}));
    CHECK(c.count == 3);
    CHECK(c.ids[2] == 1);
    CHECK(c.ids[4] == 2);
    CHECK(c.ids[5] == 3);
    CHECK(c.sizes == std::vector<std::size_t>{1, 2, 2});
}

TEST_CASE("connected components match a union-find oracle on random grids")
{
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> side(1, 16);
    std::bernoulli_distribution coin(0.45);
    for (int trial = 0; trial < 60; ++trial) {
        const bool three = trial % 2 == 1;
        Shape s = three ? Shape{side(rng), side(rng), side(rng)} : Shape{side(rng), side(rng)};
        LabelGrid mask(s);
        for (int& v : mask.data())
            v = coin(rng);
        for (bool full : {false, true}) {
            const auto comps = connected_components(mask, full ? Connectivity::full : Connectivity::face);
            const auto roots = oracle_roots(mask, full);
            std::map<std::size_t, int> root_to_id;
            int next = 0;
            bool ok = true;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!mask[i]) {
                    ok = ok && comps.ids[i] == 0;
                    continue;
                }
                auto [it, inserted] = root_to_id.emplace(roots[i], comps.ids[i]);
                if (inserted)
                    ok = ok && comps.ids[i] == ++next;  // first cell opens the next id
                else
                    ok = ok && it->second == comps.ids[i];
            }
            CHECK(ok);
            CHECK(comps.count == root_to_id.size());
        }
    }
}

TEST_CASE("atlas argmax passes the built-in specs")
{
    for (int size : {8, 16, 32})
        CHECK(check_topology(atlas_argmax(build_synapse_atlas({size, 0.1, 0.0})), TopologySpec::synapse()).empty());
    for (int size : {16, 32, 33})
        CHECK(check_topology(atlas_argmax(build_disc_cup_atlas({size, 0.28, 0.14, 0.0})), TopologySpec::retina())
                  .empty());
}

TEST_CASE("synapse rules on constructed grids")
{
    const auto spec = TopologySpec::synapse();
    // 1 = pre, 2 = cleft, 3 = post. The cleft touches pre only.
    const auto g = grid2d({"11111111", "11111111", "11111111", "..2222..", "........", "33333333", "33333333",
                           "33333333"});
    const auto v = check_topology(g, spec);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "required_adjacency(cleft, post)");
    CHECK(v[0].rule_index == 1);
    CHECK(v[0].components == std::vector<std::size_t>{1});

    // Clean layering, then pre touching post, then a split cleft.
    const auto clean = grid2d({"1111", "2222", "3333"});
    CHECK(check_topology(clean, spec).empty());
    const auto touch = grid2d({"1111", "2213", "3333"});
    CHECK(count_violations(check_topology(touch, spec), "forbidden_adjacency") == 1);
    const auto split = grid2d({"1111", "2.22", "3333"});
    CHECK(count_violations(check_topology(split, spec), "max_components") == 1);

    // Missing cleft.
    const auto none = grid2d({"1111", "....", "3333"});
    auto missing = check_topology(none, spec);
    CHECK(count_violations(missing, "missing_class(cleft)") == 1);
    auto lenient = spec;
    lenient.missing_class_is_violation = false;
    CHECK(check_topology(none, lenient).empty());

    CHECK_THROWS(check_topology(grid2d({"14"}), spec));
}

TEST_CASE("containment rule")
{
    const auto spec = TopologySpec::retina();
    // 1 = disc, 2 = cup.
    const auto inside = grid2d({".......", ".11111.", ".12221.", ".12221.", ".11111.", "......."});
    CHECK(check_topology(inside, spec).empty());

    const auto outside = grid2d({".......", ".111...", ".1.1.22", ".111.22", ".......", "......."});
    const auto v = check_topology(outside, spec);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "contained_in(cup, disc)");

    // A cup that breaches the disc ring leaks to the border.
    const auto leak = grid2d({".......", ".11111.", ".12222.", ".12221.", ".11111.", "......."});
    CHECK(count_violations(check_topology(leak, spec), "contained_in") == 1);

    // Small specks can be ignored.
    const auto speck = grid2d({"2......", ".11111.", ".12221.", ".11111.", "......."});
    CHECK(check_topology(speck, spec).size() == 2);
    auto tolerant = spec;
    tolerant.min_component_size = 2;
    CHECK(check_topology(speck, tolerant).empty());
}

TEST_CASE("ter")
{
    const Violation v{0, "r", {1}, ""};
    std::vector<std::vector<Violation>> fifteen(15);
    for (int i = 0; i < 3; ++i)
        fifteen[i].push_back(v);
    const auto t = ter(fifteen);
    CHECK(t.ratio() == doctest::Approx(0.2));
    CHECK(t.fraction() == "3/15");
    CHECK(ter({{}, {}, {v}, {}}).fraction() == "1/4");
    CHECK(ter({{}, {}}).ratio() == 0.0);
    CHECK_THROWS(ter({}));

    auto more = fifteen;
    more.push_back({v});
    CHECK(ter(more).ratio() >= t.ratio());
}

TEST_CASE("topology spec JSON")
{
    for (const auto& s : {TopologySpec::synapse(), TopologySpec::retina()})
        CHECK(TopologySpec::from_json(s.to_json()) == s);
    auto custom = TopologySpec::retina();
    custom.connectivity = Connectivity::full;
    custom.min_component_size = 3;
    custom.missing_class_is_violation = false;
    CHECK(TopologySpec::from_json(custom.to_json()) == custom);

    const std::string typo = R"({"schema_version":1,"classes":["a","b"],"rules":[{"type":"max_components","clas":"a","n":1}]})";
    try {
        TopologySpec::from_json(typo);
        FAIL("typo accepted");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("rules[0].clas") != std::string::npos);
    }
    CHECK_THROWS(TopologySpec::from_json(R"({"schema_version":1,"classes":["a"],"rules":[{"type":"required_adjacency","a":"a","b":"z"}]})"));
    CHECK_THROWS(TopologySpec::from_json(R"({"schema_version":2,"classes":["a"]})"));
    CHECK_THROWS(TopologySpec::builtin("heart"));
}
