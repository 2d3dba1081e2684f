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

#include "panet/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace panet {

namespace {

using Offset = std::array<int, 3>;  // dz, dy, dx

std::vector<Offset> neighbour_offsets(std::size_t rank, Connectivity c)
{
    std::vector<Offset> out;
    const int zr = rank == 3 ? 1 : 0;
    for (int dz = -zr; dz <= zr; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nonzero = (dz != 0) + (dy != 0) + (dx != 0);
                if (nonzero == 0 || (c == Connectivity::face && nonzero != 1))
                    continue;
                out.push_back({dz, dy, dx});
            }
    return out;
}

// Calls fn(neighbour index) for every in-bounds neighbour of cell i.
template <typename Fn>
void for_each_neighbour(const Extent& e, const std::vector<Offset>& offsets, std::size_t i, Fn&& fn)
{
    const auto x = static_cast<long long>(i % e.w);
    const auto y = static_cast<long long>((i / e.w) % e.h);
    const auto z = static_cast<long long>(i / (e.w * e.h));
    for (const auto& o : offsets) {
        const long long nz = z + o[0], ny = y + o[1], nx = x + o[2];
        if (nz < 0 || ny < 0 || nx < 0 || nz >= static_cast<long long>(e.d) ||
            ny >= static_cast<long long>(e.h) || nx >= static_cast<long long>(e.w))
            continue;
        fn(static_cast<std::size_t>((nz * static_cast<long long>(e.h) + ny) * static_cast<long long>(e.w) + nx));
    }
}

bool on_border(const Extent& e, std::size_t rank, std::size_t i)
{
    const std::size_t x = i % e.w, y = (i / e.w) % e.h, z = i / (e.w * e.h);
    if (x == 0 || y == 0 || x + 1 == e.w || y + 1 == e.h)
        return true;
    return rank == 3 && (z == 0 || z + 1 == e.d);
}

const char* kRuleNames[] = {"required_adjacency", "forbidden_adjacency", "max_components", "contained_in"};

RuleType parse_rule_type(const std::string& name, const std::string& where)
{
    for (int i = 0; i < 4; ++i)
        if (name == kRuleNames[i])
            return static_cast<RuleType>(i);
    throw std::invalid_argument(where + ": unknown rule type '" + name + "'");
}

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
        throw std::invalid_argument(where + ": expected an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw std::invalid_argument(where + "." + item.key() + ": unknown key");
}

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const std::string& where)
{
    if (!j.contains(key))
        throw std::invalid_argument(where + "." + key + ": missing");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(where + "." + key + ": wrong type");
    }
}

// Per-class components with undersized ones removed and the rest renumbered in order.
struct ClassComponents {
    std::vector<int> id;  // per cell, 0 when not part of a kept component
    std::size_t count = 0;
};

ClassComponents kept_components(const LabelGrid& pred, int label, const TopologySpec& spec)
{
    LabelGrid mask(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i)
        mask[i] = pred[i] == label ? 1 : 0;
    const auto comps = connected_components(mask, spec.connectivity);
    std::vector<int> remap(comps.count + 1, 0);
    ClassComponents out;
    for (std::size_t c = 0; c < comps.count; ++c)
        if (comps.sizes[c] >= spec.min_component_size)
            remap[c + 1] = static_cast<int>(++out.count);
    out.id.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        out.id[i] = remap[static_cast<std::size_t>(comps.ids[i])];
    return out;
}

}  // namespace

std::string connectivity_name(Connectivity c)
{
    return c == Connectivity::face ? "face" : "full";
}

Connectivity parse_connectivity(const std::string& name)
{
    if (name == "face")
        return Connectivity::face;
    if (name == "full")
        return Connectivity::full;
    throw std::invalid_argument("unknown connectivity '" + name + "' (expected face or full)");
}

double jaccard(const LabelGrid& pred, const LabelGrid& truth, int label)
{
    require_same_shape(pred.shape(), truth.shape(), "jaccard");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == label, t = truth[i] == label;
        inter += p && t;
        uni += p || t;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

Components connected_components(const LabelGrid& mask, Connectivity connectivity)
{
    const Extent e = mask.extent();
    const auto offsets = neighbour_offsets(mask.spatial_rank(), connectivity);
    Components out;
    out.ids = LabelGrid(mask.shape(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (mask[start] == 0 || out.ids[start] != 0)
            continue;
        const int id = static_cast<int>(++out.count);
        std::size_t size = 0;
        out.ids[start] = id;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            ++size;
            for_each_neighbour(e, offsets, i, [&](std::size_t n) {
                if (mask[n] != 0 && out.ids[n] == 0) {
                    out.ids[n] = id;
                    stack.push_back(n);
                }
            });
        }
        out.sizes.push_back(size);
    }
    return out;
}

std::string rule_type_name(RuleType t)
{
    return kRuleNames[static_cast<int>(t)];
}

std::string TopologyRule::describe() const
{
    if (type == RuleType::max_components)
        return rule_type_name(type) + "(" + a + ", " + std::to_string(n) + ")";
    return rule_type_name(type) + "(" + a + ", " + b + ")";
}

int TopologySpec::label_of(const std::string& name) const
{
    const auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end())
        throw std::invalid_argument("topology spec: undeclared class '" + name + "'");
    return static_cast<int>(it - classes.begin()) + 1;
}

void TopologySpec::validate() const
{
    if (classes.empty())
        throw std::invalid_argument("topology spec: no classes declared");
    for (std::size_t i = 0; i < classes.size(); ++i)
        for (std::size_t j = i + 1; j < classes.size(); ++j)
            if (classes[i] == classes[j])
                throw std::invalid_argument("topology spec: duplicate class '" + classes[i] + "'");
    if (min_component_size < 1)
        throw std::invalid_argument("topology spec: min_component_size must be >= 1");
    for (const auto& r : rules) {
        label_of(r.a);
        if (r.type == RuleType::max_components) {
            if (r.n < 0)
                throw std::invalid_argument("topology spec: " + r.describe() + " needs n >= 0");
        } else {
            label_of(r.b);
        }
    }
}

std::string TopologySpec::to_json() const
{
    nlohmann::json j;
    j["schema_version"] = 1;
    j["classes"] = classes;
    j["connectivity"] = connectivity_name(connectivity);
    j["min_component_size"] = min_component_size;
    j["missing_class_is_violation"] = missing_class_is_violation;
    j["rules"] = nlohmann::json::array();
    for (const auto& r : rules) {
        nlohmann::json rj;
        rj["type"] = rule_type_name(r.type);
        if (r.type == RuleType::max_components) {
            rj["class"] = r.a;
            rj["n"] = r.n;
        } else {
            rj["a"] = r.a;
            rj["b"] = r.b;
        }
        j["rules"].push_back(rj);
    }
    return j.dump(2);
}

TopologySpec TopologySpec::from_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("topology spec: malformed JSON: ") + e.what());
    }
    const std::string root = "topology";
    reject_unknown_keys(j,
                        {"schema_version", "classes", "connectivity", "min_component_size",
                         "missing_class_is_violation", "rules"},
                        root);
    if (field<int>(j, "schema_version", root) != 1)
        throw std::invalid_argument(root + ".schema_version: unsupported version");
    TopologySpec s;
    s.classes = field<std::vector<std::string>>(j, "classes", root);
    if (j.contains("connectivity"))
        s.connectivity = parse_connectivity(field<std::string>(j, "connectivity", root));
    if (j.contains("min_component_size"))
        s.min_component_size = field<std::size_t>(j, "min_component_size", root);
    if (j.contains("missing_class_is_violation"))
        s.missing_class_is_violation = field<bool>(j, "missing_class_is_violation", root);
    const auto rules = j.contains("rules") ? j.at("rules") : nlohmann::json::array();
    if (!rules.is_array())
        throw std::invalid_argument(root + ".rules: expected an array");
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const std::string where = root + ".rules[" + std::to_string(i) + "]";
        const auto& rj = rules[i];
        if (!rj.is_object())
            throw std::invalid_argument(where + ": expected an object");
        TopologyRule r;
        r.type = parse_rule_type(field<std::string>(rj, "type", where), where + ".type");
        if (r.type == RuleType::max_components) {
            reject_unknown_keys(rj, {"type", "class", "n"}, where);
            r.a = field<std::string>(rj, "class", where);
            r.n = field<int>(rj, "n", where);
        } else {
            reject_unknown_keys(rj, {"type", "a", "b"}, where);
            r.a = field<std::string>(rj, "a", where);
            r.b = field<std::string>(rj, "b", where);
        }
        s.rules.push_back(r);
    }
    s.validate();
    return s;
}

TopologySpec TopologySpec::synapse()
{
    TopologySpec s;
    s.classes = {"pre", "cleft", "post"};
    s.rules = {{RuleType::required_adjacency, "cleft", "pre", 0},
               {RuleType::required_adjacency, "cleft", "post", 0},
               {RuleType::forbidden_adjacency, "pre", "post", 0},
               {RuleType::max_components, "cleft", "", 1}};
    return s;
}

TopologySpec TopologySpec::retina()
{
    TopologySpec s;
    s.classes = {"disc", "cup"};
    s.rules = {{RuleType::contained_in, "cup", "disc", 0},
               {RuleType::max_components, "disc", "", 1},
               {RuleType::max_components, "cup", "", 1}};
    return s;
}

TopologySpec TopologySpec::builtin(const std::string& name)
{
    if (name == "synapse")
        return synapse();
    if (name == "retina")
        return retina();
    throw std::invalid_argument("unknown built-in topology '" + name + "' (expected synapse or retina)");
}

TopologySpec load_topology_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot read topology spec " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return TopologySpec::from_json(text.str());
}

std::vector<Violation> check_topology(const LabelGrid& pred, const TopologySpec& spec)
{
    spec.validate();
    const int k = static_cast<int>(spec.classes.size());
    for (int v : pred.data())
        if (v < 0 || v > k)
            throw std::invalid_argument("check_topology: label " + std::to_string(v) +
                                        " is not background or a declared class");

    std::vector<ClassComponents> comps(static_cast<std::size_t>(k) + 1);
    for (int c = 1; c <= k; ++c)
        comps[c] = kept_components(pred, c, spec);

    const Extent e = pred.extent();
    const auto offsets = neighbour_offsets(pred.spatial_rank(), spec.connectivity);
    // Touching (component of a, component of b) pairs.
    auto touching = [&](int la, int lb) {
        std::set<std::pair<int, int>> pairs;
        const auto& ca = comps[la];
        const auto& cb = comps[lb];
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (ca.id[i] == 0)
                continue;
            for_each_neighbour(e, offsets, i, [&](std::size_t n) {
                if (cb.id[n] != 0)
                    pairs.insert({ca.id[i], cb.id[n]});
            });
        }
        return pairs;
    };

    std::vector<Violation> out;
    if (spec.missing_class_is_violation)
        for (int c = 1; c <= k; ++c)
            if (comps[c].count == 0)
                out.push_back({-1, "missing_class(" + spec.classes[c - 1] + ")", {}, "no component present"});

    for (std::size_t ri = 0; ri < spec.rules.size(); ++ri) {
        const auto& r = spec.rules[ri];
        const int la = spec.label_of(r.a);
        const auto& ca = comps[la];
        const std::string name = r.describe();
        switch (r.type) {
        case RuleType::required_adjacency: {
            const auto pairs = touching(la, spec.label_of(r.b));
            std::vector<bool> ok(ca.count + 1, false);
            for (const auto& p : pairs)
                ok[p.first] = true;
            for (std::size_t c = 1; c <= ca.count; ++c)
                if (!ok[c])
                    out.push_back({int(ri), name, {c}, r.a + " component " + std::to_string(c) + " touches no " + r.b});
            break;
        }
        case RuleType::forbidden_adjacency:
            for (const auto& p : touching(la, spec.label_of(r.b)))
                out.push_back({int(ri), name, {std::size_t(p.first)},
                               r.a + " component " + std::to_string(p.first) + " touches " + r.b + " component " +
                                   std::to_string(p.second)});
            break;
        case RuleType::max_components:
            if (ca.count > static_cast<std::size_t>(r.n)) {
                Violation v{int(ri), name, {}, std::to_string(ca.count) + " components"};
                for (std::size_t c = 1; c <= ca.count; ++c)
                    v.components.push_back(c);
                out.push_back(std::move(v));
            }
            break;
        case RuleType::contained_in: {
            // Cells outside b reachable from the border lie outside b's filled hull.
            const int lb = spec.label_of(r.b);
            std::vector<char> outside(pred.size(), 0);
            std::vector<std::size_t> stack;
            for (std::size_t i = 0; i < pred.size(); ++i)
                if (pred[i] != lb && on_border(e, pred.spatial_rank(), i)) {
                    outside[i] = 1;
                    stack.push_back(i);
                }
            while (!stack.empty()) {
                const std::size_t i = stack.back();
                stack.pop_back();
                for_each_neighbour(e, offsets, i, [&](std::size_t n) {
                    if (!outside[n] && pred[n] != lb) {
                        outside[n] = 1;
                        stack.push_back(n);
                    }
                });
            }
            std::vector<bool> bad(ca.count + 1, false);
            for (std::size_t i = 0; i < pred.size(); ++i)
                if (ca.id[i] != 0 && outside[i])
                    bad[ca.id[i]] = true;
            for (std::size_t c = 1; c <= ca.count; ++c)
                if (bad[c])
                    out.push_back({int(ri), name, {c}, r.a + " component " + std::to_string(c) + " lies outside " + r.b});
            break;
        }
        }
    }
    return out;
}

std::string TerResult::fraction() const
{
    return std::to_string(violating) + "/" + std::to_string(total);
}

TerResult ter(const std::vector<std::vector<Violation>>& results)
{
    if (results.empty())
        throw std::invalid_argument("ter: no results");
    TerResult t;
    t.total = results.size();
    for (const auto& r : results)
        t.violating += r.empty() ? 0 : 1;
    return t;
}

}  // namespace panet
