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

#include "panet/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace panet {

/// face: 4 neighbours in 2D, 6 in 3D. full: 8 / 26.
enum class Connectivity { face, full };

std::string connectivity_name(Connectivity c);
Connectivity parse_connectivity(const std::string& name);

/// |pred == label and truth == label| / |pred == label or truth == label|; 1 when both
/// masks are empty.
double jaccard(const LabelGrid& pred, const LabelGrid& truth, int label);

struct Components {
    LabelGrid ids;                    // 0 outside the mask, components numbered from 1
    std::size_t count = 0;
    std::vector<std::size_t> sizes;   // sizes[i] is the size of component i + 1
};

/// Labels the nonzero cells of `mask`. Components are numbered in raster order of their
/// first cell.
Components connected_components(const LabelGrid& mask, Connectivity connectivity = Connectivity::face);

enum class RuleType { required_adjacency, forbidden_adjacency, max_components, contained_in };

std::string rule_type_name(RuleType t);

/// required_adjacency(a, b): every component of a touches some component of b.
/// forbidden_adjacency(a, b): no component of a touches a component of b.
/// max_components(a, n): class a has at most n components.
/// contained_in(a, b): every cell of a lies inside b with b's holes filled, i.e. cannot be
/// reached from the grid border through cells outside b.
struct TopologyRule {
    RuleType type = RuleType::required_adjacency;
    std::string a, b;
    int n = 0;

    std::string describe() const;
    bool operator==(const TopologyRule&) const = default;
};

/// Topology rules over named classes. Class i of `classes` is label i + 1; 0 is background.
struct TopologySpec {
    std::vector<std::string> classes;
    std::vector<TopologyRule> rules;
    Connectivity connectivity = Connectivity::face;
    std::size_t min_component_size = 1;      // smaller components are ignored
    bool missing_class_is_violation = true;  // a declared class with no component

    int label_of(const std::string& name) const;
    void validate() const;

    std::string to_json() const;
    static TopologySpec from_json(const std::string& text);
    bool operator==(const TopologySpec&) const = default;

    /// pre, cleft, post: cleft touches pre and post, pre never touches post, one cleft.
    static TopologySpec synapse();
    /// disc, cup: cup inside the disc, one component each.
    static TopologySpec retina();
    /// "synapse" or "retina".
    static TopologySpec builtin(const std::string& name);
};

TopologySpec load_topology_spec(const std::filesystem::path& path);

struct Violation {
    int rule_index = -1;                // -1 for a missing class
    std::string rule;                   // e.g. "required_adjacency(cleft, post)"
    std::vector<std::size_t> components;  // offending component ids of the rule's class a
    std::string detail;
};

/// All violations of `spec` in a label grid; empty when the grid is topologically clean.
std::vector<Violation> check_topology(const LabelGrid& pred, const TopologySpec& spec);

struct TerResult {
    std::size_t violating = 0;
    std::size_t total = 0;
    double ratio() const { return total == 0 ? 0.0 : double(violating) / double(total); }
    std::string fraction() const;  // "k/N"
};

/// Share of results with at least one violation.
TerResult ter(const std::vector<std::vector<Violation>>& results);

}  // namespace panet
