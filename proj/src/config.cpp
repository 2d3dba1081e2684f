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

#include "panet/config.hpp"

#include "panet/tgrid_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace panet {

namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
}

// Typed access with the field path in every error.
class Reader {
public:
    Reader(const json& j, std::string where, const std::set<std::string>& allowed) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object())
            throw ConfigError(where_ + ": expected an object");
        for (const auto& item : j_.items())
            if (!allowed.count(item.key()))
                throw ConfigError(path(item.key()) + ": unknown key");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    const json& raw(const std::string& key) const { return j_.at(key); }

    void number(const std::string& key, double& out) const
    {
        if (!has(key))
            return;
        if (!j_.at(key).is_number())
            throw ConfigError(path(key) + ": expected a number");
        out = j_.at(key).get<double>();
    }

    template <typename Int>
    void integer(const std::string& key, Int& out) const
    {
        if (!has(key))
            return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer())
            throw ConfigError(path(key) + ": expected an integer");
        if (v.is_number_unsigned())
            out = static_cast<Int>(v.get<std::uint64_t>());
        else {
            const auto s = v.get<std::int64_t>();
            if (std::is_unsigned_v<Int> && s < 0)
                throw ConfigError(path(key) + ": expected a non-negative integer");
            out = static_cast<Int>(s);
        }
    }

    void boolean(const std::string& key, bool& out) const
    {
        if (!has(key))
            return;
        if (!j_.at(key).is_boolean())
            throw ConfigError(path(key) + ": expected true or false");
        out = j_.at(key).get<bool>();
    }

    void string(const std::string& key, std::string& out) const
    {
        if (!has(key))
            return;
        if (!j_.at(key).is_string())
            throw ConfigError(path(key) + ": expected a string");
        out = j_.at(key).get<std::string>();
    }

    void numbers(const std::string& key, std::vector<double>& out) const
    {
        if (!has(key))
            return;
        const auto& v = j_.at(key);
        if (!v.is_array())
            throw ConfigError(path(key) + ": expected an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number())
                throw ConfigError(path(key) + "[" + std::to_string(i) + "]: expected a number");
            out.push_back(v[i].get<double>());
        }
    }

private:
    const json& j_;
    std::string where_;
};

// Rethrows domain validation errors with a field path prefix.
template <typename F>
void checked(const std::string& where, F&& f)
{
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

json scene_json(const SceneParams& p)
{
    return json{{"size", p.size},
                {"translation", p.ranges.translation},
                {"log_scale", p.ranges.log_scale},
                {"rotation_deg", p.ranges.rotation_deg},
                {"class_means", p.class_means},
                {"class_stds", p.class_stds},
                {"noise", p.noise},
                {"distractors", p.distractors},
                {"distractor_min_radius", p.distractor_min_radius},
                {"distractor_max_radius", p.distractor_max_radius},
                {"cleft_halfwidth", p.cleft_halfwidth},
                {"disc_radius", p.disc_radius},
                {"cup_radius", p.cup_radius}};
}

void read_scene(const Reader& r, SceneParams& p)
{
    r.integer("size", p.size);
    r.number("translation", p.ranges.translation);
    r.number("log_scale", p.ranges.log_scale);
    r.number("rotation_deg", p.ranges.rotation_deg);
    r.numbers("class_means", p.class_means);
    r.numbers("class_stds", p.class_stds);
    r.number("noise", p.noise);
    r.integer("distractors", p.distractors);
    r.number("distractor_min_radius", p.distractor_min_radius);
    r.number("distractor_max_radius", p.distractor_max_radius);
    r.number("cleft_halfwidth", p.cleft_halfwidth);
    r.number("disc_radius", p.disc_radius);
    r.number("cup_radius", p.cup_radius);
}

const std::set<std::string> kSceneKeys = {"size",        "translation", "log_scale",   "rotation_deg",
                                          "class_means", "class_stds",  "noise",       "distractors",
                                          "distractor_min_radius", "distractor_max_radius", "cleft_halfwidth",
                                          "disc_radius", "cup_radius"};

json parse_json(const std::string& text, const std::string& what)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": invalid JSON (" + e.what() + ")");
    }
}

}  // namespace

std::array<double, 3> SplitCounts::fractions() const
{
    const double n = double(total());
    return {double(train) / n, double(val) / n, double(test) / n};
}

ExperimentConfig ExperimentConfig::defaults(Regime r, std::uint64_t seed)
{
    ExperimentConfig c;
    c.scene = SceneParams::defaults(r);
    if (r == Regime::synapse3d) {
        c.splits = {16, 4, 8};
        c.train.width = 4;
    }
    c.output_dir = std::filesystem::path("runs") / regime_name(r);
    c.set_seed(seed);
    return c;
}

void ExperimentConfig::set_seed(std::uint64_t s)
{
    seed = s;
    scene.seed = s;
    train.seed = s;
}

void ExperimentConfig::validate() const
{
    checked("scene", [&] { scene.validate(); });
    checked("train", [&] { train.validate(); });
    checked("train", [&] { train.architecture(scene); });
    if (splits.train == 0)
        throw ConfigError("splits.train: must be >= 1");
    if (!(atlas_softness >= 0.0))
        throw ConfigError("atlas.softness: must be >= 0");
    if (scene.seed != seed || train.seed != seed)
        throw ConfigError("seed: scene and training seeds must follow the master seed");
    const auto spec = topology_spec();
    if (spec.classes != scene.class_names())
        throw ConfigError("topology: classes do not match the regime's classes");
}

TopologySpec ExperimentConfig::topology_spec() const
{
    if (topology == "builtin")
        return scene_topology(scene);
    if (topology == "synapse" || topology == "retina")
        return TopologySpec::builtin(topology);
    if (!std::filesystem::exists(topology))
        throw ConfigError("topology: no such file '" + topology + "'");
    TopologySpec spec;
    checked("topology", [&] { spec = load_topology_spec(topology); });
    return spec;
}

std::string ExperimentConfig::to_json() const
{
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["regime"] = regime_name(scene.regime);
    j["seed"] = seed;
    j["output_dir"] = output_dir.generic_string();
    j["topology"] = topology;
    j["scene"] = scene_json(scene);
    j["splits"] = {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
    j["atlas"] = {{"softness", atlas_softness}};
    j["train"] = {{"variant", variant_name(train.variant)},
                  {"depth", train.depth},
                  {"width", train.width},
                  {"pose_hidden", train.pose_hidden},
                  {"learning_rate", train.learning_rate},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"epsilon", train.epsilon},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"seg_weight", train.seg_weight},
                  {"pose_weight", train.pose_weight},
                  {"detach_warp", train.detach_warp}};
    return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text)
{
    const auto j = parse_json(text, "config");
    const Reader top(j, "", {"schema_version", "regime", "seed", "output_dir", "topology", "scene", "splits",
                             "atlas", "train"});
    if (!top.has("schema_version"))
        throw ConfigError("schema_version: missing");
    int version = 0;
    top.integer("schema_version", version);
    if (version != kConfigSchemaVersion)
        throw ConfigError("schema_version: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
    if (!top.has("regime"))
        throw ConfigError("regime: missing");
    if (!top.has("seed"))
        throw ConfigError("seed: missing");
    std::string regime;
    top.string("regime", regime);
    Regime r{};
    checked("regime", [&] { r = parse_regime(regime); });
    std::uint64_t seed = 0;
    top.integer("seed", seed);

    auto c = defaults(r, seed);
    std::string out = c.output_dir.generic_string();
    top.string("output_dir", out);
    c.output_dir = out;
    top.string("topology", c.topology);

    if (top.has("scene")) {
        const Reader s(top.raw("scene"), "scene", kSceneKeys);
        read_scene(s, c.scene);
    }
    if (top.has("splits")) {
        const Reader s(top.raw("splits"), "splits", {"train", "val", "test"});
        s.integer("train", c.splits.train);
        s.integer("val", c.splits.val);
        s.integer("test", c.splits.test);
    }
    if (top.has("atlas")) {
        const Reader a(top.raw("atlas"), "atlas", {"softness"});
        a.number("softness", c.atlas_softness);
    }
    if (top.has("train")) {
        const Reader t(top.raw("train"), "train",
                       {"variant", "depth", "width", "pose_hidden", "learning_rate", "beta1", "beta2", "epsilon",
                        "batch_size", "epochs", "seg_weight", "pose_weight", "detach_warp"});
        std::string variant = variant_name(c.train.variant);
        t.string("variant", variant);
        checked("train.variant", [&] { c.train.variant = parse_variant(variant); });
        t.integer("depth", c.train.depth);
        t.integer("width", c.train.width);
        t.integer("pose_hidden", c.train.pose_hidden);
        t.number("learning_rate", c.train.learning_rate);
        t.number("beta1", c.train.beta1);
        t.number("beta2", c.train.beta2);
        t.number("epsilon", c.train.epsilon);
        t.integer("batch_size", c.train.batch_size);
        t.integer("epochs", c.train.epochs);
        t.number("seg_weight", c.train.seg_weight);
        t.number("pose_weight", c.train.pose_weight);
        t.boolean("detach_warp", c.train.detach_warp);
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("config: no such file '" + path.string() + "'");
    return ExperimentConfig::from_json(read_text(path));
}

std::filesystem::path resolve_output(const std::filesystem::path& dir)
{
    const char* root = std::getenv("PANET_OUTPUT_ROOT");
    if (root && *root && dir.is_relative())
        return std::filesystem::path(root) / dir;
    return dir;
}

std::vector<Sample> Dataset::subset(const std::vector<std::size_t>& indices) const
{
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (auto i : indices)
        out.push_back(samples.at(i));
    return out;
}

Dataset build_dataset(const ExperimentConfig& config)
{
    Dataset d;
    d.scene = config.scene;
    d.samples = generate(config.scene, config.splits.total());
    d.splits = split(config.splits.total(), config.splits.fractions(), config.seed);
    return d;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data)
{
    std::filesystem::create_directories(dir / "samples");
    std::vector<std::string> tag(data.samples.size(), "unused");
    for (auto i : data.splits.train)
        tag.at(i) = "train";
    for (auto i : data.splits.val)
        tag.at(i) = "val";
    for (auto i : data.splits.test)
        tag.at(i) = "test";
    json m;
    m["schema_version"] = kConfigSchemaVersion;
    m["regime"] = regime_name(data.scene.regime);
    m["classes"] = data.scene.class_names();
    m["seed"] = data.scene.seed;
    m["scene"] = scene_json(data.scene);
    m["splits"] = {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}};
    m["samples"] = json::array();
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "samples/%04zu", i);
        const std::string base = stem;
        const auto& s = data.samples[i];
        save_tgrid(dir / (base + ".image.tgrid"), s.image);
        save_labels(dir / (base + ".labels.tgrid"), s.labels);
        save_pose(dir / (base + ".pose.json"), s.pose);
        m["samples"].push_back({{"index", i},
                                {"split", tag[i]},
                                {"image", base + ".image.tgrid"},
                                {"labels", base + ".labels.tgrid"},
                                {"pose", base + ".pose.json"}});
    }
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir)
{
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path))
        throw ConfigError("dataset: no manifest.json in " + dir.string());
    const auto m = parse_json(read_text(path), "manifest");
    const Reader top(m, "manifest", {"schema_version", "regime", "classes", "seed", "scene", "splits", "samples"});
    int version = 0;
    top.integer("schema_version", version);
    if (version != kConfigSchemaVersion)
        throw ConfigError("manifest.schema_version: unsupported version " + std::to_string(version));
    std::string regime;
    top.string("regime", regime);
    Dataset d;
    checked("manifest.regime", [&] { d.scene = SceneParams::defaults(parse_regime(regime)); });
    top.integer("seed", d.scene.seed);
    if (top.has("scene"))
        read_scene(Reader(top.raw("scene"), "manifest.scene", kSceneKeys), d.scene);
    checked("manifest.scene", [&] { d.scene.validate(); });

    const auto& samples = top.raw("samples");
    if (!samples.is_array())
        throw ConfigError("manifest.samples: expected an array");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string where = "manifest.samples[" + std::to_string(i) + "]";
        const Reader r(samples[i], where, {"index", "split", "image", "labels", "pose"});
        std::string image, labels, pose;
        r.string("image", image);
        r.string("labels", labels);
        r.string("pose", pose);
        Sample s;
        s.regime = d.scene.regime;
        s.image = load_tgrid(dir / image);
        s.labels = load_labels(dir / labels);
        s.pose = load_pose(dir / pose);
        d.samples.push_back(std::move(s));
    }
    const Reader sp(top.raw("splits"), "manifest.splits", {"train", "val", "test"});
    auto indices = [&](const std::string& key) {
        std::vector<std::size_t> out;
        for (const auto& v : sp.raw(key)) {
            const auto i = v.get<std::size_t>();
            if (i >= d.samples.size())
                throw ConfigError(sp.path(key) + ": index " + std::to_string(i) + " out of range");
            out.push_back(i);
        }
        return out;
    };
    d.splits = {indices("train"), indices("val"), indices("test")};
    return d;
}

}  // namespace panet
