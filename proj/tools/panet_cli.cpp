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

// panet: command-line front end for data generation, training, evaluation and checks.
//
// Exit codes: 0 ok, 1 failed check or I/O error, 2 usage/config error, 3 numeric divergence.

#include "panet/config.hpp"
#include "panet/gradsuite.hpp"
#include "panet/pnm.hpp"
#include "panet/tgrid_io.hpp"
#include "panet/warp.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace panet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::string out;
    std::string data;
};

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << text;
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
}

ExperimentConfig resolve_config(const CommonOptions& o)
{
    auto c = load_experiment_config(o.config);
    if (o.seed)
        c.set_seed(*o.seed);
    if (!o.variant.empty())
        c.train.variant = parse_variant(o.variant);
    if (!o.out.empty())
        c.output_dir = o.out;
    c.validate();
    return c;
}

fs::path output_dir(const ExperimentConfig& c)
{
    return resolve_output(c.output_dir);
}

// The dataset from --data, else <output>/data when it exists, else generated in memory.
Dataset obtain_dataset(const ExperimentConfig& c, const std::string& data)
{
    const fs::path dir = data.empty() ? output_dir(c) / "data" : fs::path(data);
    if (!data.empty() || fs::exists(dir / "manifest.json")) {
        auto d = load_dataset(dir);
        if (d.scene != c.scene)
            throw ConfigError("data: dataset in " + dir.string() + " was generated with a different scene or seed");
        return d;
    }
    return build_dataset(c);
}

AtlasSet labels_as_atlas(const LabelGrid& labels, const std::vector<std::string>& classes)
{
    AtlasSet a;
    a.classes = classes;
    Shape shape{1};
    shape.insert(shape.end(), labels.shape().begin(), labels.shape().end());
    for (std::size_t c = 0; c < classes.size(); ++c) {
        TensorGrid g(shape);
        for (std::size_t i = 0; i < labels.size(); ++i)
            g[i] = labels[i] == static_cast<int>(c) + 1 ? 1.0 : 0.0;
        a.grids.push_back(std::move(g));
    }
    return a;
}

void write_image_preview(const fs::path& path, const TensorGrid& image)
{
    const auto e = image.extent();
    write_pgm(path, e.w, e.h, spatial_slice(image, 0, e.d / 2));
}

std::vector<Sample> pick_split(const Dataset& d, const std::string& which)
{
    if (which == "train")
        return d.subset(d.splits.train);
    if (which == "val")
        return d.subset(d.splits.val);
    if (which == "test")
        return d.subset(d.splits.test);
    throw ConfigError("split: expected train, val or test");
}

int cmd_gen_data(const CommonOptions& o)
{
    const auto c = resolve_config(o);
    const auto dir = output_dir(c) / "data";
    const auto d = build_dataset(c);
    save_dataset(dir, d);
    write_file(dir / "config.json", c.to_json());
    const auto classes = c.scene.class_names();
    fs::create_directories(dir / "previews");
    for (std::size_t i = 0; i < std::min<std::size_t>(d.samples.size(), 4); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu", i);
        write_image_preview(dir / "previews" / (std::string(name) + "_image.pgm"), d.samples[i].image);
        write_atlas_previews(dir / "previews", labels_as_atlas(d.samples[i].labels, classes),
                             std::string(name) + "_labels_");
    }
    std::cout << "wrote " << d.samples.size() << " samples (" << d.splits.train.size() << " train, "
              << d.splits.val.size() << " val, " << d.splits.test.size() << " test) to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const CommonOptions& o, bool quiet)
{
    const auto c = resolve_config(o);
    const auto d = obtain_dataset(c, o.data);
    const auto dir = output_dir(c) / variant_name(c.train.variant);
    fs::create_directories(dir);
    write_file(dir / "config.json", c.to_json());
    auto train_cfg = c.train;
    train_cfg.atlas_softness = c.atlas_softness;
    const auto result = train(train_cfg, c.scene, d.subset(d.splits.train), d.subset(d.splits.val),
                              [&](const EpochRecord& e) {
                                  if (!quiet)
                                      std::fprintf(stderr,
                                                   "epoch %3d  loss %.5f  seg %.5f  pose %.5f  val jaccard %.4f  "
                                                   "val TER %.4f\n",
                                                   e.epoch, e.loss, e.l_seg, e.l_pose, e.val_jaccard, e.val_ter);
                              });
    save_checkpoint(dir / "checkpoint", result.best, result.optimizer);
    save_checkpoint(dir / "last", result.last, result.optimizer);
    write_file(dir / "history.csv", history_csv(result.history));
    std::cout << "best epoch " << result.best_epoch << "; checkpoint in " << (dir / "checkpoint").string() << "\n";
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, const std::string& which, bool ground_truth)
{
    const auto c = resolve_config(o);
    const auto d = obtain_dataset(c, o.data);
    const auto samples = pick_split(d, which);
    if (samples.empty())
        throw ConfigError("split: the " + which + " split is empty");
    const auto spec = c.topology_spec();
    const auto classes = c.scene.class_names();
    const auto dir = output_dir(c) / (ground_truth ? std::string("ground_truth") : variant_name(c.train.variant));

    EvalReport report;
    std::string row;
    std::vector<LabelGrid> preds;
    if (ground_truth) {
        std::vector<PoseVector> poses;
        for (const auto& s : samples) {
            preds.push_back(s.labels);
            poses.push_back(s.pose);
        }
        report = evaluate_predictions(preds, poses, samples, spec, classes, c.scene.size);
        row = "ground_truth";
    } else {
        const fs::path ckpt = checkpoint.empty() ? dir / "checkpoint" : fs::path(checkpoint);
        if (!fs::exists(ckpt / "arch.json"))
            throw ConfigError("checkpoint: no checkpoint in " + ckpt.string());
        const auto params = load_checkpoint(ckpt);
        const auto atlas = scene_atlas(c.scene, c.atlas_softness);
        std::vector<PoseVector> poses;
        for (const auto& s : samples) {
            auto p = predict(params, s.image, atlas);
            preds.push_back(std::move(p.labels));
            poses.push_back(p.q_pred);
        }
        report = evaluate_predictions(preds, poses, samples, spec, classes, c.scene.size);
        row = variant_name(params.arch().variant);
    }
    write_file(dir / ("report_" + which + ".csv"), report_csv(report, row));
    write_file(dir / ("report_" + which + ".txt"), report_table(report, row));
    write_file(dir / ("eval_config.json"), c.to_json());
    write_atlas_previews(dir / "previews", labels_as_atlas(preds.front(), classes), "first_" + which + "_prediction_");
    std::cout << report_table(report, row);
    return 0;
}

AtlasSet atlas_argument(const std::string& atlas, int size)
{
    if (atlas == "synapse")
        return build_synapse_atlas({size, 0.1, 0.1});
    if (atlas == "retina")
        return build_disc_cup_atlas({size, 0.28, 0.14, 0.1});
    if (!fs::exists(fs::path(atlas) / "atlas.json"))
        throw ConfigError("atlas: expected an atlas directory, 'synapse' or 'retina', got '" + atlas + "'");
    return load_atlas(atlas);
}

int cmd_warp(const std::string& atlas_arg, int size, const std::string& pose_path, const std::string& out,
             std::optional<std::uint64_t> seed)
{
    const auto atlas = atlas_argument(atlas_arg, size);
    const auto q = pose_path.empty() ? PoseVector::identity(atlas.spatial_rank()) : load_pose(pose_path);
    if (q.dim != atlas.spatial_rank())
        throw ConfigError("pose: " + std::to_string(q.dim) + "D pose for a " +
                          std::to_string(atlas.spatial_rank()) + "D atlas");
    const fs::path dir = resolve_output(out);
    const auto warped = warp(atlas, q);
    save_atlas(dir / "warped", warped);
    save_pose(dir / "pose.json", q);
    write_atlas_previews(dir / "previews", atlas, "input_");
    write_atlas_previews(dir / "previews", warped, "warped_");
    nlohmann::json record{{"atlas", atlas_arg}, {"size", size}, {"pose", pose_path}, {"out", dir.generic_string()}};
    if (seed)
        record["seed"] = *seed;
    write_file(dir / "config.json", record.dump(2) + "\n");
    std::cout << "warped atlas written to " << (dir / "warped").string() << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed)
{
    const auto rows = run_gradient_suite(seed);
    bool ok = true;
    std::printf("%-24s %12s %10s %8s  %s\n", "check", "max rel err", "tolerance", "coords", "result");
    for (const auto& r : rows) {
        std::printf("%-24s %12.3e %10.0e %8zu  %s\n", r.name.c_str(), r.max_relative_error, r.tolerance,
                    r.coords_checked, r.pass() ? "PASS" : "FAIL");
        ok = ok && r.pass();
    }
    return ok ? 0 : kExitFailed;
}

TopologySpec topology_argument(const std::string& arg)
{
    if (arg == "synapse" || arg == "retina")
        return TopologySpec::builtin(arg);
    if (!fs::exists(arg))
        throw ConfigError("topology: expected 'synapse', 'retina' or a JSON file, got '" + arg + "'");
    return load_topology_spec(arg);
}

int cmd_metrics(const std::string& pred_path, const std::string& truth_path, const std::string& topology)
{
    const auto spec = topology_argument(topology);
    const auto pred = load_labels(pred_path);
    const auto violations = check_topology(pred, spec);
    if (!truth_path.empty()) {
        const auto truth = load_labels(truth_path);
        double sum = 0.0;
        for (std::size_t c = 0; c < spec.classes.size(); ++c) {
            const double j = jaccard(pred, truth, static_cast<int>(c) + 1);
            sum += j;
            std::printf("jaccard %-10s %7.2f%%\n", spec.classes[c].c_str(), 100.0 * j);
        }
        std::printf("jaccard %-10s %7.2f%%\n", "mean", 100.0 * sum / double(spec.classes.size()));
    }
    std::printf("topology violations: %zu\n", violations.size());
    for (const auto& v : violations)
        std::printf("  %s%s%s\n", v.rule.c_str(), v.detail.empty() ? "" : ": ", v.detail.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PA-Net: atlas-guided segmentation with pose estimation"};
    app.require_subcommand(1);
    CommonOptions o;
    bool quiet = false;

    auto add_common = [&](CLI::App* cmd, bool with_variant, bool with_data) {
        cmd->add_option("-c,--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--seed", o.seed, "override the master seed");
        cmd->add_option("--out", o.out, "override the output directory");
        if (with_variant)
            cmd->add_option("--variant", o.variant, "model variant")
                ->check(CLI::IsMember({"plain", "panet", "naive"}));
        if (with_data)
            cmd->add_option("--data", o.data, "dataset directory (default: <output>/data, else generated)");
    };

    auto* gen = app.add_subcommand("gen-data", "generate and split a synthetic dataset");
    add_common(gen, false, false);

    auto* tr = app.add_subcommand("train", "train a model and write checkpoint + history CSV");
    add_common(tr, true, true);
    tr->add_flag("-q,--quiet", quiet, "no per-epoch progress");

    std::string checkpoint, which = "test";
    bool ground_truth = false;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint: Jaccard, TER and pose errors");
    add_common(ev, true, true);
    ev->add_option("--checkpoint", checkpoint, "checkpoint directory (default: <output>/<variant>/checkpoint)");
    ev->add_option("--split", which, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_flag("--ground-truth", ground_truth, "score the ground-truth labels and poses themselves");

    std::string atlas_arg, pose_path, warp_out = "warp";
    int size = 32;
    auto* wp = app.add_subcommand("warp", "warp an atlas by a pose and write previews");
    wp->add_option("--atlas", atlas_arg, "atlas directory, or 'synapse' / 'retina'")->required();
    wp->add_option("--size", size, "grid size for built-in atlases")->check(CLI::Range(8, 512));
    wp->add_option("--pose", pose_path, "pose JSON (default: identity)");
    wp->add_option("--out", warp_out, "output directory");
    wp->add_option("--seed", o.seed, "recorded with the outputs");

    std::uint64_t gc_seed = 7;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    gc->add_option("--seed", gc_seed, "fixture seed");

    std::string pred_path, truth_path, topology = "synapse";
    auto* mt = app.add_subcommand("metrics", "Jaccard and topology violations of a label grid");
    mt->add_option("--pred", pred_path, "predicted labels (TGRID)")->required()->check(CLI::ExistingFile);
    mt->add_option("--truth", truth_path, "ground-truth labels (TGRID)")->check(CLI::ExistingFile);
    mt->add_option("--topology", topology, "'synapse', 'retina' or a topology JSON file");
    mt->add_option("--seed", o.seed, "accepted for uniformity; unused");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(o);
        if (tr->parsed())
            return cmd_train(o, quiet);
        if (ev->parsed())
            return cmd_eval(o, checkpoint, which, ground_truth);
        if (wp->parsed())
            return cmd_warp(atlas_arg, size, pose_path, warp_out, o.seed);
        if (gc->parsed())
            return cmd_gradcheck(gc_seed);
        if (mt->parsed())
            return cmd_metrics(pred_path, truth_path, topology);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailed;
    }
    return kExitFailed;
}
