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

#include "panet/train.hpp"

#include "panet/tgrid_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace panet {

namespace {

std::string fmt(const char* format, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("train: learning_rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train: betas must lie in [0, 1)");
    if (!(epsilon > 0.0))
        throw std::invalid_argument("train: epsilon must be > 0");
    if (batch_size < 1 || epochs < 1)
        throw std::invalid_argument("train: batch_size and epochs must be >= 1");
    if (!(atlas_softness >= 0.0))
        throw std::invalid_argument("train: atlas_softness must be >= 0");
    if (!(seg_weight >= 0.0 && pose_weight >= 0.0))
        throw std::invalid_argument("train: loss weights must be >= 0");
}

Architecture TrainConfig::architecture(const SceneParams& scene) const
{
    Architecture a;
    a.variant = variant;
    a.dim = regime_dim(scene.regime);
    a.depth = depth;
    a.width = width;
    a.classes = static_cast<int>(scene.num_classes());
    a.input_channels = 1;
    a.pose_hidden = pose_hidden;
    a.spatial.assign(static_cast<std::size_t>(a.dim), static_cast<std::size_t>(scene.size));
    a.validate();
    return a;
}

AdamState AdamState::zeros(const ModelParams& params)
{
    AdamState s;
    for (const auto& p : params.parameters()) {
        s.m.emplace_back(p.value.shape());
        s.v.emplace_back(p.value.shape());
    }
    return s;
}

void AdamState::apply(ModelParams& params, const TrainConfig& c)
{
    auto& ps = params.parameters();
    if (m.size() != ps.size())
        throw StateError("optimizer state does not match the parameters");
    ++step;
    const double bc1 = 1.0 - std::pow(c.beta1, double(step));
    const double bc2 = 1.0 - std::pow(c.beta2, double(step));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto& value = ps[k].value;
        const auto& grad = ps[k].grad;
        auto& mk = m[k];
        auto& vk = v[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            mk[i] = c.beta1 * mk[i] + (1.0 - c.beta1) * g;
            vk[i] = c.beta2 * vk[i] + (1.0 - c.beta2) * g * g;
            value[i] -= c.learning_rate * (mk[i] / bc1) / (std::sqrt(vk[i] / bc2) + c.epsilon);
        }
    }
}

TrainResult train(const TrainConfig& config, const SceneParams& scene, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val, const EpochCallback& on_epoch)
{
    config.validate();
    scene.validate();
    if (train_set.empty())
        throw std::invalid_argument("train: empty training set");
    const auto arch = config.architecture(scene);
    for (const auto& s : train_set)
        if (s.regime != scene.regime)
            throw ShapeError("train: sample regime does not match the scene");

    const auto atlas = scene_atlas(scene, config.atlas_softness);
    const auto spec = scene_topology(scene);
    const auto& val_set = val.empty() ? train_set : val;
    const LossOptions options{config.seg_weight, config.pose_weight, config.detach_warp};

    TrainResult r;
    r.last = ModelParams::initialize(arch, config.seed);
    r.optimizer = AdamState::zeros(r.last);
    std::mt19937_64 shuffle_rng(config.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best_jaccard = -1.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(order[i - 1], order[pick(shuffle_rng)]);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        const auto batch = static_cast<std::size_t>(config.batch_size);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            r.last.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                const auto& s = train_set[order[b]];
                const auto l = loss_and_gradients(r.last, s.image, atlas, s.labels, s.pose, options);
                if (!std::isfinite(l.loss))
                    throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                       ", sample " + std::to_string(order[b]) + " (l_seg " +
                                       fmt("%g", l.l_seg) + ", l_pose " + fmt("%g", l.l_pose) + ")");
                rec.loss += l.loss;
                rec.l_seg += l.l_seg;
                rec.l_pose += l.l_pose;
            }
            r.last.scale_grad(1.0 / double(end - start));
            r.optimizer.apply(r.last, config);
        }
        const double n = double(order.size());
        rec.loss /= n;
        rec.l_seg /= n;
        rec.l_pose /= n;

        const auto report = evaluate(r.last, atlas, val_set, spec);
        rec.val_jaccard = report.mean_jaccard;
        rec.val_ter = report.ter.ratio();
        if (rec.val_jaccard > best_jaccard) {
            best_jaccard = rec.val_jaccard;
            r.best = r.last;
            r.best_epoch = epoch;
        }
        r.history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    r.best.zero_grad();
    r.last.zero_grad();
    return r;
}

std::string history_csv(const std::vector<EpochRecord>& history)
{
    std::string out = "epoch,loss,l_seg,l_pose,val_jaccard,val_ter\n";
    for (const auto& h : history) {
        out += std::to_string(h.epoch);
        for (double v : {h.loss, h.l_seg, h.l_pose, h.val_jaccard, h.val_ter})
            out += "," + fmt("%.10g", v);
        out += "\n";
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const AdamState& optimizer)
{
    save_params(dir, params);
    nlohmann::json j;
    j["method"] = "adam";
    j["step"] = optimizer.step;
    std::ofstream(dir / "optimizer.json") << j.dump(2) << '\n';
    std::filesystem::create_directories(dir / "adam");
    const auto& ps = params.parameters();
    for (std::size_t k = 0; k < optimizer.m.size() && k < ps.size(); ++k) {
        save_tgrid(dir / "adam" / ("m." + ps[k].name + ".tgrid"), optimizer.m[k]);
        save_tgrid(dir / "adam" / ("v." + ps[k].name + ".tgrid"), optimizer.v[k]);
    }
}

ModelParams load_checkpoint(const std::filesystem::path& dir, AdamState* optimizer)
{
    auto params = load_params(dir);
    if (optimizer) {
        const auto j = nlohmann::json::parse(read_text(dir / "optimizer.json"));
        *optimizer = AdamState::zeros(params);
        optimizer->step = j.at("step").get<long long>();
        const auto& ps = params.parameters();
        for (std::size_t k = 0; k < ps.size(); ++k) {
            optimizer->m[k] = load_tgrid(dir / "adam" / ("m." + ps[k].name + ".tgrid"));
            optimizer->v[k] = load_tgrid(dir / "adam" / ("v." + ps[k].name + ".tgrid"));
            require_same_shape(optimizer->m[k].shape(), ps[k].value.shape(), "optimizer moment " + ps[k].name);
            require_same_shape(optimizer->v[k].shape(), ps[k].value.shape(), "optimizer moment " + ps[k].name);
        }
    }
    return params;
}

EvalReport evaluate_predictions(const std::vector<LabelGrid>& predictions, const std::vector<PoseVector>& poses,
                                const std::vector<Sample>& truth, const TopologySpec& spec,
                                const std::vector<std::string>& classes, double grid_size)
{
    if (truth.empty())
        throw std::invalid_argument("evaluate: no samples");
    if (predictions.size() != truth.size() || poses.size() != truth.size())
        throw std::invalid_argument("evaluate: predictions and samples differ in count");
    EvalReport r;
    r.classes = classes;
    r.class_jaccard.assign(classes.size(), 0.0);
    std::vector<std::vector<Violation>> violations;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        SampleEval s;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            s.jaccard.push_back(jaccard(predictions[i], truth[i].labels, static_cast<int>(c) + 1));
            r.class_jaccard[c] += s.jaccard.back();
        }
        violations.push_back(check_topology(predictions[i], spec));
        s.violations = violations.back().size();
        s.pose = pose_errors(poses[i], truth[i].pose, grid_size);
        r.orientation_deg += s.pose.orientation_deg;
        r.localization_px += s.pose.localization_px;
        r.samples.push_back(std::move(s));
    }
    const double n = double(truth.size());
    for (double& j : r.class_jaccard)
        j /= n;
    r.mean_jaccard = std::accumulate(r.class_jaccard.begin(), r.class_jaccard.end(), 0.0) / double(classes.size());
    r.ter = ter(violations);
    r.orientation_deg /= n;
    r.localization_px /= n;
    return r;
}

EvalReport evaluate(const ModelParams& params, const AtlasSet& atlas, const std::vector<Sample>& samples,
                    const TopologySpec& spec)
{
    std::vector<LabelGrid> preds;
    std::vector<PoseVector> poses;
    for (const auto& s : samples) {
        auto p = predict(params, s.image, atlas);
        preds.push_back(std::move(p.labels));
        poses.push_back(p.q_pred);
    }
    return evaluate_predictions(preds, poses, samples, spec, atlas.classes,
                                double(params.arch().spatial.front()));
}

std::string report_csv(const EvalReport& r, const std::string& row_name)
{
    std::string head = "variant", row = row_name;
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        head += "," + r.classes[c] + "_jaccard";
        row += "," + fmt("%.6f", r.class_jaccard[c]);
    }
    head += ",mean_jaccard,ter,ter_ratio,orientation_deg,localization_px\n";
    row += "," + fmt("%.6f", r.mean_jaccard) + "," + r.ter.fraction() + "," + fmt("%.6f", r.ter.ratio()) + "," +
           fmt("%.6f", r.orientation_deg) + "," + fmt("%.6f", r.localization_px) + "\n";
    return head + row;
}

std::string report_table(const EvalReport& r, const std::string& row_name)
{
    const int label_width = static_cast<int>(std::max<std::size_t>(10, row_name.size()));
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-*s", label_width, "model");
    std::string head = buf;
    std::snprintf(buf, sizeof buf, "%-*s", label_width, row_name.c_str());
    std::string row = buf;
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        std::snprintf(buf, sizeof buf, " | %9s", r.classes[c].c_str());
        head += buf;
        std::snprintf(buf, sizeof buf, " | %9.2f", 100.0 * r.class_jaccard[c]);
        row += buf;
    }
    std::snprintf(buf, sizeof buf, " | %9s | %9s | %10s | %9s", "mean", "TER", "orient deg", "loc px");
    head += buf;
    std::snprintf(buf, sizeof buf, " | %9.2f | %9s | %10.2f | %9.2f", 100.0 * r.mean_jaccard,
                  r.ter.fraction().c_str(), r.orientation_deg, r.localization_px);
    row += buf;
    return "Jaccard index (%)\n" + head + "\n" + std::string(head.size(), '-') + "\n" + row + "\n";
}

}  // namespace panet
