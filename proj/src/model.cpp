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

#include "panet/model.hpp"

#include "panet/ops.hpp"
#include "panet/tgrid_io.hpp"
#include "panet/warp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace panet {

namespace {

// Scale of the last pose layer relative to He init; keeps the first poses near identity.
constexpr double kPoseOutputGain = 1e-2;

std::string level_name(const std::string& prefix, int level)
{
    return prefix + std::to_string(level);
}

Shape kernel_shape(std::size_t cout, std::size_t cin, int dim, std::size_t k)
{
    Shape s{cout, cin};
    for (int a = 0; a < dim; ++a)
        s.push_back(k);
    return s;
}

Shape image_shape(std::size_t channels, const Shape& spatial)
{
    Shape s{channels};
    s.insert(s.end(), spatial.begin(), spatial.end());
    return s;
}

void accumulate(Parameter& p, const TensorGrid& g)
{
    p.grad += g;
}

void accumulate(Parameter& p, std::span<const double> g)
{
    for (std::size_t i = 0; i < g.size(); ++i)
        p.grad[i] += g[i];
}

BlockCache block_forward(const ModelParams& params, const std::string& name, TensorGrid input)
{
    BlockCache c;
    c.input = std::move(input);
    const auto& wa = params.at(name + ".conv_a.w").value;
    const auto& ba = params.at(name + ".conv_a.b").value;
    const auto& wb = params.at(name + ".conv_b.w").value;
    const auto& bb = params.at(name + ".conv_b.b").value;
    c.a_pre = conv_forward(c.input, wa, ba.data(), 1, 1);
    c.a = relu(c.a_pre);
    c.b_pre = conv_forward(c.a, wb, bb.data(), 1, 1);
    c.out = relu(c.b_pre);
    return c;
}

// Returns the gradient with respect to the block input.
TensorGrid block_backward(ModelParams& params, const std::string& name, const BlockCache& c,
                          const TensorGrid& grad_out)
{
    auto& wa = params.at(name + ".conv_a.w");
    auto& ba = params.at(name + ".conv_a.b");
    auto& wb = params.at(name + ".conv_b.w");
    auto& bb = params.at(name + ".conv_b.b");
    const auto gb = conv_backward(relu_backward(grad_out, c.b_pre), c.a, wb.value, 1, 1);
    accumulate(wb, gb.kernel);
    accumulate(bb, gb.bias);
    const auto ga = conv_backward(relu_backward(gb.input, c.a_pre), c.input, wa.value, 1, 1);
    accumulate(wa, ga.kernel);
    accumulate(ba, ga.bias);
    return ga.input;
}

std::vector<BlockCache> encoder_forward(const ModelParams& params, const std::string& prefix, const TensorGrid& x)
{
    const int depth = params.arch().depth;
    std::vector<BlockCache> levels;
    levels.reserve(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l)
        levels.push_back(block_forward(params, level_name(prefix, l), l == 0 ? x : avgpool2(levels.back().out)));
    return levels;
}

// grad_out[l] is the gradient arriving at level l's output from outside the encoder.
void encoder_backward(ModelParams& params, const std::string& prefix, const std::vector<BlockCache>& levels,
                      std::vector<TensorGrid> grad_out)
{
    for (int l = static_cast<int>(levels.size()) - 1; l >= 0; --l) {
        const auto g_in = block_backward(params, level_name(prefix, l), levels[l], grad_out[l]);
        if (l > 0)
            grad_out[l - 1] += avgpool2_backward(g_in, levels[l - 1].out.shape());
    }
}

PoseVector pose_from_network(int dim, const std::vector<double>& raw)
{
    for (double v : raw)
        if (!std::isfinite(v))
            throw NumericError("pose head produced a non-finite output");
    try {
        return PoseVector::from_raw(dim, raw);
    } catch (const std::invalid_argument& e) {
        throw NumericError(std::string("pose head produced an invalid pose: ") + e.what());
    }
}

}  // namespace

std::string variant_name(Variant v)
{
    switch (v) {
    case Variant::plain:
        return "plain";
    case Variant::panet:
        return "panet";
    case Variant::naive:
        return "naive";
    }
    return "?";
}

Variant parse_variant(const std::string& name)
{
    if (name == "plain")
        return Variant::plain;
    if (name == "panet")
        return Variant::panet;
    if (name == "naive")
        return Variant::naive;
    throw std::invalid_argument("unknown variant '" + name + "' (expected plain, panet or naive)");
}

std::size_t Architecture::level_width(int level) const
{
    return static_cast<std::size_t>(width) << level;
}

Shape Architecture::level_spatial(int level) const
{
    Shape s = spatial;
    for (auto& n : s)
        n >>= level;
    return s;
}

std::size_t Architecture::latent_size() const
{
    return level_width(depth - 1) * shape_product(level_spatial(depth - 1));
}

void Architecture::validate() const
{
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("architecture: dim must be 2 or 3");
    if (depth < 2 || depth > 6)
        throw std::invalid_argument("architecture: depth must be in [2, 6]");
    if (width < 1 || classes < 1 || input_channels < 1 || pose_hidden < 1)
        throw std::invalid_argument("architecture: width, classes, input_channels and pose_hidden must be positive");
    if (spatial.size() != static_cast<std::size_t>(dim))
        throw ShapeError("architecture: spatial shape " + shape_to_string(spatial) + " is not " +
                         std::to_string(dim) + "D");
    const std::size_t step = std::size_t{1} << (depth - 1);
    for (auto n : spatial)
        if (n == 0 || n % step != 0)
            throw ShapeError("architecture: spatial shape " + shape_to_string(spatial) + " not divisible by " +
                             std::to_string(step));
}

std::string Architecture::to_json() const
{
    nlohmann::json j;
    j["variant"] = variant_name(variant);
    j["dim"] = dim;
    j["depth"] = depth;
    j["width"] = width;
    j["classes"] = classes;
    j["input_channels"] = input_channels;
    j["pose_hidden"] = pose_hidden;
    j["spatial"] = spatial;
    return j.dump(2);
}

Architecture Architecture::from_json(const std::string& text)
{
    const auto j = nlohmann::json::parse(text);
    Architecture a;
    a.variant = parse_variant(j.at("variant").get<std::string>());
    a.dim = j.at("dim").get<int>();
    a.depth = j.at("depth").get<int>();
    a.width = j.at("width").get<int>();
    a.classes = j.at("classes").get<int>();
    a.input_channels = j.at("input_channels").get<int>();
    a.pose_hidden = j.at("pose_hidden").get<int>();
    a.spatial = j.at("spatial").get<Shape>();
    a.validate();
    return a;
}

ModelParams::ModelParams(const Architecture& arch) : arch_(arch)
{
    arch.validate();
    const int d = arch.dim;
    const auto k = static_cast<std::size_t>(arch.classes);
    auto add_block = [&](const std::string& name, std::size_t cin, std::size_t cout) {
        add(name + ".conv_a.w", kernel_shape(cout, cin, d, 3));
        add(name + ".conv_a.b", {cout});
        add(name + ".conv_b.w", kernel_shape(cout, cout, d, 3));
        add(name + ".conv_b.b", {cout});
    };
    auto add_encoder = [&](const std::string& prefix) {
        for (int l = 0; l < arch.depth; ++l)
            add_block(level_name(prefix, l),
                      l == 0 ? static_cast<std::size_t>(arch.input_channels) : arch.level_width(l - 1),
                      arch.level_width(l));
    };

    add_encoder("enc");
    if (arch.variant == Variant::naive)
        add_encoder("pose_enc");
    if (arch.has_pose()) {
        const auto h = static_cast<std::size_t>(arch.pose_hidden);
        add("pose.fc1.w", {h, arch.latent_size()});
        add("pose.fc1.b", {h});
        add("pose.fc2.w", {arch.pose_size(), h});
        add("pose.fc2.b", {arch.pose_size()});
    }
    const std::size_t atlas_channels = arch.has_pose() ? k : 0;
    for (int l = arch.depth - 2; l >= 0; --l)
        add_block(level_name("dec", l), arch.level_width(l + 1) + arch.level_width(l) + atlas_channels,
                  arch.level_width(l));
    add("head.w", kernel_shape(k + 1, arch.level_width(0), d, 1));
    add("head.b", {k + 1});
}

void ModelParams::add(const std::string& name, Shape shape)
{
    index_[name] = params_.size();
    TensorGrid zero(std::move(shape));
    params_.push_back({name, zero, zero});
}

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed)
{
    ModelParams m(arch);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : m.params_) {
        const auto& s = p.value.shape();
        if (s.size() < 2)
            continue;  // biases start at zero
        const std::size_t fan_in = p.value.size() / s[0];
        double std = std::sqrt(2.0 / double(fan_in));
        if (p.name == "head.w")
            std = std::sqrt(1.0 / double(fan_in));
        else if (p.name == "pose.fc2.w")
            std *= kPoseOutputGain;
        for (double& v : p.value.data())
            v = std * normal(rng);
    }
    return m;
}

Parameter& ModelParams::at(const std::string& name)
{
    const auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("no parameter named '" + name + "'");
    return params_[it->second];
}

const Parameter& ModelParams::at(const std::string& name) const
{
    return const_cast<ModelParams*>(this)->at(name);
}

void ModelParams::zero_grad()
{
    for (auto& p : params_)
        p.grad.fill(0.0);
}

void ModelParams::scale_grad(double factor)
{
    for (auto& p : params_)
        p.grad *= factor;
}

std::size_t ModelParams::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_)
        n += p.value.size();
    return n;
}

bool ModelParams::same_values(const ModelParams& other) const
{
    if (!(arch_ == other.arch_) || params_.size() != other.params_.size())
        return false;
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value))
            return false;
    return true;
}

void save_params(const std::filesystem::path& dir, const ModelParams& params)
{
    std::filesystem::create_directories(dir);
    std::ofstream arch(dir / "arch.json");
    arch << params.arch().to_json() << '\n';
    if (!arch)
        throw std::runtime_error("cannot write " + (dir / "arch.json").string());
    for (const auto& p : params.parameters())
        save_tgrid(dir / (p.name + ".tgrid"), p.value);
}

ModelParams load_params(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "arch.json");
    if (!in)
        throw std::runtime_error("cannot read " + (dir / "arch.json").string());
    std::stringstream text;
    text << in.rdbuf();
    ModelParams m(Architecture::from_json(text.str()));
    for (auto& p : m.parameters()) {
        auto v = load_tgrid(dir / (p.name + ".tgrid"));
        require_same_shape(v.shape(), p.value.shape(), "checkpoint parameter " + p.name);
        p.value = std::move(v);
    }
    return m;
}

ForwardResult forward(const ModelParams& params, const TensorGrid& x, const AtlasSet& atlas)
{
    const auto& arch = params.arch();
    require_same_shape(x.shape(), image_shape(static_cast<std::size_t>(arch.input_channels), arch.spatial),
                       "model input");
    ForwardResult r;
    auto& c = r.cache;
    c.encoder = encoder_forward(params, "enc", x);

    if (!arch.has_pose()) {
        r.q_pred = PoseVector::identity(arch.dim);
    } else {
        if (atlas.num_classes() != static_cast<std::size_t>(arch.classes))
            throw ShapeError("model expects " + std::to_string(arch.classes) + " atlas classes, got " +
                             std::to_string(atlas.num_classes()));
        require_same_shape(atlas.spatial_shape(), arch.spatial, "atlas");
        if (arch.variant == Variant::naive)
            c.pose_encoder = encoder_forward(params, "pose_enc", x);
        const auto& deepest = arch.variant == Variant::naive ? c.pose_encoder.back().out : c.encoder.back().out;
        c.latent = deepest.reshaped({deepest.size()});
        c.hidden_pre = linear(c.latent, params.at("pose.fc1.w").value, params.at("pose.fc1.b").value.data());
        c.hidden = relu(c.hidden_pre);
        const auto raw = linear(c.hidden, params.at("pose.fc2.w").value, params.at("pose.fc2.b").value.data());
        r.q_raw = raw.values();
        r.q_pred = pose_from_network(arch.dim, r.q_raw);

        c.atlas_source = atlas.stacked();
        c.atlas_levels.push_back(warp_grid(c.atlas_source, r.q_pred));
        for (int l = 1; l < arch.depth - 1; ++l)
            c.atlas_levels.push_back(avgpool2(c.atlas_levels.back()));
    }

    c.decoder.resize(static_cast<std::size_t>(arch.depth - 1));
    TensorGrid d = c.encoder.back().out;
    for (int l = arch.depth - 2; l >= 0; --l) {
        std::vector<TensorGrid> parts{nearest_upsample2(d), c.encoder[l].out};
        if (arch.has_pose())
            parts.push_back(c.atlas_levels[l]);
        c.decoder[l] = block_forward(params, level_name("dec", l), concat_channels(parts));
        d = c.decoder[l].out;
    }
    c.head_input = std::move(d);
    r.logits = conv_forward(c.head_input, params.at("head.w").value, params.at("head.b").value.data(), 1, 0);
    return r;
}

LossResult loss_and_gradients(ModelParams& params, const TensorGrid& x, const AtlasSet& atlas, const LabelGrid& y,
                              const PoseVector& q_true, const LossOptions& options)
{
    const auto& arch = params.arch();
    if (q_true.dim != arch.dim)
        throw ShapeError("pose target dimension does not match the model");
    LossResult r;
    r.forward = forward(params, x, atlas);
    const auto& c = r.forward.cache;
    const int depth = arch.depth;

    auto ce = softmax_cross_entropy(r.forward.logits, y);
    r.l_seg = ce.loss;
    ce.grad_logits *= options.seg_weight;

    auto& head_w = params.at("head.w");
    const auto gh = conv_backward(ce.grad_logits, c.head_input, head_w.value, 1, 0);
    accumulate(head_w, gh.kernel);
    accumulate(params.at("head.b"), gh.bias);

    std::vector<TensorGrid> enc_grad;
    for (const auto& level : c.encoder)
        enc_grad.emplace_back(level.out.shape());
    std::vector<TensorGrid> atlas_grad(c.atlas_levels.size());

    TensorGrid g_d = gh.input;
    for (int l = 0; l <= depth - 2; ++l) {
        const auto g_in = block_backward(params, level_name("dec", l), c.decoder[l], g_d);
        const std::size_t up = arch.level_width(l + 1), skip = arch.level_width(l);
        enc_grad[l] += slice_channels(g_in, up, skip);
        if (arch.has_pose())
            atlas_grad[l] = slice_channels(g_in, up + skip, static_cast<std::size_t>(arch.classes));
        const auto& below = l + 1 <= depth - 2 ? c.decoder[l + 1].out : c.encoder.back().out;
        g_d = nearest_upsample2_backward(slice_channels(g_in, 0, up), below.shape());
    }
    enc_grad.back() += g_d;

    if (arch.has_pose()) {
        const auto truth = q_true.to_raw();
        auto pl = pose_loss(r.forward.q_raw, truth);
        r.l_pose = pl.loss;
        std::vector<double> g_raw(pl.grad.size());
        for (std::size_t i = 0; i < g_raw.size(); ++i)
            g_raw[i] = options.pose_weight * pl.grad[i];

        // Segmentation loss reaches q only in the coupled variant.
        if (arch.variant == Variant::panet && !options.detach_warp) {
            TensorGrid g_w = atlas_grad.back();
            for (int l = static_cast<int>(atlas_grad.size()) - 1; l >= 1; --l) {
                g_w = avgpool2_backward(g_w, atlas_grad[l - 1].shape());
                g_w += atlas_grad[l - 1];
            }
            const auto g_q = warp_grid_pose_gradient(g_w, c.atlas_source, r.forward.q_pred);
            const auto g_q_raw = pose_gradient_to_raw(g_q, r.forward.q_pred);
            for (std::size_t i = 0; i < g_raw.size(); ++i)
                g_raw[i] += g_q_raw[i];
        }

        auto& fc2 = params.at("pose.fc2.w");
        const auto l2 = linear_backward(TensorGrid({g_raw.size()}, g_raw), c.hidden, fc2.value);
        accumulate(fc2, l2.weight);
        accumulate(params.at("pose.fc2.b"), l2.bias);
        auto& fc1 = params.at("pose.fc1.w");
        const auto l1 = linear_backward(relu_backward(l2.input, c.hidden_pre), c.latent, fc1.value);
        accumulate(fc1, l1.weight);
        accumulate(params.at("pose.fc1.b"), l1.bias);

        if (arch.variant == Variant::naive) {
            std::vector<TensorGrid> pose_grad;
            for (const auto& level : c.pose_encoder)
                pose_grad.emplace_back(level.out.shape());
            pose_grad.back() = l1.input.reshaped(c.pose_encoder.back().out.shape());
            encoder_backward(params, "pose_enc", c.pose_encoder, std::move(pose_grad));
        } else {
            enc_grad.back() += l1.input.reshaped(c.encoder.back().out.shape());
        }
    }

    encoder_backward(params, "enc", c.encoder, std::move(enc_grad));
    r.loss = options.seg_weight * r.l_seg + options.pose_weight * r.l_pose;
    return r;
}

LabelGrid argmax_labels(const TensorGrid& logits)
{
    const std::size_t channels = logits.channels();
    const std::size_t plane = logits.extent().count();
    LabelGrid out(logits.spatial_shape());
    for (std::size_t i = 0; i < plane; ++i) {
        int best = 0;
        double best_v = logits[i];
        for (std::size_t k = 1; k < channels; ++k) {
            const double v = logits[k * plane + i];
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(k);
            }
        }
        out[i] = best;
    }
    return out;
}

Prediction predict(const ModelParams& params, const TensorGrid& x, const AtlasSet& atlas)
{
    auto r = forward(params, x, atlas);
    return {argmax_labels(r.logits), r.q_pred};
}

}  // namespace panet
