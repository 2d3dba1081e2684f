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

#include "panet/atlas.hpp"
#include "panet/pose.hpp"
#include "panet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace panet {

/// plain: backbone only. panet: shared encoder feeds decoder and pose head, warped atlas
/// concatenated at every decoder level. naive: pose head on a second, separate encoder.
enum class Variant { plain, panet, naive };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

/// Everything that determines parameter shapes.
struct Architecture {
    Variant variant = Variant::panet;
    int dim = 2;             // spatial dimensionality
    int depth = 3;           // encoder levels D
    int width = 8;           // channels at level 0; level l has width * 2^l
    int classes = 2;         // foreground classes K; logits carry K + 1 channels
    int input_channels = 1;
    int pose_hidden = 32;    // pose head hidden units
    Shape spatial{32, 32};   // input extent, needed for the flattened latent

    std::size_t level_width(int level) const;
    Shape level_spatial(int level) const;
    std::size_t latent_size() const;
    std::size_t pose_size() const { return dim == 3 ? 9 : 5; }
    bool has_pose() const { return variant != Variant::plain; }

    void validate() const;
    std::string to_json() const;
    static Architecture from_json(const std::string& text);
    bool operator==(const Architecture&) const = default;
};

struct Parameter {
    std::string name;  // e.g. "enc0.conv_a.w"
    TensorGrid value;
    TensorGrid grad;   // same shape as value
};

/// Trainable weights with paired gradient storage, in a fixed construction order.
class ModelParams {
public:
    ModelParams() = default;

    /// All-zero parameters for `arch`.
    explicit ModelParams(const Architecture& arch);

    /// He-normal convolution and hidden weights, zero biases. The last pose layer is
    /// scaled down so a fresh model predicts a near-identity pose.
    static ModelParams initialize(const Architecture& arch, std::uint64_t seed);

    const Architecture& arch() const { return arch_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }

    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    void zero_grad();
    void scale_grad(double factor);
    std::size_t scalar_count() const;

    /// Values only; gradients are not compared.
    bool same_values(const ModelParams& other) const;

private:
    void add(const std::string& name, Shape shape);

    Architecture arch_;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

// Checkpoint weights: arch.json + <parameter name>.tgrid.
void save_params(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& dir);

/// Intermediate tensors of one two-convolution block.
struct BlockCache {
    TensorGrid input, a_pre, a, b_pre, out;
};

struct ForwardCache {
    std::vector<BlockCache> encoder;       // primary encoder, one per level
    std::vector<BlockCache> pose_encoder;  // naive variant only
    std::vector<BlockCache> decoder;       // index l for decoder level l (0..D-2)
    std::vector<TensorGrid> atlas_levels;  // warped atlas pooled to each decoder level
    TensorGrid latent, hidden_pre, hidden;
    TensorGrid head_input;
    TensorGrid atlas_source;               // stacked canonical atlas the warp read from
};

struct ForwardResult {
    TensorGrid logits;               // [K + 1, spatial...]
    PoseVector q_pred;
    std::vector<double> q_raw;       // network output, log-scale layout
    ForwardCache cache;
};

/// Runs the network on one image [input_channels, spatial...]. The atlas must have K
/// classes on the input's spatial grid; plain ignores it and returns the identity pose.
ForwardResult forward(const ModelParams& params, const TensorGrid& x, const AtlasSet& atlas);

struct LossOptions {
    double seg_weight = 1.0;
    double pose_weight = 1.0;
    /// Stops the segmentation loss from reaching q through the warp.
    bool detach_warp = false;
};

struct LossResult {
    double loss = 0.0;
    double l_seg = 0.0;
    double l_pose = 0.0;
    ForwardResult forward;
};

/// L = seg_weight * L_seg + pose_weight * L_pose for one sample. Gradients are added
/// into params' grad storage (call zero_grad() first). Labels range over [0, K]. The
/// pose term is measured in raw (log-scale) coordinates; plain has L_pose = 0.
LossResult loss_and_gradients(ModelParams& params, const TensorGrid& x, const AtlasSet& atlas, const LabelGrid& y,
                              const PoseVector& q_true, const LossOptions& options = {});

/// Channel argmax with ties going to the lower class index.
LabelGrid argmax_labels(const TensorGrid& logits);

struct Prediction {
    LabelGrid labels;
    PoseVector q_pred;
};

Prediction predict(const ModelParams& params, const TensorGrid& x, const AtlasSet& atlas);

}  // namespace panet
