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
#include "panet/metrics.hpp"
#include "panet/model.hpp"
#include "panet/synthgen.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace panet {

struct TrainConfig {
    Variant variant = Variant::panet;
    int depth = 3;
    int width = 8;
    int pose_hidden = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 8;
    int epochs = 30;
    std::uint64_t seed = 1;
    double atlas_softness = 0.1;  // softness of the atlas fed to the network
    double seg_weight = 1.0;
    double pose_weight = 1.0;
    bool detach_warp = false;

    void validate() const;
    Architecture architecture(const SceneParams& scene) const;
    bool operator==(const TrainConfig&) const = default;
};

/// Adaptive-moment optimizer state, one moment pair per parameter.
struct AdamState {
    long long step = 0;
    std::vector<TensorGrid> m, v;

    static AdamState zeros(const ModelParams& params);
    /// One bias-corrected update from the gradients stored in params.
    void apply(ModelParams& params, const TrainConfig& c);
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;    // mean per-sample training loss over the epoch
    double l_seg = 0.0;
    double l_pose = 0.0;
    double val_jaccard = 0.0;
    double val_ter = 0.0;
};

struct TrainResult {
    ModelParams best;     // parameters after the epoch with the highest validation Jaccard
    ModelParams last;
    AdamState optimizer;  // state after the last epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with seeded shuffling. Validation after every epoch uses `val`,
/// or the training set when `val` is empty. A non-finite loss throws NumericError.
TrainResult train(const TrainConfig& config, const SceneParams& scene, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val, const EpochCallback& on_epoch = {});

/// History CSV: header `epoch,loss,l_seg,l_pose,val_jaccard,val_ter`, fixed precision.
std::string history_csv(const std::vector<EpochRecord>& history);

// Checkpoint directory: arch.json + <parameter>.tgrid + optimizer.json + adam/m.<name>.tgrid, adam/v.<name>.tgrid.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const AdamState& optimizer);
ModelParams load_checkpoint(const std::filesystem::path& dir, AdamState* optimizer = nullptr);

struct SampleEval {
    std::vector<double> jaccard;  // per class
    std::size_t violations = 0;
    PoseErrors pose;
};

struct EvalReport {
    std::vector<std::string> classes;
    std::vector<double> class_jaccard;  // mean over samples, per class
    double mean_jaccard = 0.0;          // mean of class_jaccard
    TerResult ter;
    double orientation_deg = 0.0;       // mean over samples
    double localization_px = 0.0;
    std::vector<SampleEval> samples;
};

EvalReport evaluate_predictions(const std::vector<LabelGrid>& predictions, const std::vector<PoseVector>& poses,
                                const std::vector<Sample>& truth, const TopologySpec& spec,
                                const std::vector<std::string>& classes, double grid_size);

EvalReport evaluate(const ModelParams& params, const AtlasSet& atlas, const std::vector<Sample>& samples,
                    const TopologySpec& spec);

/// One-row CSV (`variant,<class>_jaccard...,mean_jaccard,ter,ter_ratio,orientation_deg,localization_px`).
std::string report_csv(const EvalReport& report, const std::string& row_name);

/// Human-readable table: Jaccard % per class, mean, TER as k/N, pose errors.
std::string report_table(const EvalReport& report, const std::string& row_name);

}  // namespace panet
