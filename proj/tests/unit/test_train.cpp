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

#include <doctest.h>

#include <algorithm>

#include <filesystem>
#include <limits>

using namespace panet;

namespace {

SceneParams small_scene()
{
    auto p = SceneParams::defaults(Regime::retina2d);
    p.size = 16;
    return p;
}

TrainConfig small_config(Variant v)
{
    TrainConfig c;
    c.variant = v;
    c.depth = 2;
    c.width = 4;
    c.pose_hidden = 8;
    c.batch_size = 3;
    c.epochs = 2;
    return c;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged")
{
    const auto scene = small_scene();
    const auto data = generate(scene, 4);
    auto c = small_config(Variant::panet);
    c.learning_rate = 0.0;
    const auto r = train(c, scene, data, {});
    CHECK(r.last.same_values(ModelParams::initialize(c.architecture(scene), c.seed)));
    CHECK(r.optimizer.step == 4);  // two batches per epoch, last one partial
    CHECK(r.history.size() == 2);
    CHECK(r.best_epoch == 1);
}

TEST_CASE("training is deterministic and reduces the loss")
{
    const auto scene = small_scene();
    const auto data = generate(scene, 6);
    auto c = small_config(Variant::panet);
    c.epochs = 4;
    c.learning_rate = 3e-3;
    std::vector<EpochRecord> seen;
    const auto a = train(c, scene, data, {}, [&](const EpochRecord& e) { seen.push_back(e); });
    const auto b = train(c, scene, data, {});
    CHECK(history_csv(a.history) == history_csv(b.history));
    CHECK(a.last.same_values(b.last));
    CHECK(seen.size() == 4);
    CHECK(a.history.back().loss < a.history.front().loss);
    CHECK(history_csv(a.history).rfind("epoch,loss,l_seg,l_pose,val_jaccard,val_ter\n1,", 0) == 0);

    auto other = c;
    other.seed = 2;
    CHECK_FALSE(train(other, scene, data, {}).last.same_values(a.last));
}

TEST_CASE("plain trains on segmentation only")
{
    const auto scene = small_scene();
    const auto r = train(small_config(Variant::plain), scene, generate(scene, 3), {});
    for (const auto& h : r.history)
        CHECK(h.l_pose == 0.0);
}

TEST_CASE("checkpoint round trip keeps optimizer state")
{
    const auto scene = small_scene();
    const auto r = train(small_config(Variant::naive), scene, generate(scene, 3), {});
    const auto dir = std::filesystem::temp_directory_path() / "panet_test_checkpoint";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, r.last, r.optimizer);
    AdamState opt;
    const auto back = load_checkpoint(dir, &opt);
    CHECK(back.same_values(r.last));
    CHECK(back.arch() == r.last.arch());
    CHECK(opt.step == r.optimizer.step);
    REQUIRE(opt.m.size() == r.optimizer.m.size());
    for (std::size_t k = 0; k < opt.m.size(); ++k) {
        CHECK(std::ranges::equal(opt.m[k].data(), r.optimizer.m[k].data()));
        CHECK(std::ranges::equal(opt.v[k].data(), r.optimizer.v[k].data()));
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluating ground truth against itself")
{
    const auto scene = small_scene();
    const auto data = generate(scene, 5);
    std::vector<LabelGrid> labels;
    std::vector<PoseVector> poses;
    for (const auto& s : data) {
        labels.push_back(s.labels);
        poses.push_back(s.pose);
    }
    const auto r = evaluate_predictions(labels, poses, data, scene_topology(scene), scene.class_names(), scene.size);
    CHECK(r.mean_jaccard == 1.0);
    CHECK(r.ter.fraction() == "0/5");
    CHECK(r.orientation_deg == 0.0);
    CHECK(r.localization_px == 0.0);
    const auto csv = report_csv(r, "truth");
    CHECK(csv == "variant,disc_jaccard,cup_jaccard,mean_jaccard,ter,ter_ratio,orientation_deg,localization_px\n"
                 "truth,1.000000,1.000000,1.000000,0/5,0.000000,0.000000,0.000000\n");
    CHECK(report_table(r, "truth").find("100.00") != std::string::npos);
}

TEST_CASE("invalid training configs are rejected")
{
    const auto scene = small_scene();
    const auto data = generate(scene, 2);
    auto c = small_config(Variant::panet);
    c.batch_size = 0;
    CHECK_THROWS_AS(train(c, scene, data, {}), std::invalid_argument);
    c = small_config(Variant::panet);
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(train(c, scene, data, {}), std::invalid_argument);
    CHECK_THROWS_AS(train(small_config(Variant::panet), scene, {}, {}), std::invalid_argument);
}

TEST_CASE("divergence surfaces as a numeric error")
{
    const auto scene = small_scene();
    auto data = generate(scene, 2);
    // Inputs at the top of the double range overflow the first convolution.
    for (auto& s : data)
        for (double& v : s.image.data())
            v = std::numeric_limits<double>::max();
    CHECK_THROWS_AS(train(small_config(Variant::plain), scene, data, {}), NumericError);
}
