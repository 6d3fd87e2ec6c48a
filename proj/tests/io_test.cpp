// Copyright 2026 The detcal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "detcal/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "generators.hpp"

namespace detcal::io {
namespace {

const char* kGroundTruth = R"({
  "images": [{"id": 1, "width": 200, "height": 100},
             {"id": 2, "width": 50, "height": 50}],
  "categories": [{"id": 3, "name": "car"}, {"id": 9, "name": "person"}],
  "annotations": [
    {"id": 10, "image_id": 1, "category_id": 3, "bbox": [20, 10, 40, 20]},
    {"id": 11, "image_id": 2, "category_id": 9, "bbox": [0, 0, 10, 10]}
  ]
})";

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(GroundTruth, ParsesAndNormalizes) {
  const GroundTruthFile gt = parse_ground_truth(kGroundTruth, "gt.json");
  ASSERT_EQ(gt.objects.size(), 2u);
  EXPECT_EQ(gt.num_classes(), 2);
  EXPECT_EQ(gt.label_of(9), 1);
  EXPECT_EQ(gt.label_of(4), -1);
  const NormBox& b = gt.objects[0].box;
  EXPECT_DOUBLE_EQ(b.cx, 0.2);
  EXPECT_DOUBLE_EQ(b.cy, 0.2);
  EXPECT_DOUBLE_EQ(b.w, 0.2);
  EXPECT_DOUBLE_EQ(b.h, 0.2);
  EXPECT_EQ(gt.objects[1].label, 1);
  EXPECT_EQ(gt.objects[1].id, 11);
}

TEST(GroundTruth, ErrorsAreLineAnchored) {
  std::string text = kGroundTruth;
  text.replace(text.find("\"image_id\": 2, \"category_id\": 9"), 13, "\"image_id\": 5");
  EXPECT_EQ(error_of([&] { parse_ground_truth(text, "gt.json"); }),
            "gt.json:7: /annotations/1/image_id: image_id 5 does not resolve");

  text = kGroundTruth;
  text.replace(text.find("\"width\": 50"), 11, "\"width\": 0");
  EXPECT_EQ(error_of([&] { parse_ground_truth(text, "gt.json"); }),
            "gt.json:3: /images/1/width: image width and height must be positive");

  text = kGroundTruth;
  text.replace(text.find("\"category_id\": 3"), 16, "\"category_id\": 4");
  EXPECT_NE(error_of([&] { parse_ground_truth(text, "gt.json"); }).find("gt.json:6:"),
            std::string::npos);

  EXPECT_NE(error_of([&] { parse_ground_truth("{\"images\": [", "x.json"); }).find("x.json:1:"),
            std::string::npos);
  EXPECT_NE(error_of([&] { parse_ground_truth("[]", "x.json"); }).find("must be a JSON object"),
            std::string::npos);
}

TEST(Detections, ParseAndResolve) {
  const GroundTruthFile gt = parse_ground_truth(kGroundTruth, "gt.json");
  const auto recs = parse_detections(
      R"([{"image_id": 1, "category_id": 9, "bbox": [100, 50, 20, 10], "score": 0.5,
           "logits": [0.1, 0.2, 0.3]}])",
      "d.json");
  ASSERT_EQ(recs.size(), 1u);
  ASSERT_TRUE(recs[0].logits.has_value());
  const auto dets = to_detections(recs, gt, "d.json");
  EXPECT_EQ(dets[0].label, 1);
  EXPECT_DOUBLE_EQ(dets[0].box.cx, 0.55);
  EXPECT_DOUBLE_EQ(dets[0].box.h, 0.1);
}

TEST(Detections, RejectsWrongTypes) {
  EXPECT_EQ(error_of([] {
              parse_detections("[\n{\"image_id\": 1, \"category_id\": 1,\n \"bbox\": [0, 0, 1, 1],\n "
                               "\"score\": \"high\"}]",
                               "d.json");
            }),
            "d.json:4: /0/score: field 'score' must be a number");
  EXPECT_EQ(error_of([] {
              parse_detections("[{\"image_id\": 1.5, \"category_id\": 1, \"bbox\": [0, 0, 1, 1], "
                               "\"score\": 0.1}]",
                               "d.json");
            }),
            "d.json:1: /0/image_id: field 'image_id' must be an integer");
  EXPECT_NE(error_of([] {
              parse_detections("[{\"image_id\": 1, \"category_id\": 1, \"bbox\": [0, 0, 0, 1], "
                               "\"score\": 0.1}]",
                               "d.json");
            }).find("must be positive"),
            std::string::npos);
  EXPECT_NE(error_of([] {
              parse_detections("[{\"image_id\": 1, \"category_id\": 1, \"score\": 0.1}]", "d.json");
            }).find("missing required field 'bbox'"),
            std::string::npos);
}

TEST(Detections, UnknownImageOrCategoryRejected) {
  const GroundTruthFile gt = parse_ground_truth(kGroundTruth, "gt.json");
  const auto recs =
      parse_detections(R"([{"image_id": 4, "category_id": 3, "bbox": [0, 0, 5, 5], "score": 0.5}])",
                       "d.json");
  EXPECT_THROW(to_detections(recs, gt, "d.json"), FormatError);
}

TEST(Boxes, NormalizeClipsAndRoundTrips) {
  const NormBox b = normalize_box({-10, 80, 40, 40}, 100, 100);
  EXPECT_DOUBLE_EQ(b.cx, 0.15);
  EXPECT_DOUBLE_EQ(b.cy, 0.9);
  EXPECT_DOUBLE_EQ(b.w, 0.3);
  EXPECT_DOUBLE_EQ(b.h, 0.2);
  const auto px = denormalize_box(NormBox{0.25, 0.5, 0.5, 0.2}, 80, 40);
  EXPECT_DOUBLE_EQ(px[0], 0.0);
  EXPECT_DOUBLE_EQ(px[1], 16.0);
  EXPECT_DOUBLE_EQ(px[2], 40.0);
  EXPECT_DOUBLE_EQ(px[3], 8.0);
}

TEST(Detections, DumpParseRoundTrip) {
  const GroundTruthFile gt = parse_ground_truth(kGroundTruth, "gt.json");
  testing::Gen g(1);
  std::vector<Detection> dets;
  for (int i = 0; i < 20; ++i) {
    Detection d;
    d.image_id = g.integer(1, 2);
    d.label = g.integer(0, 1);
    d.score = g.uniform();
    d.box = NormBox{0.5, 0.5, g.uniform(0.1, 0.9), g.uniform(0.1, 0.9)};
    if (g.coin()) d.logits = std::vector<double>{g.normal(), g.normal(), g.normal()};
    dets.push_back(d);
  }
  const auto back = to_detections(parse_detections(dump_detections(dets, gt), "r"), gt, "r");
  ASSERT_EQ(back.size(), dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(back[i].score, dets[i].score);
    EXPECT_EQ(back[i].label, dets[i].label);
    EXPECT_NEAR(back[i].box.w, dets[i].box.w, 1e-15);
    EXPECT_EQ(back[i].logits.has_value(), dets[i].logits.has_value());
    if (dets[i].logits) {
      EXPECT_EQ(*back[i].logits, *dets[i].logits);
    }
  }
}

TEST(Report, SchemaFields) {
  std::vector<MatchedDetection> ms(2);
  ms[0].detection.score = 0.9;
  ms[0].detection.box = {0.5, 0.5, 0.2, 0.2};
  ms[0].correct = true;
  ms[1] = ms[0];
  ms[1].correct = false;
  const auto report = compute_dece(ms, BinGrid::with_dims({Dim::kConf, Dim::kCx}));
  const std::string text = report_json(report);
  for (const char* key : {"\"dece\"", "\"ece\"", "\"n_detections\"", "\"iou_threshold\"",
                          "\"dims\"", "\"bins\"", "\"index\"", "\"count\"", "\"conf\"",
                          "\"prec\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(Csv, HeadersAndNulls) {
  std::vector<MatchedDetection> ms(1);
  ms[0].detection.score = 0.95;
  ms[0].detection.box = {0.1, 0.1, 0.2, 0.2};
  ms[0].correct = true;
  const std::string rel = reliability_csv(reliability_table(ms, 2));
  EXPECT_EQ(rel, "bin_center,conf,acc,count\n0.25,null,null,0\n0.75,0.95,1,1\n");
  const std::string hist = histogram_csv(confidence_histogram(ms, 2));
  EXPECT_EQ(hist.substr(0, hist.find('\n')), "bin_center,count,avg_confidence,avg_precision");
  const std::string curve = curve_csv(property_curve(ms, Dim::kCx, 2));
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "bin_center,prec,conf,count,partial_dece");
  const std::string heat = heatmap_csv(heatmap_2d(ms, Dim::kCx, Dim::kCy, 2, 1));
  EXPECT_EQ(heat, "row,col,value\n0,0,0.050000000000000044\n1,0,null\n");
}

TEST(Numbers, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.25), "0.25");
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(0.1 + 0.2), "0.30000000000000004");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Checkpoint, RoundTrip) {
  TrainConfig c;
  c.mode = TrainMode::kMccl;
  c.beta = 0.25;
  c.seed = 99;
  const ToyDetector model(c.model, 4);
  TrainConfig back;
  const ToyDetector loaded = load_checkpoint(checkpoint_json(model, c), "ckpt", &back);
  EXPECT_EQ(loaded.flatten(), model.flatten());
  EXPECT_EQ(back.mode, TrainMode::kMccl);
  EXPECT_EQ(back.beta, 0.25);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_THROW(load_checkpoint("{\"format\": \"other\"}", "ckpt"), FormatError);
}

TEST(TrainLog, Columns) {
  EpochLog row;
  row.epoch = 1;
  row.task_loss = 0.5;
  row.l_mcc = std::nan("");
  row.l_lc = std::nan("");
  row.dece = 0.125;
  row.ap50 = 0.75;
  const std::vector<EpochLog> log{row};
  EXPECT_EQ(train_log_csv(log), "epoch,task_loss,l_mcc,l_lc,dece,ap50\n1,0.5,null,null,0.125,0.75\n");
}

TEST(Temperature, FileRoundTrip) {
  EXPECT_EQ(parse_temperature(temperature_json(1.75), "t"), 1.75);
  EXPECT_THROW(parse_temperature("{\"temperature\": -1}", "t"), FormatError);
  EXPECT_THROW(parse_temperature("{}", "t"), FormatError);
}

TEST(LogitsAndLabels, Parse) {
  const Eigen::MatrixXd z = parse_logits("[[1, 2], [3, 4.5]]", "z");
  EXPECT_EQ(z(1, 1), 4.5);
  EXPECT_THROW(parse_logits("[[1], [2]]", "z"), FormatError);
  EXPECT_THROW(parse_logits("[[1, 2], [3]]", "z"), FormatError);
  EXPECT_EQ(parse_labels("[0, 2, 1]", "y"), (std::vector<int>{0, 2, 1}));
  EXPECT_THROW(parse_labels("[0, 1.5]", "y"), FormatError);
}

TEST(Scenes, GroundTruthRendering) {
  const auto scenes = generate_dataset(3, 2, 0.0, 5);
  const GroundTruthFile gt = scenes_ground_truth(scenes, 2);
  EXPECT_EQ(gt.images.size(), 3u);
  EXPECT_EQ(gt.images.at(0).width, 16 * 32.0);
  EXPECT_EQ(gt.categories[1].name, "class1");
  const GroundTruthFile back = parse_ground_truth(dump_ground_truth(gt), "gt");
  ASSERT_EQ(back.objects.size(), gt.objects.size());
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    EXPECT_NEAR(back.objects[i].box.cx, gt.objects[i].box.cx, 1e-12);
    EXPECT_EQ(back.objects[i].label, gt.objects[i].label);
  }
}

TEST(Files, AtomicWriteAndRead) {
  const auto dir = std::filesystem::temp_directory_path() / "detcal_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  write_text_atomic(path, "hello\n");
  write_text_atomic(path, "again\n");
  EXPECT_EQ(read_text(path), "again\n");
  EXPECT_THROW(read_text(dir / "missing.json"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace detcal::io
