// Copyright 2026 The cnnadapt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "cnnadapt/model.hpp"
#include "cnnadapt/pruning.hpp"

namespace cnnadapt {

/// Axis-aligned box in pixels, top-left origin.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct GroundTruthBox {
  Box box;
  int class_id = 0;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

/// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

/// VOC-style mean average precision. Per class present in `truths`:
/// detections are ranked by score (stable, so ties keep input order),
/// each is matched to the unmatched truth box of highest IoU in its image
/// if that IoU >= iou_threshold, and AP is the area under the all-point
/// interpolated precision/recall curve. With no truth boxes at all the
/// result is 1 if there are also no detections, otherwise 0.
double evaluate_map(const std::vector<std::vector<Detection>>& predictions,
                    const std::vector<std::vector<GroundTruthBox>>& truths, double iou_threshold = 0.5);

struct ClassLabel {
  int class_id = 0;
};
using SampleLabel = std::variant<ClassLabel, std::vector<GroundTruthBox>>;

struct Sample {
  std::string name;
  FloatFeatureMap input;
  SampleLabel label;
};

/// Reads `<name>.tnsr` + `<name>.json` pairs, sorted by name. Labels are
/// {"class": k} or {"boxes": [{"x","y","w","h","class"}, ...]}.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

/// Index of the channel with the largest spatial sum in the first output.
int top1_class(const InferenceTrace<float>& outputs);

/// Decodes raw model outputs into detections for one image.
using Postprocessor = std::function<std::vector<Detection>(const InferenceTrace<float>& outputs, const Shape& input)>;

/// Toy direct-regression head on the first output: each cell holds
/// [x, y, w, h, objectness, class scores...] with box terms as fractions of
/// the input size. Cells with objectness >= score_threshold become detections
/// scored by clamp(objectness, 0, 1) and labelled with the best class.
std::vector<Detection> decode_direct_regression(const InferenceTrace<float>& outputs, const Shape& input,
                                                double score_threshold = 0.05);

/// Top-1 accuracy over samples labelled with a class.
Evaluator accuracy_evaluator(std::vector<Sample> samples);

/// mAP over samples labelled with boxes.
Evaluator map_evaluator(std::vector<Sample> samples, Postprocessor postprocess = {}, double iou_threshold = 0.5);

}  // namespace cnnadapt
