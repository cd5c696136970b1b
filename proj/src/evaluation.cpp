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

#include "cnnadapt/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <set>

#include "cnnadapt/tensor_io.hpp"

namespace cnnadapt {

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double evaluate_map(const std::vector<std::vector<Detection>>& predictions,
                    const std::vector<std::vector<GroundTruthBox>>& truths, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ValidationError("iou threshold must lie in (0, 1]");
  if (predictions.size() != truths.size()) throw ValidationError("predictions and truths cover different images");

  std::set<int> classes;
  for (const auto& image : truths) {
    for (const auto& t : image) classes.insert(t.class_id);
  }
  if (classes.empty()) {
    const bool any = std::any_of(predictions.begin(), predictions.end(), [](const auto& v) { return !v.empty(); });
    return any ? 0.0 : 1.0;
  }

  double ap_sum = 0.0;
  for (const int cls : classes) {
    struct Ranked {
      std::size_t image;
      const Detection* det;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      for (const auto& d : predictions[i]) {
        if (d.class_id == cls) ranked.push_back({i, &d});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.det->score > b.det->score; });

    std::vector<std::vector<const GroundTruthBox*>> gt(truths.size());
    std::vector<std::vector<bool>> matched(truths.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      for (const auto& t : truths[i]) {
        if (t.class_id == cls) gt[i].push_back(&t);
      }
      matched[i].assign(gt[i].size(), false);
      positives += gt[i].size();
    }

    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const Ranked& r : ranked) {
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < gt[r.image].size(); ++j) {
        const double o = iou(r.det->box, gt[r.image][j]->box);
        if (o > best) {
          best = o;
          best_j = j;
        }
      }
      if (best >= iou_threshold && !matched[r.image][best_j]) {
        matched[r.image][best_j] = true;
        ++tp;
      } else {
        ++fp;
      }
      recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }

    // All-point interpolation: precision envelope from the right, summed over recall steps.
    std::vector<double> mrec{0.0};
    std::vector<double> mpre{0.0};
    mrec.insert(mrec.end(), recall.begin(), recall.end());
    mpre.insert(mpre.end(), precision.begin(), precision.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(classes.size());
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> tensors;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".tnsr") tensors.push_back(entry.path());
  }
  std::sort(tensors.begin(), tensors.end());
  if (tensors.empty()) throw IoError("dataset directory " + dir.string() + " has no .tnsr samples");

  std::vector<Sample> samples;
  for (const auto& path : tensors) {
    auto label_path = path;
    label_path.replace_extension(".json");
    const auto bytes = detail::read_file(label_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw IoError(label_path.string() + ": malformed label: " + e.what());
    }
    Sample s{path.stem().string(), read_tensor_as<float>(path), ClassLabel{}};
    try {
      if (j.contains("class")) {
        s.label = ClassLabel{j.at("class").get<int>()};
      } else if (j.contains("boxes")) {
        std::vector<GroundTruthBox> boxes;
        for (const auto& b : j.at("boxes")) {
          boxes.push_back({{b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(),
                            b.at("h").get<double>()},
                           b.at("class").get<int>()});
        }
        s.label = std::move(boxes);
      } else {
        throw IoError(label_path.string() + ": label needs 'class' or 'boxes'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(label_path.string() + ": malformed label: " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

int top1_class(const InferenceTrace<float>& outputs) {
  if (outputs.size() == 0) throw ValidationError("model produced no outputs");
  const FloatFeatureMap& out = outputs.entries().front().second;
  if (out.channels() == 0) throw ValidationError("classification output has no channels");
  Eigen::Index best = 0;
  out.pixels().template cast<double>().colwise().sum().maxCoeff(&best);
  return static_cast<int>(best);
}

std::vector<Detection> decode_direct_regression(const InferenceTrace<float>& outputs, const Shape& input,
                                                double score_threshold) {
  if (outputs.size() == 0) throw ValidationError("model produced no outputs");
  const FloatFeatureMap& out = outputs.entries().front().second;
  if (out.channels() < 5) throw ValidationError("direct-regression head needs at least 5 channels");
  std::vector<Detection> dets;
  for (Index y = 0; y < out.height(); ++y) {
    for (Index x = 0; x < out.width(); ++x) {
      const double obj = out(y, x, 4);
      if (obj < score_threshold) continue;
      int cls = 0;
      for (Index c = 6; c < out.channels(); ++c) {
        if (out(y, x, c) > out(y, x, 5 + cls)) cls = static_cast<int>(c - 5);
      }
      dets.push_back({{out(y, x, 0) * static_cast<double>(input.width), out(y, x, 1) * static_cast<double>(input.height),
                       out(y, x, 2) * static_cast<double>(input.width), out(y, x, 3) * static_cast<double>(input.height)},
                      cls,
                      std::clamp(obj, 0.0, 1.0)});
    }
  }
  return dets;
}

Evaluator accuracy_evaluator(std::vector<Sample> samples) {
  for (const auto& s : samples) {
    if (!std::holds_alternative<ClassLabel>(s.label)) {
      throw ValidationError("sample '" + s.name + "' has no class label for accuracy evaluation");
    }
  }
  if (samples.empty()) throw ValidationError("accuracy evaluation needs at least one sample");
  auto data = std::make_shared<const std::vector<Sample>>(std::move(samples));
  return [data](const Model& model) {
    std::size_t correct = 0;
    for (const auto& s : *data) {
      if (top1_class(float_infer(model, s.input)) == std::get<ClassLabel>(s.label).class_id) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data->size());
  };
}

Evaluator map_evaluator(std::vector<Sample> samples, Postprocessor postprocess, double iou_threshold) {
  std::vector<std::vector<GroundTruthBox>> truths;
  for (const auto& s : samples) {
    const auto* boxes = std::get_if<std::vector<GroundTruthBox>>(&s.label);
    if (!boxes) throw ValidationError("sample '" + s.name + "' has no box label for mAP evaluation");
    truths.push_back(*boxes);
  }
  if (!postprocess) {
    postprocess = [](const InferenceTrace<float>& out, const Shape& in) { return decode_direct_regression(out, in); };
  }
  auto data = std::make_shared<const std::vector<Sample>>(std::move(samples));
  return [data, truths = std::move(truths), postprocess, iou_threshold](const Model& model) {
    std::vector<std::vector<Detection>> predictions;
    predictions.reserve(data->size());
    for (const auto& s : *data) predictions.push_back(postprocess(float_infer(model, s.input), s.input.shape()));
    return evaluate_map(predictions, truths, iou_threshold);
  };
}

}  // namespace cnnadapt
