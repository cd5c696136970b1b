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

#include "cnnadapt/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "cnnadapt/analysis.hpp"
#include "cnnadapt/evaluation.hpp"
#include "cnnadapt/fusion.hpp"
#include "cnnadapt/model_io.hpp"
#include "cnnadapt/pruning.hpp"
#include "cnnadapt/quantization.hpp"
#include "cnnadapt/tensor_io.hpp"

namespace cnnadapt::cli {
namespace {

namespace fs = std::filesystem;

Graph load_any_graph(const fs::path& path) {
  return is_quantized_manifest(path) ? load_quantized_model(path).graph : load_model(path).graph;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { detail::atomic_write(path, j.dump(2) + "\n"); }

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", v);
  return buf;
}

struct Options {
  std::string input;
  std::string output;
  std::string report;
  bool per_layer = false;
  std::string reference;

  // prune
  std::string metric = "frobenius";
  double eps = 0.003;
  double delta_map = 0.01;
  double delta_t = 0.02;
  double t_start = 0.0;
  Index min_filters = 1;
  std::vector<std::string> no_prune;
  std::string data;
  std::string eval = "accuracy";
  double iou_threshold = 0.5;

  // quantize / infer / compare
  int p = 8;
  int p_alpha = 4;
  std::string tensor;
  std::string engine = "float";
  std::string taps;
  std::string out_dir;
  std::string stats;
  std::string float_model;
  std::string int_model;
  std::string csv;

  // init
  std::string arch = "tinyyolov3";
  int classes = 80;
  std::uint64_t seed = 0;
  bool randomize = false;
};

int cmd_fuse(const Options& o, std::ostream& out) {
  const Model model = load_model(o.input);
  const Model fused = fuse_model(model);
  std::size_t count = 0;
  for (const auto& id : fused.graph.conv_ids()) count += fused.graph.conv_attrs(id).fused ? 1 : 0;
  save_model(fused, o.output);
  const FlopReport before = count_flops(model.graph);
  const FlopReport after = count_flops(fused.graph);
  out << "fused " << count << " batchnorm layers; FLOPs " << before.total << " -> " << after.total << " ("
      << percent(reduction_percent(static_cast<double>(before.total), static_cast<double>(after.total)))
      << " reduction)\n";
  return kExitOk;
}

int cmd_prune(const Options& o, std::ostream& out) {
  PruneConfig config;
  config.metric = prune_metric_from_string(o.metric);
  config.sparsity_eps = o.eps;
  config.delta_map = o.delta_map;
  config.delta_t = o.delta_t;
  config.t_start = o.t_start;
  config.min_filters_per_layer = o.min_filters;
  config.no_prune.insert(o.no_prune.begin(), o.no_prune.end());
  config.validate();
  if (o.eval != "accuracy" && o.eval != "map") throw ValidationError("--eval must be accuracy or map");

  const Model model = load_model(o.input);
  if (model.has_batchnorm()) throw ValidationError("model contains batchnorm; run fuse first (fuse -> prune -> quantize)");
  auto samples = load_dataset(o.data);
  const Evaluator evaluator =
      o.eval == "accuracy" ? accuracy_evaluator(std::move(samples)) : map_evaluator(std::move(samples), {}, o.iou_threshold);

  auto log_step = [&](const PruneStep& s) {
    std::size_t removed = 0;
    for (const auto& [id, n] : s.removed_per_layer) removed += static_cast<std::size_t>(n);
    char line[256];
    std::snprintf(line, sizeof line,
                  "step threshold=%.6g score=%.6f %s removed_filters=%zu param_reduction=%.1f%% flop_reduction=%.1f%%\n",
                  s.threshold, s.score, s.accepted ? "accepted" : "rejected", removed, s.param_reduction_percent,
                  s.flop_reduction_percent);
    out << line << std::flush;
  };

  PruneOutcome outcome{model, {}};
  try {
    outcome = prune_routine(model, config, evaluator, log_step);
  } catch (const PruneAborted& e) {
    if (!o.report.empty()) write_json(o.report, to_json(e.partial().report));
    throw;
  }
  save_model(outcome.model, o.output);
  if (!o.report.empty()) write_json(o.report, to_json(outcome.report));
  out << "initial score " << outcome.report.initial_score << "; final threshold "
      << (outcome.report.final_threshold ? std::to_string(*outcome.report.final_threshold) : std::string("none")) << '\n';
  return kExitOk;
}

int cmd_quantize(const Options& o, std::ostream& out) {
  const QuantConfig config{o.p, o.p_alpha};
  config.validate();
  const Model model = load_model(o.input);
  if (model.has_batchnorm()) {
    throw ValidationError("model contains batchnorm; run fuse first (fuse -> prune -> quantize)");
  }
  const QuantizedModel q = quantize_model(model, config);
  save_quantized_model(q, o.output);
  out << "quantized " << q.params.size() << " conv layers with S=2^" << config.p << ", alpha=2^-" << config.p_alpha
      << "; parameter saturations: " << q.parameter_saturations << '\n';
  return kExitOk;
}

template <typename Scalar>
void write_trace(const InferenceTrace<Scalar>& trace, const fs::path& dir) {
  prepare_dir(dir);
  for (const auto& [id, map] : trace) write_tensor(dir / (id + ".tnsr"), map);
}

template <typename Scalar>
void print_outputs(const InferenceTrace<Scalar>& trace, const std::vector<std::string>& outputs, std::ostream& out) {
  for (const auto& id : outputs) {
    if (const auto* m = trace.find(id)) out << id << ": " << to_string(m->shape()) << '\n';
  }
}

template <typename Scalar>
InferenceTrace<Scalar> outputs_only(const InferenceTrace<Scalar>& trace, const std::vector<std::string>& outputs) {
  InferenceTrace<Scalar> sel;
  for (const auto& id : outputs) sel.add(id, trace.at(id));
  return sel;
}

int cmd_infer(const Options& o, std::ostream& out) {
  if (o.engine != "float" && o.engine != "int") throw ValidationError("--engine must be float or int");
  if (o.taps.empty() && o.out_dir.empty()) throw ValidationError("infer needs --taps and/or --out");
  require_file(o.tensor);
  const bool taps = !o.taps.empty();

  if (o.engine == "float") {
    const Model model = load_model(o.input);
    const auto trace = float_infer(model, read_tensor_as<float>(o.tensor), taps);
    if (taps) write_trace(trace, o.taps);
    if (!o.out_dir.empty()) write_trace(outputs_only(trace, model.graph.output_ids()), o.out_dir);
    print_outputs(trace, model.graph.output_ids(), out);
    return kExitOk;
  }

  const QuantizedModel q = load_quantized_model(o.input);
  const AnyFeatureMap any = read_tensor(o.tensor);
  std::uint64_t input_saturations = 0;
  IntFeatureMap input;
  if (const auto* f = std::get_if<FloatFeatureMap>(&any)) {
    input = quantize_input(*f, q.config, &input_saturations);
  } else if (const auto* i = std::get_if<IntFeatureMap>(&any)) {
    input = *i;
  } else {
    throw ValidationError("integer engine takes float32 or int16 input tensors");
  }
  const IntInference result = int_infer(q, input, taps);
  if (taps) write_trace(result.trace, o.taps);
  if (!o.out_dir.empty()) write_trace(outputs_only(result.trace, q.graph.output_ids()), o.out_dir);
  if (!o.stats.empty()) {
    auto j = to_json(result.overflow);
    j["input_saturations"] = input_saturations;
    write_json(o.stats, j);
  }
  print_outputs(result.trace, q.graph.output_ids(), out);
  out << "saturation events: " << result.overflow.total() + input_saturations << '\n';
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  require_file(o.tensor);
  const Model model = load_model(o.float_model);
  const QuantizedModel q = load_quantized_model(o.int_model);
  const auto x = read_tensor_as<float>(o.tensor);
  const auto float_trace = float_infer(model, x, true);
  const IntInference int_result = int_infer(q, quantize_input(x, q.config), true);
  const MseReport report = compare_traces(float_trace, int_result.trace, q.config.p);
  if (!o.csv.empty()) detail::atomic_write(o.csv, to_csv(report));
  if (!o.report.empty()) write_json(o.report, to_json(report));
  out << to_text(report);
  return kExitOk;
}

int cmd_flops(const Options& o, std::ostream& out) {
  FlopReport report = count_flops(load_any_graph(o.input));
  if (!o.reference.empty()) set_reference(report, count_flops(load_any_graph(o.reference)), o.reference);
  if (!o.report.empty()) write_json(o.report, to_json(report));
  out << to_text(report, o.per_layer);
  return kExitOk;
}

int cmd_params(const Options& o, std::ostream& out) {
  ParamReport report = count_params(load_any_graph(o.input));
  if (!o.reference.empty()) set_reference(report, count_params(load_any_graph(o.reference)), o.reference);
  if (!o.report.empty()) write_json(o.report, to_json(report));
  out << to_text(report, o.per_layer);
  return kExitOk;
}

int cmd_init(const Options& o, std::ostream& out) {
  if (o.arch != "tinyyolov3") throw ValidationError("unknown architecture '" + o.arch + "'");
  Model model = build_tinyyolov3(o.classes, o.p_alpha);
  if (o.randomize) model = randomized(model, o.seed);
  save_model(model, o.output);
  out << "wrote " << o.arch << " (" << o.classes << " classes) to " << o.output << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cnnadapt: batchnorm fusion, filter pruning and power-of-two quantization for CNNs", "cnnadapt"};
  app.require_subcommand(1);
  Options o;

  auto* fuse = app.add_subcommand("fuse", "Fold batchnorm into the preceding convolutions");
  fuse->add_option("-i,--input", o.input, "Model manifest")->required();
  fuse->add_option("-o,--output", o.output, "Output manifest")->required();

  auto* prune = app.add_subcommand("prune", "Threshold-sweep filter pruning of a fused model");
  prune->add_option("-i,--input", o.input, "Fused model manifest")->required();
  prune->add_option("-o,--output", o.output, "Output manifest")->required();
  prune->add_option("--metric", o.metric, "frobenius | sparsity")->check(CLI::IsMember({"frobenius", "sparsity"}));
  prune->add_option("--eps", o.eps, "Sparsity epsilon");
  prune->add_option("--delta-map", o.delta_map, "Largest tolerated score drop");
  prune->add_option("--delta-t", o.delta_t, "Threshold increment");
  prune->add_option("--t-start", o.t_start, "Starting threshold");
  prune->add_option("--min-filters", o.min_filters, "Filters kept per layer at minimum");
  prune->add_option("--no-prune", o.no_prune, "Conv ids excluded from pruning")->delimiter(',');
  prune->add_option("--data", o.data, "Pruning dataset directory")->required();
  prune->add_option("--eval", o.eval, "accuracy | map")->check(CLI::IsMember({"accuracy", "map"}));
  prune->add_option("--iou", o.iou_threshold, "IoU threshold for map");
  prune->add_option("--report", o.report, "Write the prune report (JSON)");

  auto* quantize = app.add_subcommand("quantize", "Build the int16 twin of a fused model");
  quantize->add_option("-i,--input", o.input, "Fused model manifest")->required();
  quantize->add_option("-o,--output", o.output, "Quantized manifest")->required();
  quantize->add_option("--p", o.p, "Scale exponent, S = 2^p");
  quantize->add_option("--p-alpha", o.p_alpha, "Leaky slope exponent, alpha = 2^-p_alpha");

  auto* infer = app.add_subcommand("infer", "Run the float or integer engine on one input tensor");
  infer->add_option("-i,--input", o.input, "Model manifest")->required();
  infer->add_option("-x,--tensor", o.tensor, "Input tensor (.tnsr)")->required();
  infer->add_option("--engine", o.engine, "float | int")->check(CLI::IsMember({"float", "int"}));
  infer->add_option("--taps", o.taps, "Write every layer output here");
  infer->add_option("--out", o.out_dir, "Write output-marker tensors here");
  infer->add_option("--stats", o.stats, "Write overflow statistics (JSON, int engine)");

  auto* compare = app.add_subcommand("compare", "Per-layer MSE between float and integer engines");
  compare->add_option("--float", o.float_model, "Float model manifest")->required();
  compare->add_option("--int", o.int_model, "Quantized model manifest")->required();
  compare->add_option("-x,--tensor", o.tensor, "Input tensor (.tnsr)")->required();
  compare->add_option("--csv", o.csv, "Write layer_id,n_elements,mse CSV");
  compare->add_option("--report", o.report, "Write the MSE report (JSON)");

  auto* flops = app.add_subcommand("flops", "FLOP accounting");
  flops->add_option("-i,--input", o.input, "Model manifest")->required();
  flops->add_flag("--per-layer", o.per_layer, "Print one row per conv");
  flops->add_option("--ref", o.reference, "Reference model for the reduction percentage");
  flops->add_option("--report", o.report, "Write the report (JSON)");

  auto* params = app.add_subcommand("params", "Parameter accounting");
  params->add_option("-i,--input", o.input, "Model manifest")->required();
  params->add_flag("--per-layer", o.per_layer, "Print one row per conv");
  params->add_option("--ref", o.reference, "Reference model for the reduction percentage");
  params->add_option("--report", o.report, "Write the report (JSON)");

  auto* init = app.add_subcommand("init", "Write a bundled architecture descriptor");
  init->add_option("--arch", o.arch, "Architecture")->check(CLI::IsMember({"tinyyolov3"}));
  init->add_option("--classes", o.classes, "Number of classes");
  init->add_option("--p-alpha", o.p_alpha, "Leaky slope exponent");
  init->add_option("--seed", o.seed, "Fill parameters with seeded random values")->each([&](const std::string&) {
    o.randomize = true;
  });
  init->add_option("-o,--output", o.output, "Output manifest")->required();

  std::vector<std::string> argv_storage{"cnnadapt"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (fuse->parsed()) return cmd_fuse(o, out);
    if (prune->parsed()) return cmd_prune(o, out);
    if (quantize->parsed()) return cmd_quantize(o, out);
    if (infer->parsed()) return cmd_infer(o, out);
    if (compare->parsed()) return cmd_compare(o, out);
    if (flops->parsed()) return cmd_flops(o, out);
    if (params->parsed()) return cmd_params(o, out);
    if (init->parsed()) return cmd_init(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitValidation;
}

}  // namespace cnnadapt::cli
