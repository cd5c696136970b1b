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

#include "cnnadapt/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cnnadapt/analysis.hpp"

namespace cnnadapt {
namespace {

void require_fused(const Model& model) {
  if (model.has_batchnorm()) throw ValidationError("model contains batchnorm; run fuse first");
}

std::vector<Index> complement(Index n, const std::vector<Index>& removed) {
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (!std::binary_search(removed.begin(), removed.end(), i)) keep.push_back(i);
  }
  return keep;
}

Eigen::VectorXf take(const Eigen::VectorXf& v, const std::vector<Index>& keep) { return v(keep); }

}  // namespace

std::string to_string(PruneMetric m) { return m == PruneMetric::Frobenius ? "frobenius" : "sparsity"; }

PruneMetric prune_metric_from_string(const std::string& s) {
  if (s == "frobenius") return PruneMetric::Frobenius;
  if (s == "sparsity") return PruneMetric::Sparsity;
  throw ValidationError("unknown pruning metric '" + s + "'");
}

void PruneConfig::validate() const {
  if (!(delta_t > 0.0)) throw ValidationError("delta_t must be positive");
  if (!(delta_map >= 0.0 && delta_map <= 1.0)) throw ValidationError("delta_map must lie in [0, 1]");
  if (!(t_start >= 0.0)) throw ValidationError("t_start must be non-negative");
  if (!(sparsity_eps >= 0.0)) throw ValidationError("sparsity epsilon must be non-negative");
  if (min_filters_per_layer < 1) throw ValidationError("min_filters_per_layer must be at least 1");
}

Eigen::VectorXd frobenius_norms(const FilterBank<float>& filters) {
  return filters.weights().cast<double>().colwise().norm().transpose();
}

Eigen::VectorXd filter_sparsity(const FilterBank<float>& filters, double eps) {
  if (eps < 0.0) throw ValidationError("sparsity epsilon must be non-negative");
  const auto near_zero = (filters.weights().cast<double>().array().abs() < eps).cast<double>();
  return (1.0 - near_zero.colwise().sum() / static_cast<double>(filters.taps())).transpose();
}

bool is_prunable(const Graph& graph, const std::string& conv_id, const PruneConfig& config) {
  return !graph.conv_attrs(conv_id).no_prune && !config.no_prune.contains(conv_id);
}

FilterMetricTable compute_metrics(const Model& model, const PruneConfig& config) {
  FilterMetricTable table;
  for (const auto& id : model.graph.conv_ids()) {
    if (!is_prunable(model.graph, id, config)) continue;
    const auto& f = model.params.at(id).filters;
    table.emplace(id, config.metric == PruneMetric::Frobenius ? frobenius_norms(f)
                                                               : filter_sparsity(f, config.sparsity_eps));
  }
  return table;
}

Model remove_filters(const Model& model, const RemovalMap& removed) {
  model.validate();
  for (const auto& [id, idx] : removed) {
    const Index nf = model.graph.conv_attrs(id).num_filters;
    if (!std::is_sorted(idx.begin(), idx.end()) || std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
      throw ValidationError("removal list for '" + id + "' must be strictly ascending");
    }
    if (!idx.empty() && (idx.front() < 0 || idx.back() >= nf)) {
      throw ValidationError("removal list for '" + id + "' has an out-of-range filter index");
    }
    if (static_cast<Index>(idx.size()) >= nf) throw ValidationError("removal would empty conv '" + id + "'");
  }

  const Graph& graph = model.graph;
  const auto provenance = channel_provenance(graph);
  auto dropped = [&](const ChannelOrigin& o) {
    const auto it = removed.find(graph[o.layer].id);
    return it != removed.end() && std::binary_search(it->second.begin(), it->second.end(), o.channel);
  };

  Model out = model;
  for (const LayerSpec& layer : graph.layers()) {
    if (layer.kind() != LayerKind::Conv) continue;
    const auto& in_prov = provenance[graph.position(layer.inputs[0])];
    std::vector<Index> keep_in;
    for (Index c = 0; c < static_cast<Index>(in_prov.size()); ++c) {
      if (!dropped(in_prov[static_cast<std::size_t>(c)])) keep_in.push_back(c);
    }
    const auto rm = removed.find(layer.id);
    const Index nf = layer.conv()->num_filters;
    const std::vector<Index> keep_out = rm == removed.end() ? complement(nf, {}) : complement(nf, rm->second);
    if (static_cast<std::size_t>(keep_out.size()) == static_cast<std::size_t>(nf) && keep_in.size() == in_prov.size()) {
      continue;
    }
    if (keep_in.empty()) {
      throw ValidationError("pruning would leave conv '" + layer.id + "' without input channels");
    }

    ConvParams& p = out.params.at(layer.id);
    const FilterBank<float>& old = model.params.at(layer.id).filters;
    std::vector<Index> taps;
    taps.reserve(static_cast<std::size_t>(old.kernel_h() * old.kernel_w()) * keep_in.size());
    for (Index kh = 0; kh < old.kernel_h(); ++kh) {
      for (Index kw = 0; kw < old.kernel_w(); ++kw) {
        for (Index c : keep_in) taps.push_back(old.tap(kh, kw, c));
      }
    }
    p.filters = FilterBank<float>(old.kernel_h(), old.kernel_w(), static_cast<Index>(keep_in.size()),
                                  static_cast<Index>(keep_out.size()), old.weights()(taps, keep_out),
                                  old.biases()(keep_out));
    if (p.batchnorm) {
      BatchNormParams& bn = *p.batchnorm;
      bn.mu = take(bn.mu, keep_out);
      bn.sigma2 = take(bn.sigma2, keep_out);
      bn.gamma = take(bn.gamma, keep_out);
      bn.beta = take(bn.beta, keep_out);
    }
    out.graph.conv_attrs(layer.id).num_filters = static_cast<Index>(keep_out.size());
  }
  out.validate();
  return out;
}

PruneResult prune_below(const Model& model, const FilterMetricTable& metrics, double threshold,
                        const PruneConfig& config) {
  config.validate();
  require_fused(model);
  for (const auto& [id, values] : metrics) {
    if (!model.graph.contains(id) || model.graph.at(id).kind() != LayerKind::Conv) {
      throw ValidationError("metric table names '" + id + "', which is not a conv in this model");
    }
    if (values.size() != model.graph.conv_attrs(id).num_filters) {
      throw ValidationError("metric table for '" + id + "' has the wrong length");
    }
  }

  RemovalMap removed;
  for (const auto& id : model.graph.conv_ids()) {
    if (!is_prunable(model.graph, id, config)) continue;
    const auto it = metrics.find(id);
    if (it == metrics.end()) throw ValidationError("metric table has no entry for prunable conv '" + id + "'");
    const Eigen::VectorXd& m = it->second;
    std::vector<Index> below;
    for (Index n = 0; n < m.size(); ++n) {
      if (m[n] < threshold) below.push_back(n);
    }
    const Index budget = std::max<Index>(m.size() - config.min_filters_per_layer, 0);
    if (static_cast<Index>(below.size()) > budget) {
      std::stable_sort(below.begin(), below.end(), [&](Index a, Index b) { return m[a] < m[b]; });
      below.resize(static_cast<std::size_t>(budget));
      std::sort(below.begin(), below.end());
    }
    if (!below.empty()) removed.emplace(id, std::move(below));
  }
  return {remove_filters(model, removed), std::move(removed)};
}

nlohmann::ordered_json to_json(const PruneReport& report) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : report.steps) {
    steps.push_back({{"threshold", s.threshold},
                     {"removed_per_layer", s.removed_per_layer},
                     {"score", s.score},
                     {"accepted", s.accepted},
                     {"param_reduction_percent", s.param_reduction_percent},
                     {"flop_reduction_percent", s.flop_reduction_percent}});
  }
  return {{"report_version", kReportVersion},
          {"kind", "prune"},
          {"metric", to_string(report.metric)},
          {"delta_map", report.delta_map},
          {"delta_t", report.delta_t},
          {"initial_score", report.initial_score},
          {"steps", steps},
          {"final_threshold", report.final_threshold ? nlohmann::ordered_json(*report.final_threshold) : nullptr}};
}

PruneOutcome prune_routine(const Model& model, const PruneConfig& config, const Evaluator& evaluator,
                           const std::function<void(const PruneStep&)>& on_step) {
  config.validate();
  require_fused(model);

  const FilterMetricTable metrics = compute_metrics(model, config);
  double max_metric = -std::numeric_limits<double>::infinity();
  for (const auto& [id, m] : metrics) {
    if (m.size() > 0) max_metric = std::max(max_metric, m.maxCoeff());
  }
  const auto base_params = static_cast<double>(count_params(model.graph).total);
  const auto base_flops = static_cast<double>(count_flops(model.graph).total);

  PruneOutcome outcome{model, {}};
  PruneReport& report = outcome.report;
  report.metric = config.metric;
  report.delta_map = config.delta_map;
  report.delta_t = config.delta_t;
  report.initial_score = evaluator(model);

  for (std::size_t k = 0; k < config.max_steps; ++k) {
    const double threshold = config.t_start + static_cast<double>(k) * config.delta_t;
    PruneResult candidate = prune_below(model, metrics, threshold, config);

    PruneStep step;
    step.threshold = threshold;
    for (const auto& [id, idx] : candidate.removed) step.removed_per_layer[id] = static_cast<Index>(idx.size());
    try {
      step.score = evaluator(candidate.model);
    } catch (const std::exception& e) {
      throw PruneAborted(std::string("evaluator failed at threshold ") + std::to_string(threshold) + ": " + e.what(),
                         outcome);
    }
    step.param_reduction_percent =
        reduction_percent(base_params, static_cast<double>(count_params(candidate.model.graph).total));
    step.flop_reduction_percent =
        reduction_percent(base_flops, static_cast<double>(count_flops(candidate.model.graph).total));
    step.accepted = report.initial_score - step.score <= config.delta_map + 1e-12;
    report.steps.push_back(step);
    if (on_step) on_step(step);

    if (!step.accepted) break;
    outcome.model = std::move(candidate.model);
    report.final_threshold = threshold;
    if (threshold > max_metric) break;
  }
  return outcome;
}

}  // namespace cnnadapt
