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

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnnadapt/model.hpp"

namespace cnnadapt {

enum class PruneMetric { Frobenius, Sparsity };

std::string to_string(PruneMetric m);
PruneMetric prune_metric_from_string(const std::string& s);

struct PruneConfig {
  PruneMetric metric = PruneMetric::Frobenius;
  double sparsity_eps = 0.003;
  double delta_map = 0.01;  // largest tolerated drop of the evaluation score
  double t_start = 0.0;
  double delta_t = 0.02;
  Index min_filters_per_layer = 1;
  std::set<std::string> no_prune;  // in addition to layers flagged no_prune
  std::size_t max_steps = 100000;

  void validate() const;
};

/// Per prunable conv: one non-negative metric value per filter.
using FilterMetricTable = std::map<std::string, Eigen::VectorXd>;

/// Removed filter indices per conv, ascending, in the source model's numbering.
using RemovalMap = std::map<std::string, std::vector<Index>>;

/// L2 norm of each filter's weights over (kh, kw, c); biases excluded.
Eigen::VectorXd frobenius_norms(const FilterBank<float>& filters);

/// 1 - |{w : |w| < eps}| / |filter| per filter. Low values mark filters that
/// are mostly near zero.
Eigen::VectorXd filter_sparsity(const FilterBank<float>& filters, double eps);

bool is_prunable(const Graph& graph, const std::string& conv_id, const PruneConfig& config);

/// The configured metric for every prunable conv.
FilterMetricTable compute_metrics(const Model& model, const PruneConfig& config);

/// Drops the listed filters and propagates the removal: every conv whose
/// input carries a removed channel (through pooling, upsampling, output
/// markers or either side of a concat) loses the matching input slice.
Model remove_filters(const Model& model, const RemovalMap& removed);

struct PruneResult {
  Model model;
  RemovalMap removed;
};

/// Removes, in every prunable conv, the filters whose metric is strictly
/// below `threshold`, keeping at least min_filters_per_layer (the lowest
/// metrics go first when capped). Requires a model without batchnorm.
PruneResult prune_below(const Model& model, const FilterMetricTable& metrics, double threshold,
                        const PruneConfig& config);

struct PruneStep {
  double threshold = 0.0;
  std::map<std::string, Index> removed_per_layer;
  double score = 0.0;
  bool accepted = false;
  double param_reduction_percent = 0.0;
  double flop_reduction_percent = 0.0;
};

struct PruneReport {
  PruneMetric metric = PruneMetric::Frobenius;
  double delta_map = 0.0;
  double delta_t = 0.0;
  double initial_score = 0.0;
  std::vector<PruneStep> steps;
  std::optional<double> final_threshold;  // empty when even t_start was rejected
};

nlohmann::ordered_json to_json(const PruneReport& report);

using Evaluator = std::function<double(const Model&)>;

struct PruneOutcome {
  Model model;
  PruneReport report;
};

/// Raised when the evaluator throws mid-sweep; carries the last accepted model.
class PruneAborted : public Error {
 public:
  PruneAborted(const std::string& what, PruneOutcome partial) : Error(what), partial_(std::move(partial)) {}
  const PruneOutcome& partial() const { return partial_; }

 private:
  PruneOutcome partial_;
};

/// Threshold sweep. Metrics and the initial score are computed once on the
/// input model; step k prunes the input model at T = t_start + k * delta_t.
/// A step is accepted while initial - score <= delta_map (with a 1e-12 slack
/// for the subtraction); the sweep ends at the first rejected step or after
/// the first accepted T above the largest metric value.
PruneOutcome prune_routine(const Model& model, const PruneConfig& config, const Evaluator& evaluator,
                           const std::function<void(const PruneStep&)>& on_step = {});

}  // namespace cnnadapt
