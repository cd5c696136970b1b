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

#include "cnnadapt/model.hpp"

namespace cnnadapt {

/// Folds batchnorm into the preceding conv. Per filter n, with
/// s = gamma[n] / sqrt(sigma2[n] + epsilon):
///   W_bn[.., n] = s * W[.., n]
///   b_bn[n]     = s * (b[n] - mu[n]) + beta[n]
/// Bias-free banks pass all-zero biases, which reduces to beta - s * mu.
/// The scale factors are formed in double and the results rounded once.
FilterBank<float> fuse_layer(const FilterBank<float>& filters, const BatchNormParams& bn);

/// Fuses every conv that carries batchnorm; such convs come out with
/// has_batchnorm cleared and has_bias and fused set. Everything else is
/// copied unchanged. Throws ValidationError if any conv is already marked
/// fused, so a model can never be fused twice.
Model fuse_model(const Model& model);

}  // namespace cnnadapt
