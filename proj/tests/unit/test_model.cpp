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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "cnnadapt/model_io.hpp"
#include "test_support.hpp"

using namespace cnnadapt;
using cnnadapt::testing::chain_model;
using cnnadapt::testing::conv_layer;
using cnnadapt::testing::random_map;
using cnnadapt::testing::TempDir;

namespace {

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
}

std::size_t count_kind(const Graph& g, LayerKind k) {
  std::size_t n = 0;
  for (const auto& l : g.layers()) n += l.kind() == k ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("shape inference follows conv and pool") {
  Model m = chain_model({416, 416, 3}, {conv_layer(16)});
  auto layers = m.graph.layers();
  layers.insert(layers.end() - 1, LayerSpec{"pool", {"conv1"}, MaxPoolAttrs{2, 2}});
  layers.back().inputs = {"pool"};
  const ShapeTable shapes = shape_infer(Graph(layers));
  CHECK(shapes.at("conv1") == Shape{416, 416, 16});
  CHECK(shapes.at("pool") == Shape{208, 208, 16});
  CHECK(shapes.at("output") == Shape{208, 208, 16});
}

TEST_CASE("graph validation rejects malformed layer lists") {
  CHECK_THROWS_AS(Graph({{"c", {"input"}, ConvAttrs{}}}), ValidationError);
  CHECK_THROWS_AS(Graph({{"input", {}, InputAttrs{4, 4, 1}}, {"x", {"nowhere"}, OutputAttrs{}}}),
                  ValidationError);
  CHECK_THROWS_AS(Graph({{"input", {}, InputAttrs{4, 4, 1}}, {"input", {"input"}, OutputAttrs{}}}),
                  ValidationError);
  CHECK_THROWS_AS(Graph({{"input", {}, InputAttrs{4, 4, 1}}, {"cat", {"input"}, ConcatAttrs{}}}),
                  ValidationError);
  CHECK_THROWS_AS(layer_kind_from_string("shortcut"), ValidationError);
  CHECK_THROWS_AS(layer_kind_from_string("bogus"), ValidationError);
}

TEST_CASE("model validation checks parameters against shapes") {
  Model m = chain_model({8, 8, 3}, {conv_layer(4), conv_layer(2)});
  CHECK_NOTHROW(m.validate());
  Model wrong = m;
  wrong.params.at("conv2").filters = FilterBank<float>(3, 3, 5, 2);
  CHECK_THROWS_AS(wrong.validate(), ValidationError);
  Model flag = m;
  flag.graph.conv_attrs("conv1").has_batchnorm = true;
  CHECK_THROWS_AS(flag.validate(), ValidationError);
}

TEST_CASE("float inference with an identity kernel returns the input") {
  Model m = chain_model({6, 5, 1}, {conv_layer(1, 3, false, false)});
  m.params.at("conv1").filters.weight(1, 1, 0, 0) = 1.0f;
  std::mt19937_64 rng(1);
  const auto x = random_map({6, 5, 1}, rng);
  const auto trace = float_infer(m, x);
  CHECK(trace.at("output") == x);
}

TEST_CASE("identity batchnorm leaves the trace unchanged") {
  std::mt19937_64 rng(2);
  Model plain = randomized(chain_model({7, 7, 2}, {conv_layer(3), conv_layer(2)}), 9);
  Model with_bn = plain;
  with_bn.graph.conv_attrs("conv1").has_batchnorm = true;
  with_bn.graph.conv_attrs("conv1").has_bias = false;
  with_bn.params.at("conv1").filters.biases().setZero();
  plain.params.at("conv1").filters.biases().setZero();
  BatchNormParams bn(3);
  bn.epsilon = 0.0f;
  with_bn.params.at("conv1").batchnorm = bn;
  const auto x = random_map({7, 7, 2}, rng);
  const auto a = float_infer(plain, x, true);
  const auto b = float_infer(with_bn, x, true);
  CHECK(a == b);
}

TEST_CASE("trace taps cover every layer in order") {
  Model m = randomized(chain_model({5, 5, 1}, {conv_layer(2), conv_layer(1)}), 3);
  std::mt19937_64 rng(3);
  const auto x = random_map({5, 5, 1}, rng);
  const auto full = float_infer(m, x, true);
  REQUIRE(full.size() == m.graph.size());
  const ShapeTable shapes = shape_infer(m);
  std::size_t i = 0;
  for (const auto& [id, map] : full) {
    CHECK(id == m.graph[i++].id);
    CHECK(map.shape() == shapes.at(id));
  }
  const auto outputs = float_infer(m, x, false);
  CHECK(outputs.size() == 1);
  CHECK(outputs.at("output") == full.at("output"));
  CHECK_THROWS_AS(float_infer(m, FloatFeatureMap({4, 5, 1})), ValidationError);
}

TEST_CASE("float inference is deterministic across thread counts") {
  const Model m = randomized(build_tinyyolov3(2), 4);
  std::mt19937_64 rng(4);
  const auto x = random_map({416, 416, 3}, rng, 0.0f, 1.0f);
  set_worker_count(1);
  const auto a = float_infer(m, x);
  set_worker_count(5);
  const auto b = float_infer(m, x);
  set_worker_count(0);
  CHECK(a == b);
}

TEST_CASE("save and load round trip") {
  TempDir dir;
  const Model m = randomized(chain_model({9, 7, 3}, {conv_layer(4, 3, true), conv_layer(5, 1), conv_layer(2, 3, true)}), 17);
  save_model(m, dir / "m.json");
  const Model back = load_model(dir / "m.json");
  CHECK(back == m);
  CHECK(model_identity(back) == model_identity(m));
  const auto j = read_json(dir / "m.json");
  CHECK(j["format_version"] == 1);
  CHECK(j["weights"] == "m.weights");
  CHECK(j["layers"][1]["epsilon"].get<double>() == doctest::Approx(0.001));
}

TEST_CASE("missing weight record is reported with the layer id") {
  TempDir dir;
  const Model small = randomized(chain_model({6, 6, 1}, {conv_layer(2)}), 1);
  const Model big = randomized(chain_model({6, 6, 1}, {conv_layer(2), conv_layer(3)}), 1);
  save_model(small, dir / "small.json");
  save_model(big, dir / "big.json");
  std::filesystem::copy_file(dir / "small.weights", dir / "big.weights",
                             std::filesystem::copy_options::overwrite_existing);
  try {
    load_model(dir / "big.json");
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("conv2") != std::string::npos);
  }
}

TEST_CASE("load rejects unsupported and malformed manifests") {
  TempDir dir;
  const Model m = randomized(chain_model({6, 6, 1}, {conv_layer(2)}), 1);
  save_model(m, dir / "m.json");
  const auto good = read_json(dir / "m.json");

  auto shortcut = good;
  shortcut["layers"][1]["kind"] = "shortcut";
  write_json(dir / "m.json", shortcut);
  CHECK_THROWS_AS(load_model(dir / "m.json"), ValidationError);

  auto batch = good;
  batch["layers"][0]["batch"] = 4;
  write_json(dir / "m.json", batch);
  CHECK_THROWS_AS(load_model(dir / "m.json"), ValidationError);

  auto version = good;
  version["format_version"] = 7;
  write_json(dir / "m.json", version);
  CHECK_THROWS_AS(load_model(dir / "m.json"), IoError);

  std::ofstream(dir / "m.json") << "{ not json";
  CHECK_THROWS_AS(load_model(dir / "m.json"), IoError);
  CHECK_THROWS_AS(load_model(dir / "absent.json"), IoError);

  write_json(dir / "m.json", good);
  std::ofstream(dir / "m.weights", std::ios::binary) << "CNNW";
  CHECK_THROWS_AS(load_model(dir / "m.json"), IoError);
}

TEST_CASE("tinyyolov3 descriptor structure") {
  const Model m = build_tinyyolov3(80);
  CHECK(m.graph.conv_ids().size() == 13);
  CHECK(count_kind(m.graph, LayerKind::MaxPool) == 6);
  CHECK(count_kind(m.graph, LayerKind::Upsample) == 1);
  CHECK(count_kind(m.graph, LayerKind::Concat) == 1);
  CHECK(m.graph.output_ids() == std::vector<std::string>{"output1", "output2"});
  CHECK(m.graph.conv_attrs("conv10").num_filters == 255);
  CHECK(m.graph.conv_attrs("conv13").num_filters == 255);
  CHECK(m.graph.conv_attrs("conv10").no_prune);
  CHECK_FALSE(m.graph.conv_attrs("conv10").has_batchnorm);
  CHECK(build_tinyyolov3(1).graph.conv_attrs("conv13").num_filters == 18);

  const ShapeTable s = shape_infer(m);
  CHECK(s.at("conv1") == Shape{416, 416, 16});
  CHECK(s.at("pool6") == Shape{13, 13, 512});
  CHECK(s.at("output1") == Shape{13, 13, 255});
  CHECK(s.at("concat1") == Shape{26, 26, 384});
  CHECK(s.at("output2") == Shape{26, 26, 255});

  Index weights = 0;
  for (const auto& [id, p] : m.params) weights += p.filters.weights().size();
  CHECK(weights == 8845488);
  CHECK(m.params.at("conv7").filters.weights().size() == 4718592);
  CHECK(m.params.at("conv1").filters.weights().isZero());
}

TEST_CASE("tinyyolov3 survives serialization") {
  TempDir dir;
  const Model m = randomized(build_tinyyolov3(3), 5);
  save_model(m, dir / "t.json");
  const Model back = load_model(dir / "t.json");
  CHECK(back == m);
  CHECK(back.graph.conv_ids().size() == 13);
  CHECK(count_kind(back.graph, LayerKind::MaxPool) == 6);
  CHECK(count_kind(back.graph, LayerKind::Upsample) == 1);
  CHECK(count_kind(back.graph, LayerKind::Concat) == 1);
}

TEST_CASE("channel provenance through concat") {
  const Model m = build_tinyyolov3(1);
  const auto prov = channel_provenance(m.graph);
  const auto& cat = prov[m.graph.position("concat1")];
  REQUIRE(cat.size() == 384);
  CHECK(cat[0] == ChannelOrigin{m.graph.position("conv11"), 0});
  CHECK(cat[127] == ChannelOrigin{m.graph.position("conv11"), 127});
  CHECK(cat[128] == ChannelOrigin{m.graph.position("conv5"), 0});
  CHECK(cat[383] == ChannelOrigin{m.graph.position("conv5"), 255});
}
