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
#include <sstream>

#include <json.hpp>

#include "cnnadapt/cli.hpp"
#include "cnnadapt/detail/binary.hpp"
#include "cnnadapt/evaluation.hpp"
#include "cnnadapt/fusion.hpp"
#include "cnnadapt/model_io.hpp"
#include "cnnadapt/quantization.hpp"
#include "cnnadapt/tensor_io.hpp"
#include "test_support.hpp"

using namespace cnnadapt;
using cnnadapt::testing::chain_model;
using cnnadapt::testing::conv_layer;
using cnnadapt::testing::random_map;
using cnnadapt::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

std::vector<std::uint8_t> bytes(const std::filesystem::path& path) { return detail::read_file(path); }

std::size_t file_count(const std::filesystem::path& dir) {
  return static_cast<std::size_t>(std::distance(std::filesystem::directory_iterator(dir), {}));
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"flops"}).code == 1);
  CHECK(run_cli({"flops", "-i", "x.json", "--bogus"}).code == 1);
}

TEST_CASE("missing input file exits 2") {
  TempDir dir;
  const auto r = run_cli({"flops", "-i", p(dir / "absent.json")});
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.json") != std::string::npos);
}

TEST_CASE("init then flops on the bundled descriptor") {
  TempDir dir;
  REQUIRE(run_cli({"init", "-o", p(dir / "t.json")}).code == 0);
  const auto r = run_cli({"flops", "-i", p(dir / "t.json"), "--per-layer", "--report", p(dir / "r.json")});
  CHECK(r.code == 0);
  CHECK(r.out.find("5.565 GFLOPs") != std::string::npos);
  CHECK(r.out.find("conv13") != std::string::npos);
  std::ifstream in(dir / "r.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["conv_total"] == 5564961792ull);
  CHECK(run_cli({"init", "--arch", "yolov9", "-o", p(dir / "x.json")}).code == 1);
}

TEST_CASE("fuse on a batchnorm-free model only touches flags") {
  TempDir dir;
  const Model m = randomized(chain_model({6, 6, 2}, {conv_layer(3), conv_layer(2)}), 1);
  save_model(m, dir / "m.json");
  const auto manifest_before = bytes(dir / "m.json");
  REQUIRE(run_cli({"fuse", "-i", p(dir / "m.json"), "-o", p(dir / "f.json")}).code == 0);
  CHECK(load_model(dir / "f.json") == m);
  CHECK(bytes(dir / "m.json") == manifest_before);
}

TEST_CASE("pipeline order is enforced") {
  TempDir dir;
  const Model m = randomized(chain_model({6, 6, 2}, {conv_layer(3, 3, true), conv_layer(2)}), 2);
  save_model(m, dir / "m.json");
  const std::size_t files = file_count(dir.path());
  const auto q = run_cli({"quantize", "-i", p(dir / "m.json"), "-o", p(dir / "q.json")});
  CHECK(q.code == 1);
  CHECK(q.err.find("model contains batchnorm; run fuse first") != std::string::npos);
  CHECK(file_count(dir.path()) == files);

  std::filesystem::create_directories(dir / "data");
  const auto pr = run_cli({"prune", "-i", p(dir / "m.json"), "-o", p(dir / "p.json"), "--data", p(dir / "data")});
  CHECK(pr.code == 1);
  CHECK(pr.err.find("run fuse first") != std::string::npos);

  REQUIRE(run_cli({"fuse", "-i", p(dir / "m.json"), "-o", p(dir / "f.json")}).code == 0);
  CHECK(run_cli({"fuse", "-i", p(dir / "f.json"), "-o", p(dir / "ff.json")}).code == 1);
  CHECK(run_cli({"quantize", "-i", p(dir / "f.json"), "-o", p(dir / "q.json"), "--p", "15"}).code == 1);
  CHECK_FALSE(std::filesystem::exists(dir / "q.json"));
  CHECK(run_cli({"quantize", "-i", p(dir / "f.json"), "-o", p(dir / "q.json")}).code == 0);
  CHECK(is_quantized_manifest(dir / "q.json"));
}

TEST_CASE("infer, compare and stats") {
  TempDir dir;
  const Model m = fuse_model(randomized(chain_model({8, 8, 3}, {conv_layer(4, 3, true), conv_layer(2, 1)}), 3));
  save_model(m, dir / "f.json");
  REQUIRE(run_cli({"quantize", "-i", p(dir / "f.json"), "-o", p(dir / "q.json")}).code == 0);
  std::mt19937_64 rng(4);
  write_tensor(dir / "x.tnsr", random_map({8, 8, 3}, rng, 0.0f, 1.0f));

  CHECK(run_cli({"infer", "-i", p(dir / "f.json"), "-x", p(dir / "x.tnsr"), "--taps", p(dir / "ft")}).code == 0);
  CHECK(std::filesystem::exists(dir / "ft" / "conv1.tnsr"));

  for (const char* run : {"a", "b"}) {
    const auto r = run_cli({"infer", "-i", p(dir / "q.json"), "-x", p(dir / "x.tnsr"), "--engine", "int", "--taps",
                        p(dir / (std::string("t") + run)), "--out", p(dir / (std::string("o") + run)), "--stats",
                        p(dir / (std::string("s") + run + ".json"))});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("saturation events: 0") != std::string::npos);
  }
  for (const auto& e : std::filesystem::directory_iterator(dir / "ta")) {
    CHECK(bytes(e.path()) == bytes(dir / "tb" / e.path().filename()));
  }
  CHECK(file_count(dir / "ta") == m.graph.size());
  CHECK(file_count(dir / "oa") == 1);
  CHECK(std::holds_alternative<IntFeatureMap>(read_tensor(dir / "oa" / "output.tnsr")));

  const auto c = run_cli({"compare", "--float", p(dir / "f.json"), "--int", p(dir / "q.json"), "-x", p(dir / "x.tnsr"),
                      "--csv", p(dir / "mse.csv"), "--report", p(dir / "mse.json")});
  CHECK(c.code == 0);
  std::ifstream csv(dir / "mse.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "layer_id,n_elements,mse");

  CHECK(run_cli({"infer", "-i", p(dir / "f.json"), "-x", p(dir / "x.tnsr")}).code == 1);
  CHECK(run_cli({"infer", "-i", p(dir / "f.json"), "-x", p(dir / "none.tnsr"), "--out", p(dir / "o")}).code == 2);
}

TEST_CASE("params with a reference model") {
  TempDir dir;
  REQUIRE(run_cli({"init", "--classes", "1", "-o", p(dir / "t.json")}).code == 0);
  REQUIRE(run_cli({"fuse", "-i", p(dir / "t.json"), "-o", p(dir / "f.json")}).code == 0);
  REQUIRE(run_cli({"quantize", "-i", p(dir / "f.json"), "-o", p(dir / "q.json")}).code == 0);
  const auto r = run_cli({"params", "-i", p(dir / "q.json"), "--ref", p(dir / "t.json")});
  CHECK(r.code == 0);
  CHECK(r.out.find("reduction vs") != std::string::npos);
  CHECK(run_cli({"flops", "-i", p(dir / "q.json")}).code == 0);
}

TEST_CASE("prune logs one line per step") {
  TempDir dir;
  Model m = randomized(chain_model({4, 4, 1}, {conv_layer(4, 1), conv_layer(2, 1, false, false)}), 5);
  m.params.at("conv1").filters.weights().col(1).setZero();
  m.params.at("conv1").filters.biases()(1) = 0.0f;
  save_model(m, dir / "m.json");
  std::filesystem::create_directories(dir / "data");
  std::mt19937_64 rng(6);
  for (int i = 0; i < 4; ++i) {
    const std::string name = "s" + std::to_string(i);
    const auto x = random_map({4, 4, 1}, rng, 0.0f, 1.0f);
    const int cls = top1_class(float_infer(m, x));
    write_tensor(dir / "data" / (name + ".tnsr"), x);
    std::ofstream(dir / "data" / (name + ".json")) << "{\"class\": " << cls << "}";
  }
  const auto r = run_cli({"prune", "-i", p(dir / "m.json"), "-o", p(dir / "p.json"), "--data", p(dir / "data"),
                      "--delta-t", "0.05", "--report", p(dir / "rep.json")});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::size_t steps = 0;
  while (std::getline(lines, line)) steps += line.rfind("step ", 0) == 0 ? 1 : 0;
  std::ifstream in(dir / "rep.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(steps == j["steps"].size());
  CHECK(load_model(dir / "p.json").graph.conv_attrs("conv1").num_filters < 4);

  CHECK(run_cli({"prune", "-i", p(dir / "m.json"), "-o", p(dir / "x.json"), "--data", p(dir / "data"), "--metric",
             "l2"}).code == 1);
  CHECK(run_cli({"prune", "-i", p(dir / "m.json"), "-o", p(dir / "x.json"), "--data", p(dir / "data"), "--delta-t",
             "0"}).code == 1);
  CHECK_FALSE(std::filesystem::exists(dir / "x.json"));
}
