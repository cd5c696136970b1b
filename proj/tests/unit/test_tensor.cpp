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

#include <cmath>
#include <random>

#include "cnnadapt/ops.hpp"
#include "cnnadapt/parallel.hpp"
#include "cnnadapt/tensor_io.hpp"
#include "test_support.hpp"

using namespace cnnadapt;
using cnnadapt::testing::random_filters;
using cnnadapt::testing::random_map;

namespace {

FloatFeatureMap make_map(Shape s, std::initializer_list<float> values) {
  FloatFeatureMap m(s);
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

}  // namespace

TEST_CASE("conv2d scalar multiply-add") {
  FilterBank<float> f(1, 1, 1, 1);
  f.weight(0, 0, 0, 0) = 3.0f;
  f.biases()(0) = 1.0f;
  const auto out = conv2d(make_map({1, 1, 1}, {2.0f}), f, 1, Padding::Same);
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out(0, 0, 0) == 7.0f);
}

TEST_CASE("conv2d identity kernel with same padding") {
  std::mt19937_64 rng(3);
  const auto x = random_map({5, 4, 1}, rng);
  FilterBank<float> f(3, 3, 1, 1);
  f.weight(1, 1, 0, 0) = 1.0f;
  CHECK(conv2d(x, f, 1, Padding::Same) == x);
}

TEST_CASE("conv2d valid sums a 2x2 window") {
  FilterBank<float> f(2, 2, 1, 1);
  f.weights().setOnes();
  const auto out = conv2d(make_map({2, 2, 1}, {1, 2, 3, 4}), f, 1, Padding::Valid);
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out(0, 0, 0) == 10.0f);
}

TEST_CASE("conv2d output extents") {
  CHECK(conv_extent(416, 3, 1, Padding::Same).out == 416);
  CHECK(conv_extent(416, 3, 2, Padding::Same).out == 208);
  CHECK(conv_extent(5, 3, 2, Padding::Same).out == 3);
  CHECK(conv_extent(5, 3, 1, Padding::Valid).out == 3);
  CHECK_THROWS_AS(conv_extent(2, 3, 1, Padding::Valid), ValidationError);
}

TEST_CASE("conv2d rejects mismatched channels") {
  FilterBank<float> f(1, 1, 2, 1);
  CHECK_THROWS_AS(conv2d(FloatFeatureMap({2, 2, 3}), f, 1, Padding::Same), ValidationError);
}

TEST_CASE("conv2d is linear in the parameters") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> kd(-3.0f, 3.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_map({6, 5, 3}, rng);
    const auto f = random_filters(3, 3, 3, 4, rng);
    const float k = kd(rng);
    FilterBank<float> scaled = f;
    scaled.weights() *= k;
    scaled.biases() *= k;
    const auto a = conv2d(x, f, 1, Padding::Same);
    const auto b = conv2d(x, scaled, 1, Padding::Same);
    for (Index i = 0; i < a.size(); ++i) {
      const float expect = k * a.values()[i];
      CHECK(std::abs(b.values()[i] - expect) <= 1e-6f * std::max(1.0f, std::abs(expect)) * 10);
    }
  }
}

TEST_CASE("affine property of convolution") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_map({5, 5, 2}, rng);
    const auto f = random_filters(3, 3, 2, 3, rng);
    Eigen::VectorXf k(3), h(3);
    for (Index n = 0; n < 3; ++n) {
      k(n) = d(rng);
      h(n) = d(rng);
    }
    FilterBank<float> g = f;
    for (Index n = 0; n < 3; ++n) {
      g.weights().col(n) *= k(n);
      g.biases()(n) = k(n) * f.biases()(n) + h(n);
    }
    const auto a = conv2d(x, f, 1, Padding::Same);
    const auto b = conv2d(x, g, 1, Padding::Same);
    for (Index p = 0; p < a.pixels().rows(); ++p) {
      for (Index n = 0; n < 3; ++n) {
        CHECK(std::abs(k(n) * a.pixels()(p, n) + h(n) - b.pixels()(p, n)) <= 1e-5f);
      }
    }
  }
}

TEST_CASE("conv2d is bit-deterministic across thread counts") {
  std::mt19937_64 rng(5);
  const auto x = random_map({17, 13, 4}, rng);
  const auto f = random_filters(3, 3, 4, 8, rng);
  set_worker_count(1);
  const auto one = conv2d(x, f, 2, Padding::Same);
  set_worker_count(7);
  const auto many = conv2d(x, f, 2, Padding::Same);
  set_worker_count(0);
  CHECK(one == many);
}

TEST_CASE("batchnorm identity statistics") {
  std::mt19937_64 rng(1);
  const auto z = random_map({3, 3, 2}, rng);
  BatchNormParams bn(2);
  bn.epsilon = 0.0f;
  CHECK(batchnorm_forward(z, bn) == z);
}

TEST_CASE("batchnorm hand computed value") {
  BatchNormParams bn(1);
  bn.mu(0) = 1.0f;
  bn.sigma2(0) = 3.99f;
  bn.epsilon = 0.01f;
  bn.gamma(0) = 2.0f;
  bn.beta(0) = 0.5f;
  CHECK(batchnorm_forward(make_map({1, 1, 1}, {3.0f}), bn)(0, 0, 0) == doctest::Approx(2.5f).epsilon(1e-6));
}

TEST_CASE("batchnorm of the channel mean is beta") {
  BatchNormParams bn(2);
  bn.mu << 0.7f, -2.0f;
  bn.gamma << 3.0f, -1.5f;
  bn.beta << 0.25f, -4.0f;
  bn.sigma2 << 0.3f, 2.0f;
  FloatFeatureMap z({3, 2, 2});
  for (Index p = 0; p < 6; ++p) z.pixels().row(p) << 0.7f, -2.0f;
  const auto out = batchnorm_forward(z, bn);
  for (Index p = 0; p < 6; ++p) {
    CHECK(out.pixels()(p, 0) == 0.25f);
    CHECK(out.pixels()(p, 1) == -4.0f);
  }
}

TEST_CASE("batchnorm matches its affine form") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.1f, 4.0f), s(-1.0f, 1.0f);
  BatchNormParams bn(4);
  for (Index n = 0; n < 4; ++n) {
    bn.mu(n) = s(rng);
    bn.sigma2(n) = u(rng);
    bn.gamma(n) = s(rng);
    bn.beta(n) = s(rng);
  }
  const auto z = random_map({4, 4, 4}, rng);
  const auto out = batchnorm_forward(z, bn);
  for (Index p = 0; p < z.pixels().rows(); ++p) {
    for (Index n = 0; n < 4; ++n) {
      const double d = std::sqrt(double(bn.sigma2(n)) + bn.epsilon);
      const double expect = bn.gamma(n) / d * z.pixels()(p, n) + (bn.beta(n) - bn.gamma(n) * bn.mu(n) / d);
      CHECK(std::abs(out.pixels()(p, n) - expect) <= 1e-6);
    }
  }
}

TEST_CASE("batchnorm parameter validation") {
  BatchNormParams bn(2);
  bn.sigma2(1) = -1.0f;
  CHECK_THROWS_AS(bn.validate(), ValidationError);
  BatchNormParams zero(1);
  zero.sigma2(0) = 0.0f;
  zero.epsilon = 0.0f;
  CHECK_THROWS_AS(zero.validate(), ValidationError);
}

TEST_CASE("leaky relu branches") {
  CHECK(leaky_relu(make_map({1, 1, 1}, {5.0f}), 0.0625f)(0, 0, 0) == 5.0f);
  CHECK(leaky_relu(make_map({1, 1, 1}, {-16.0f}), 0.0625f)(0, 0, 0) == -1.0f);
  CHECK(leaky_relu(make_map({1, 1, 1}, {-3.0f}), 0.0f)(0, 0, 0) == 0.0f);
}

TEST_CASE("maxpool examples") {
  const auto out = maxpool(make_map({2, 2, 1}, {1, 2, 3, 4}), 2, 2);
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out(0, 0, 0) == 4.0f);

  const auto c = FloatFeatureMap::Constant({6, 6, 3}, -2.5f);
  CHECK(maxpool(c, 2, 2) == FloatFeatureMap::Constant({3, 3, 3}, -2.5f));

  const auto single = maxpool(make_map({1, 1, 1}, {7.0f}), 2, 1);
  CHECK(single.shape() == Shape{1, 1, 1});
  CHECK(single(0, 0, 0) == 7.0f);

  const auto neg = maxpool(FloatFeatureMap::Constant({13, 13, 2}, -1.0f), 2, 1);
  CHECK(neg == FloatFeatureMap::Constant({13, 13, 2}, -1.0f));
}

TEST_CASE("maxpool size 1 is idempotent") {
  std::mt19937_64 rng(4);
  const auto x = random_map({5, 7, 3}, rng);
  CHECK(maxpool(x, 1, 1) == x);
  CHECK(maxpool(maxpool(x, 1, 1), 1, 1) == x);
}

TEST_CASE("maxpool on integers") {
  IntFeatureMap x({2, 2, 1});
  x.pixels() << -5, -3, -9, -4;
  CHECK(maxpool(x, 2, 2)(0, 0, 0) == -3);
}

TEST_CASE("upsample nearest") {
  std::mt19937_64 rng(6);
  const auto x = random_map({3, 2, 2}, rng);
  CHECK(upsample_nearest(x, 1) == x);
  CHECK(upsample_nearest(make_map({1, 1, 1}, {5.0f}), 2) == FloatFeatureMap::Constant({2, 2, 1}, 5.0f));
  const auto up = upsample_nearest(make_map({2, 1, 1}, {1.0f, 2.0f}), 2);
  CHECK(up == make_map({4, 2, 1}, {1, 1, 1, 1, 2, 2, 2, 2}));
}

TEST_CASE("concat along channels") {
  std::mt19937_64 rng(7);
  const auto x = random_map({3, 3, 2}, rng);
  CHECK(concat(x, FloatFeatureMap({3, 3, 0})) == x);
  CHECK(concat(make_map({1, 1, 1}, {1.0f}), make_map({1, 1, 2}, {2.0f, 3.0f})) == make_map({1, 1, 3}, {1, 2, 3}));
  CHECK_THROWS_AS(concat(x, FloatFeatureMap({2, 3, 1})), ValidationError);
}

TEST_CASE("feature map shape checks") {
  CHECK_THROWS_AS(FloatFeatureMap({0, 1, 1}), ValidationError);
  CHECK_THROWS_AS(FloatFeatureMap({1, 1, 2}, FloatFeatureMap::Storage::Zero(1, 3)), ValidationError);
  CHECK_THROWS_AS(FilterBank<float>(0, 1, 1, 1), ValidationError);
  CHECK(width_bits<std::int16_t>() == 16);
  CHECK(width_bits<std::int32_t>() == 32);
}

TEST_CASE("tensor container round trip") {
  cnnadapt::testing::TempDir dir;
  std::mt19937_64 rng(8);
  const auto f = random_map({4, 3, 5}, rng);
  write_tensor(dir / "f.tnsr", f);
  CHECK(read_tensor_as<float>(dir / "f.tnsr") == f);

  IntFeatureMap i({2, 2, 2});
  i.pixels() << -32768, 32767, 1, -1, 0, 5, 6, 7;
  write_tensor(dir / "i.tnsr", i);
  CHECK(read_tensor_as<std::int16_t>(dir / "i.tnsr") == i);
  CHECK_THROWS_AS(read_tensor_as<float>(dir / "i.tnsr"), IoError);

  const auto bytes = encode_tensor(f);
  CHECK(bytes.size() == 4 + 4 + 1 + 1 + 12 + 60 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TNSR");
  CHECK(bytes[8] == 0);
  CHECK(bytes[9] == 3);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_tensor(cut), IoError);
  std::vector<std::uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(bad), IoError);
  CHECK_THROWS_AS(read_tensor(dir / "missing.tnsr"), IoError);
}
