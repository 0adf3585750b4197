/*
 * Copyright 2026 The fogwear Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fogwear/compression.hpp"
#include "fogwear/container.hpp"
#include "fogwear/error.hpp"
#include "fogwear/rng.hpp"
#include "oracles.hpp"

using namespace fogwear;
using namespace fogwear::compress;

TEST_CASE("qparams and round trip") {
  const QuantParams s = symmetric_qparams(2.54);
  CHECK(s.zero_point == 0);
  CHECK(s.scale == doctest::Approx(0.02));
  CHECK(s.quantize(2.54) == 127);
  CHECK(s.quantize(-10.0) == -128);
  CHECK(s.quantize(0.01) == 1);  // half away from zero
  CHECK(s.quantize(-0.01) == -1);
  CHECK(symmetric_qparams(0.0).scale == kScaleFloor);

  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double lo = -rng.uniform() * 5, hi = rng.uniform() * 5;
    const QuantParams a = affine_qparams(lo, hi);
    CHECK(a.zero_point >= -128);
    CHECK(a.zero_point <= 127);
    CHECK(a.quantize(0.0) == a.zero_point);
    const double x = rng.uniform(lo, hi);
    CHECK(std::abs(a.dequantize(a.quantize(x)) - x) <= a.scale / 2 + 1e-12);
  }
}

TEST_CASE("magnitude pruning") {
  nn::Parameters p;
  p["a/weight"] = nn::Tensor({4}, {0.1, -0.9, 0.4, 0.6});
  p["a/bias"] = nn::Tensor({1}, {0.001});
  PruneResult r = prune_magnitude(p, 0.5);
  CHECK(r.params.at("a/weight").data == std::vector<double>{0, -0.9, 0, 0.6});
  CHECK(r.params.at("a/bias").data[0] == 0.001);
  CHECK(r.mask.at("a/weight") == std::vector<std::uint8_t>{0, 1, 0, 1});
  CHECK(prune_magnitude(p, 0.0).params == p);
  CHECK_THROWS_AS(prune_magnitude(p, 1.0), ConfigError);

  nn::Parameters big;
  big["x/weight"] = nn::Tensor({10000});
  Rng rng(4);
  for (double& v : big["x/weight"].data) v = rng.normal();
  r = prune_magnitude(big, 0.37);
  std::size_t nz = 0;
  for (double v : r.params.at("x/weight").data) nz += v != 0.0;
  CHECK(std::abs(static_cast<long>(nz) - 6300) <= 1);
}

TEST_CASE("fixed-point multiplier") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double m = std::exp(rng.uniform(-12.0, 2.0));
    const auto fp = FixedPointMultiplier::from(m);
    const auto acc = static_cast<std::int64_t>(rng.uniform(-1e6, 1e6));
    const double exact = static_cast<double>(acc) * m;
    CHECK(std::abs(static_cast<double>(fp.apply(acc)) - exact) <= 0.5 + 1e-6 * std::abs(exact) + 1e-9);
  }
  CHECK(FixedPointMultiplier::from(0.0).apply(12345) == 0);
}

TEST_CASE("quantized model preserves zeros and tracks float") {
  oracle::TinyCase tc = oracle::tiny_case(21, 200);
  const PruneResult pr = prune_magnitude(tc.params, 0.5);
  const ActivationQuant act = calibrate_activations(tc.spec, pr.params, tc.windows);
  const QuantizedModel qm = quantize_model(tc.spec, pr.params, &pr.mask, act);
  const nn::Parameters dq = dequantize_parameters(qm);
  for (const auto& [k, m] : pr.mask) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0) CHECK(qm.weights.at(k).values[i] == 0);
    }
    const QuantParams& q = qm.weights.at(k).qparams;
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(std::abs(dq.at(k).data[i] - pr.params.at(k).data[i]) <= q.scale / 2 + 1e-12);
    }
  }
  double mean = 0.0, worst = 0.0;
  for (const auto& w : tc.windows) {
    const double d = std::abs(quantized_forward(qm, w) - nn::forward(tc.spec, pr.params, w));
    mean += d;
    worst = std::max(worst, d);
  }
  mean /= static_cast<double>(tc.windows.size());
  CHECK(mean <= 0.02);
  CHECK(worst <= 0.1);
  // Integer path is deterministic.
  CHECK(quantized_forward(qm, tc.windows[3]) == quantized_forward(qm, tc.windows[3]));
}

TEST_CASE("zero-weight model gives one half") {
  const oracle::TinyCase tc = oracle::tiny_case(22, 20);
  const nn::Parameters z = nn::zero_parameters(tc.spec);
  const QuantizedModel qm = quantize_model(tc.spec, z, nullptr, calibrate_activations(tc.spec, z, tc.windows));
  CHECK(quantized_forward(qm, tc.windows[0]) == 0.5);
}

TEST_CASE("quantized container round trip and exact sizes") {
  const oracle::TinyCase tc = oracle::tiny_case(23, 30);
  const PruneResult pr = prune_magnitude(tc.params, 0.6);
  const QuantizedModel qm =
      quantize_model(tc.spec, pr.params, &pr.mask, calibrate_activations(tc.spec, pr.params, tc.windows));
  for (bool sparse : {false, true}) {
    const auto bytes = encode_quantized(qm, sparse);
    CHECK(bytes.size() == model_size_bytes(qm, sparse));
    const QuantizedModel back = decode_quantized(bytes);
    for (const auto& w : tc.windows) CHECK(quantized_forward(back, w) == quantized_forward(qm, w));
  }
  CHECK(model_size_bytes(qm, true) < model_size_bytes(qm, false));
  const std::filesystem::path f = std::filesystem::temp_directory_path() / "fogwear_test_q.fwm";
  save_quantized(f, qm, true);
  CHECK(std::filesystem::file_size(f) == model_size_bytes(qm, true));
  CHECK(load_quantized(f).weights.size() == qm.weights.size());
  CHECK_THROWS_AS(container::decode_parameters(encode_quantized(qm, true)), DataError);
}

TEST_CASE("compression pipeline accounting") {
  const oracle::TinyCase tc = oracle::tiny_case(24, 40);
  CompressionConfig cfg;
  cfg.sparsity = 0.0;
  cfg.quantize = false;
  Compressed c = compress_model(tc.spec, tc.params, tc.windows, cfg);
  CHECK(c.sizes.ratio() == 1.0);
  CHECK(c.pruned == tc.params);

  cfg = CompressionConfig{};
  cfg.finetune_epochs = 2;
  c = compress_model(tc.spec, tc.params, tc.windows, cfg);
  REQUIRE(c.quantized.has_value());
  CHECK(c.sizes.compressed_bytes == model_size_bytes(*c.quantized, true));
  CHECK(c.sizes.float_bytes == container::encode_parameters(&tc.spec, tc.params).size());
  CHECK(c.sizes.nonzero_weights * 2 == doctest::Approx(static_cast<double>(c.sizes.total_weights)).epsilon(0.01));
  // Fine-tuning keeps pruned weights at zero.
  for (const auto& [k, m] : c.mask) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == 0) CHECK(c.pruned.at(k).data[i] == 0.0);
    }
  }
  CHECK_THROWS_AS(compress_model(tc.spec, tc.params, {}, cfg), ConfigError);
}
