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

#include "doctest.h"
#include "fogwear/container.hpp"
#include "fogwear/error.hpp"
#include "fogwear/nn.hpp"
#include "oracles.hpp"

using namespace fogwear;
using namespace fogwear::nn;

namespace {

double max_rel_grad_error(const oracle::TinyCase& tc, double pw) {
  const LossAndGradients lg = backward(tc.spec, tc.params, tc.windows, pw);
  double worst = 0.0;
  Parameters p = tc.params;
  for (auto& [key, t] : p) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double keep = t.data[i];
      t.data[i] = keep + 1e-5;
      const double up = batch_loss(tc.spec, p, tc.windows, pw);
      t.data[i] = keep - 1e-5;
      const double down = batch_loss(tc.spec, p, tc.windows, pw);
      t.data[i] = keep;
      const double numeric = (up - down) / 2e-5;
      const double analytic = lg.gradients.at(key).data[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("depthwise conv on a hand-computed case") {
  const Tensor x({1, 5}, {1, 2, 3, 4, 5});
  const Tensor k({2, 2}, {1, 1, 1, -1});
  const Tensor b({2}, {0.5, 0.0});
  const Tensor y = depthwise_conv1d_forward(x, k, b, 2, Padding::kValid);
  CHECK(y.shape == std::vector<std::size_t>{2, 2});
  CHECK(y.data == std::vector<double>{3.5, 7.5, -1.0, -1.0});
  const Tensor s = depthwise_conv1d_forward(x, Tensor({1, 3}, {1, 1, 1}), Tensor({1}, {0}), 1, Padding::kSame);
  CHECK(s.data == std::vector<double>{3, 6, 9, 12, 9});
}

TEST_CASE("dense layer") {
  const Tensor y = dense_forward(Tensor({2}, {1, 2}), Tensor({2, 2}, {1, 0, -1, 3}), Tensor({2}, {0, 1}));
  CHECK(y.data == std::vector<double>{1, 6});
  CHECK_THROWS_AS(dense_forward(Tensor({3}), Tensor({2, 2}), Tensor({2})), ConfigError);
}

TEST_CASE("default topology") {
  std::map<Modality, InputGeometry> g{{Modality::kEEG, {4, 384, 1}},
                                      {Modality::kEMG, {2, 750, 1}},
                                      {Modality::kACC, {6, 192, 1}}};
  const ModelSpec spec = make_model_spec(g);
  CHECK(spec.branches.size() == 4);
  CHECK(spec.feature_dim() == 4 * 4 + 4 * 4 + 2 * 4 + 6 * 4);
  const Modality eeg[] = {Modality::kEEG};
  const ModelSpec only = restrict_modalities(spec, eeg);
  CHECK(only.branches.size() == 2);
  CHECK(only.feature_dim() == 32);
  const Modality none[] = {Modality::kEEG, Modality::kEMG};
  CHECK(restrict_modalities(spec, none).branches.size() == 3);
  CHECK_THROWS_AS(restrict_modalities(spec, std::span<const Modality>{}), ConfigError);
  // Spec survives a JSON round trip.
  CHECK(to_json(model_spec_from_json(to_json(spec))) == to_json(spec));
}

TEST_CASE("initialization is seeded and bounded") {
  const oracle::TinyCase tc = oracle::tiny_case(5, 1);
  const Parameters a = init_parameters(tc.spec, 1);
  CHECK(a == init_parameters(tc.spec, 1));
  CHECK_FALSE(a == init_parameters(tc.spec, 2));
  for (const auto& [k, t] : a) {
    if (!is_weight_key(k)) continue;
    const double fan_in = static_cast<double>(t.shape.back());
    for (double v : t.data) CHECK(std::abs(v) <= std::sqrt(2.0 / fan_in));
  }
  CHECK_NOTHROW(check_parameters(tc.spec, a));
  Parameters bad = a;
  bad.erase(bad.begin());
  CHECK_THROWS_AS(check_parameters(tc.spec, bad), ConfigError);
}

TEST_CASE("forward matches the straight-line oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const oracle::TinyCase tc = oracle::tiny_case(seed, 10);
    for (const auto& w : tc.windows) {
      CHECK(std::abs(forward(tc.spec, tc.params, w) - oracle::forward(tc.spec, tc.params, w)) <= 1e-12);
    }
  }
}

TEST_CASE("zero parameters give probability one half") {
  const oracle::TinyCase tc = oracle::tiny_case(2, 3);
  CHECK(forward(tc.spec, zero_parameters(tc.spec), tc.windows[0]) == 0.5);
}

TEST_CASE("analytic gradients match finite differences") {
  const oracle::TinyCase tc = oracle::tiny_case(11, 4);
  CHECK(max_rel_grad_error(tc, 1.0) <= 1e-4);
  CHECK(max_rel_grad_error(tc, 2.5) <= 1e-4);
}

TEST_CASE("soft-target gradient equals label gradient at hard targets") {
  const oracle::TinyCase tc = oracle::tiny_case(4, 6);
  std::vector<const Window*> ptrs;
  std::vector<double> targets;
  for (const auto& w : tc.windows) {
    ptrs.push_back(&w);
    targets.push_back(static_cast<double>(*w.label));
  }
  const auto a = backward(tc.spec, tc.params, ptrs, 1.0);
  const auto b = backward_soft(tc.spec, tc.params, ptrs, targets);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
  CHECK(a.gradients == b.gradients);
}

TEST_CASE("training reduces loss and is deterministic") {
  oracle::TinyCase tc = oracle::tiny_case(8, 64);
  // Make the label learnable: shift positive windows.
  for (auto& w : tc.windows) {
    if (*w.label == 1) {
      for (auto& b : w.blocks) {
        for (double& v : b.data) v += 1.0;
      }
    }
  }
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 16;
  cfg.lr = 5e-3;
  const TrainResult a = train(tc.spec, tc.windows, cfg);
  const TrainResult b = train(tc.spec, tc.windows, cfg);
  CHECK(a.params == b.params);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  cfg.optimizer = OptimizerKind::kSgdMomentum;
  cfg.lr = 1e-2;
  const TrainResult c = train(tc.spec, tc.windows, cfg);
  CHECK(c.epoch_loss.back() < c.epoch_loss.front());
}

TEST_CASE("frozen prefixes and masks hold parameters") {
  const oracle::TinyCase tc = oracle::tiny_case(9, 16);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.frozen_prefixes = {"eeg0/"};
  std::vector<std::uint8_t> mask(tc.params.at("head/dense0/weight").data.size(), 1);
  for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = 0;
  cfg.masks["head/dense0/weight"] = mask;
  const TrainResult r = train(tc.spec, tc.windows, cfg, &tc.params);
  CHECK(r.params.at("eeg0/conv0/weight") == tc.params.at("eeg0/conv0/weight"));
  CHECK_FALSE(r.params.at("emg/conv0/weight") == tc.params.at("emg/conv0/weight"));
  const auto& w = r.params.at("head/dense0/weight").data;
  for (std::size_t i = 0; i < w.size(); i += 2) CHECK(w[i] == 0.0);
}

TEST_CASE("training input validation") {
  oracle::TinyCase tc = oracle::tiny_case(3, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  tc.windows[1].label.reset();
  CHECK_THROWS_AS(train(tc.spec, tc.windows, cfg), ConfigError);
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("input scales normalize to unit RMS") {
  oracle::TinyCase tc = oracle::tiny_case(6, 8);
  for (auto& w : tc.windows) {
    for (auto& b : w.blocks) {
      for (double& v : b.data) v *= 50.0;
    }
  }
  fit_input_scales(tc.spec, tc.windows);
  for (const auto& [m, g] : tc.spec.inputs) CHECK(g.scale == doctest::Approx(1.0 / 50.0).epsilon(0.2));
}

TEST_CASE("float container round trip and size") {
  const oracle::TinyCase tc = oracle::tiny_case(7, 1);
  const auto bytes = container::encode_parameters(&tc.spec, tc.params);
  const container::FloatModel back = container::decode_parameters(bytes);
  REQUIRE(back.spec.has_value());
  CHECK(back.params.size() == tc.params.size());
  // Values are stored as float32.
  for (const auto& [k, t] : tc.params) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      CHECK(back.params.at(k).data[i] == static_cast<double>(static_cast<float>(t.data[i])));
    }
  }
  const Parameters none;
  CHECK(container::encode_parameters(nullptr, none).size() == container::kHeaderBytes);
  std::vector<std::uint8_t> broken = bytes;
  broken[0] = 'X';
  CHECK_THROWS_AS(container::decode_parameters(broken), DataError);
  broken = bytes;
  broken.resize(bytes.size() - 3);
  CHECK_THROWS_AS(container::decode_parameters(broken), DataError);
}

TEST_CASE("float32 model of 524288 weights is 2 MiB plus overhead") {
  Parameters p;
  p["w"] = Tensor({524288});
  const auto bytes = container::encode_parameters(nullptr, p);
  // Header, one record header (u16 + key + dtype + rank + one dim).
  CHECK(bytes.size() == container::kHeaderBytes + 2 + 1 + 1 + 1 + 4 + 2 * 1024 * 1024);
}
