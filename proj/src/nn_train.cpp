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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fogwear/error.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/rng.hpp"
#include "fogwear/textio.hpp"

namespace fogwear::nn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (optimizer == OptimizerKind::kSgdMomentum && !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (optimizer == OptimizerKind::kAdam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("invalid Adam hyper-parameters");
  }
  if (positive_weight && !(*positive_weight > 0.0)) {
    throw ConfigError("positive class weight must be positive");
  }
}

json to_json(const TrainConfig& c) {
  json j = {{"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd_momentum"},
            {"lr", c.lr},
            {"momentum", c.momentum},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"frozen_prefixes", c.frozen_prefixes}};
  j["positive_weight"] = c.positive_weight ? json(*c.positive_weight) : json("auto");
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (opt == "sgd_momentum" || opt == "sgd") {
    c.optimizer = OptimizerKind::kSgdMomentum;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "'");
  }
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.frozen_prefixes = j.value("frozen_prefixes", c.frozen_prefixes);
  if (j.contains("positive_weight") && !j["positive_weight"].is_string()) {
    c.positive_weight = j["positive_weight"].get<double>();
  }
  c.validate();
  return c;
}

namespace {

bool frozen(const TrainConfig& cfg, const std::string& key) {
  return std::any_of(cfg.frozen_prefixes.begin(), cfg.frozen_prefixes.end(),
                     [&](const std::string& p) { return key.rfind(p, 0) == 0; });
}

}  // namespace

TrainResult train(const ModelSpec& spec, std::span<const Window> dataset,
                  const TrainConfig& cfg, const Parameters* initial,
                  std::span<const double> soft_targets) {
  cfg.validate();
  spec.validate();
  if (dataset.empty()) throw ConfigError("cannot train on an empty dataset");
  if (!soft_targets.empty()) {
    if (soft_targets.size() != dataset.size()) throw ConfigError("one soft target per window required");
    for (double t : soft_targets) {
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("soft targets must lie in [0, 1]");
    }
  }

  std::size_t positives = 0;
  for (const Window& w : dataset) {
    if (!w.label) throw ConfigError("training window without label");
    positives += *w.label == 1;
  }
  const std::size_t negatives = dataset.size() - positives;

  TrainResult result;
  if (cfg.positive_weight) {
    result.positive_weight = *cfg.positive_weight;
  } else if (positives > 0 && negatives > 0) {
    result.positive_weight = static_cast<double>(negatives) / static_cast<double>(positives);
  }

  Rng rng(cfg.seed);
  if (initial != nullptr) {
    check_parameters(spec, *initial);
    result.params = *initial;
  } else {
    result.params = init_parameters(spec, rng.fork(1).next());
  }
  Rng shuffle_rng = rng.fork(2);

  Parameters m1 = zero_parameters(spec);
  Parameters m2 = zero_parameters(spec);
  std::map<std::string, bool> is_frozen;
  for (const auto& [k, t] : result.params) is_frozen[k] = frozen(cfg, k);
  for (const auto& [k, m] : cfg.masks) {
    const auto it = result.params.find(k);
    if (it == result.params.end() || it->second.data.size() != m.size()) {
      throw ConfigError("mask for " + k + " does not match the parameters");
    }
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (m[j] == 0) it->second.data[j] = 0.0;
    }
  }

  std::vector<const Window*> order(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) order[i] = &dataset[i];

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      const std::span<const Window* const> batch(order.data() + start, n);
      std::vector<double> targets;
      if (!soft_targets.empty()) {
        for (const Window* w : batch) targets.push_back(soft_targets[static_cast<std::size_t>(w - dataset.data())]);
      }
      LossAndGradients lg = backward_soft(spec, result.params, batch, targets, result.positive_weight);
      if (!std::isfinite(lg.loss)) {
        throw RuntimeError("training diverged: loss " + format_real(lg.loss) + " at epoch " +
                           std::to_string(epoch) + ", batch starting " + std::to_string(start));
      }
      epoch_loss += lg.loss * static_cast<double>(n);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (auto& [key, p] : result.params) {
        if (is_frozen[key]) continue;
        const Tensor& g = lg.gradients.at(key);
        Tensor& a = m1.at(key);
        Tensor& b = m2.at(key);
        for (std::size_t j = 0; j < p.data.size(); ++j) {
          if (cfg.optimizer == OptimizerKind::kAdam) {
            a.data[j] = cfg.beta1 * a.data[j] + (1.0 - cfg.beta1) * g.data[j];
            b.data[j] = cfg.beta2 * b.data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
            p.data[j] -= cfg.lr * (a.data[j] / bc1) / (std::sqrt(b.data[j] / bc2) + cfg.epsilon);
          } else {
            a.data[j] = cfg.momentum * a.data[j] + g.data[j];
            p.data[j] -= cfg.lr * a.data[j];
          }
        }
        if (const auto m = cfg.masks.find(key); m != cfg.masks.end()) {
          for (std::size_t j = 0; j < p.data.size(); ++j) {
            if (m->second[j] == 0) p.data[j] = 0.0;
          }
        }
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

void fit_input_scales(ModelSpec& spec, std::span<const Window> windows) {
  for (auto& [m, g] : spec.inputs) {
    double sum2 = 0.0;
    std::size_t n = 0;
    for (const Window& w : windows) {
      const signal::ModalityBlock* b = w.block(m);
      if (b == nullptr) continue;
      for (double v : b->data) sum2 += v * v;
      n += b->data.size();
    }
    const double rms = n > 0 ? std::sqrt(sum2 / static_cast<double>(n)) : 0.0;
    g.scale = rms > 0.0 ? 1.0 / rms : 1.0;
  }
}

}  // namespace fogwear::nn
