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

#pragma once

// Multi-branch depth-wise 1-D CNN: tensors, architecture description,
// forward and backward passes, initialization and a mini-batch trainer.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fogwear/signal.hpp"
#include "json.hpp"

namespace fogwear::nn {

using signal::Modality;
using signal::Window;

// Row-major dense tensor of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, std::vector<double> values);

  static std::size_t numel(const std::vector<std::size_t>& s);
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// ---------------------------------------------------------------------------
// Layers.

enum class Padding : std::uint8_t { kValid, kSame };

// Per-channel correlation. Each input channel c feeds `multiplier` outputs
// c * multiplier + j; there is no cross-channel mixing.
struct DepthwiseConv1D {
  std::size_t kernel_len = 3;
  std::size_t stride = 1;
  std::size_t channels = 1;  // input channels
  std::size_t multiplier = 1;
  Padding padding = Padding::kValid;

  std::size_t out_channels() const { return channels * multiplier; }
  std::size_t pad_total() const { return padding == Padding::kSame ? kernel_len - 1 : 0; }
  std::size_t pad_left() const { return pad_total() / 2; }
  std::size_t out_len(std::size_t in_len) const;
};

struct ReLU {};
struct Concat {
  std::size_t axis = 0;
};
struct Dense {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
};
// Mean over time: [C, T] -> [C].
struct GlobalStats {};
struct Sigmoid {};

using LayerSpec = std::variant<DepthwiseConv1D, ReLU, Concat, Dense, GlobalStats, Sigmoid>;

struct Branch {
  std::string name;  // stable path prefix, e.g. "eeg0"
  Modality modality = Modality::kEEG;
  std::vector<LayerSpec> layers;
};

struct InputGeometry {
  std::size_t channels = 1;
  std::size_t samples = 1;
  // Multiplier applied to raw samples before the first layer.
  double scale = 1.0;
};

struct ModelSpec {
  std::map<Modality, InputGeometry> inputs;
  std::vector<Branch> branches;  // concatenated in this order
  std::vector<LayerSpec> head;   // Concat, Dense, ReLU, Dense, ReLU, Dense, Sigmoid

  // Checks dimension chaining, branch counts per modality (EEG 2 with distinct
  // kernel lengths, EMG 1, ACC 1, for each modality present) and the head
  // shape. Throws ConfigError.
  void validate() const;

  // Length of the concatenated branch output.
  std::size_t feature_dim() const;
  std::vector<Modality> modalities() const;
};

struct ArchitectureConfig {
  std::size_t eeg_kernel_long = 32;
  std::size_t eeg_kernel_short = 8;
  std::size_t emg_kernel = 16;
  std::size_t acc_kernel = 16;
  std::size_t conv_layers = 2;
  std::size_t stride = 2;
  std::size_t multiplier = 4;
  std::size_t head_hidden1 = 64;
  std::size_t head_hidden2 = 32;
};

// Builds the default topology for the given per-modality input geometry.
// Modalities missing from `inputs` get no branch.
ModelSpec make_model_spec(const std::map<Modality, InputGeometry>& inputs,
                          const ArchitectureConfig& arch = {});

// Keeps only the branches of `keep`, rebuilding the head input dimension.
ModelSpec restrict_modalities(const ModelSpec& spec, std::span<const Modality> keep);

// Geometry inferred from a window's blocks (channels x samples).
std::map<Modality, InputGeometry> geometry_of(const Window& w);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ArchitectureConfig& a);
ArchitectureConfig architecture_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Parameters.

// Keys: "<branch>/conv<j>/weight" [C_out, K], ".../bias" [C_out],
//       "head/dense<j>/weight" [out, in], ".../bias" [out].
using Parameters = std::map<std::string, Tensor>;

// Expected parameter shapes for a spec.
std::map<std::string, std::vector<std::size_t>> parameter_shapes(const ModelSpec& spec);
std::size_t parameter_count(const Parameters& params);
bool is_weight_key(const std::string& key);
// Throws ConfigError unless keys and shapes match the spec exactly.
void check_parameters(const ModelSpec& spec, const Parameters& params);

// Uniform fan-in initialization, U(-sqrt(2/fan_in), sqrt(2/fan_in)); biases
// are zero. fan_in is the kernel length for depth-wise convs.
Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed);
Parameters zero_parameters(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Primitive ops.

// x [C, T], kernel [C * multiplier, K], bias [C * multiplier].
Tensor depthwise_conv1d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                                std::size_t stride, Padding padding);
// x [N], W [M, N], b [M].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);

double sigmoid(double z);
inline constexpr double kLogitClamp = 30.0;

// ---------------------------------------------------------------------------
// Forward / backward.

// Activations recorded by a forward pass:
//   "<branch>/input"   normalized input [C, T]
//   "<branch>/conv<j>" conv output, after the following ReLU if any
//   "<branch>/pool"    pooled features [C]
//   "head/concat"      concatenated features
//   "head/dense<j>"    dense output, after the following ReLU if any
// plus the pre-sigmoid logit.
struct ForwardTrace {
  std::map<std::string, Tensor> activations;
  double logit = 0.0;
  double probability = 0.5;
};

ForwardTrace forward_trace(const ModelSpec& spec, const Parameters& params, const Window& w);
double forward_logit(const ModelSpec& spec, const Parameters& params, const Window& w);
double forward(const ModelSpec& spec, const Parameters& params, const Window& w);

struct LossAndGradients {
  double loss = 0.0;
  Parameters gradients;
};

// Mean class-weighted binary cross-entropy over the batch and its gradient.
// Positive samples carry weight `positive_weight`, negatives 1.
LossAndGradients backward(const ModelSpec& spec, const Parameters& params,
                          std::span<const Window* const> batch, double positive_weight = 1.0);
LossAndGradients backward(const ModelSpec& spec, const Parameters& params,
                          std::span<const Window> batch, double positive_weight = 1.0);

// Same, against per-sample targets in [0, 1] with unit weights. Empty
// `targets` falls back to the labels and `positive_weight`.
LossAndGradients backward_soft(const ModelSpec& spec, const Parameters& params,
                               std::span<const Window* const> batch,
                               std::span<const double> targets, double positive_weight = 1.0);

// Loss only (used by finite-difference checks).
double batch_loss(const ModelSpec& spec, const Parameters& params,
                  std::span<const Window> batch, double positive_weight = 1.0);

// ---------------------------------------------------------------------------
// Training.

enum class OptimizerKind : std::uint8_t { kAdam, kSgdMomentum };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  // nullopt: #neg / #pos of the training set.
  std::optional<double> positive_weight;
  // Parameters whose key starts with one of these are not updated.
  std::vector<std::string> frozen_prefixes;
  // Per-parameter 0/1 masks; masked entries are held at exactly 0.
  std::map<std::string, std::vector<std::uint8_t>> masks;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainResult {
  Parameters params;
  std::vector<double> epoch_loss;
  double positive_weight = 1.0;
};

// Deterministic given cfg.seed. `initial` overrides seeded initialization.
// Non-empty `soft_targets` (one per window, in [0, 1]) replace the labels,
// e.g. a teacher model's probabilities.
TrainResult train(const ModelSpec& spec, std::span<const Window> dataset,
                  const TrainConfig& cfg, const Parameters* initial = nullptr,
                  std::span<const double> soft_targets = {});

// Sets each modality's input scale to 1 / RMS over the given windows.
void fit_input_scales(ModelSpec& spec, std::span<const Window> windows);

}  // namespace fogwear::nn
