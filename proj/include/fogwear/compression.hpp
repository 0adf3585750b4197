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

// Magnitude pruning, post-training int8 quantization, the integer inference
// path and size accounting on serialized bytes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogwear/nn.hpp"

namespace fogwear::compress {

inline constexpr double kScaleFloor = 1e-8;

// dequant(q) = scale * (q - zero_point).
struct QuantParams {
  double scale = 1.0;
  int zero_point = 0;

  double dequantize(int q) const { return scale * static_cast<double>(q - zero_point); }
  // Round half away from zero, clamped to [-128, 127].
  int quantize(double x) const;
  bool operator==(const QuantParams&) const = default;
};

// scale = max_abs / 127, zero_point 0. Degenerate ranges get the scale floor.
QuantParams symmetric_qparams(double max_abs);
// Affine over [min(lo, 0), max(hi, 0)] onto [-128, 127].
QuantParams affine_qparams(double lo, double hi);

// 1 = kept, 0 = pruned, per weight tensor.
using Mask = std::map<std::string, std::vector<std::uint8_t>>;

struct PruneResult {
  nn::Parameters params;
  Mask mask;
  std::size_t total_weights = 0;
  std::size_t pruned = 0;
};

// Zeroes the globally smallest-|w| fraction of weights. Biases are exempt.
PruneResult prune_magnitude(const nn::Parameters& params, double sparsity);

// Keyed like nn::ForwardTrace activations ("<branch>/input", "<branch>/conv<j>",
// "head/concat", "head/dense<j>").
using ActivationQuant = std::map<std::string, QuantParams>;

// Min/max over the calibration windows; symmetric for tensors that go
// negative, affine otherwise.
ActivationQuant calibrate_activations(const nn::ModelSpec& spec, const nn::Parameters& params,
                                      std::span<const nn::Window> windows);

struct QTensor {
  std::vector<std::size_t> shape;
  std::vector<std::int8_t> values;
  QuantParams qparams;
};

struct QBias {
  std::vector<std::int32_t> values;
  double scale = 1.0;  // weight scale x input scale
};

struct QuantizedModel {
  nn::ModelSpec spec;
  std::map<std::string, QTensor> weights;
  std::map<std::string, QBias> biases;
  std::map<std::string, std::size_t> nonzero;
  ActivationQuant activations;
};

// Symmetric per-tensor weights, int32 biases at scale_w * scale_in. A mask, if
// given, is applied before quantization so pruned entries stay exactly 0.
QuantizedModel quantize_model(const nn::ModelSpec& spec, const nn::Parameters& params,
                              const Mask* mask, const ActivationQuant& activations);

// Float view of the int8 weights and int32 biases.
nn::Parameters dequantize_parameters(const QuantizedModel& qm);

// Q0.31 fixed-point multiplier: value = m0 * 2^(exponent - 31).
struct FixedPointMultiplier {
  std::int32_t m0 = 0;
  int exponent = 0;

  static FixedPointMultiplier from(double real);
  // round_half_away(acc * value), saturated to int32.
  std::int32_t apply(std::int64_t acc) const;
};

// Integer path: int8 x int8 -> int32 accumulation, fixed-point requantization
// per layer; the only floating-point steps are input quantization and the
// final sigmoid.
double quantized_logit(const QuantizedModel& qm, const nn::Window& w);
double quantized_forward(const QuantizedModel& qm, const nn::Window& w);

// Serialization (see container.hpp for the layout).
std::vector<std::uint8_t> encode_quantized(const QuantizedModel& qm, bool sparse_encoding = true);
QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes);
void save_quantized(const std::filesystem::path& file, const QuantizedModel& qm,
                    bool sparse_encoding = true);
QuantizedModel load_quantized(const std::filesystem::path& file);

// Exact serialized container sizes.
std::size_t model_size_bytes(const nn::Parameters& params, const nn::ModelSpec* spec,
                             bool sparse_encoding);
std::size_t model_size_bytes(const QuantizedModel& qm, bool sparse_encoding);

struct CompressionConfig {
  double sparsity = 0.5;
  bool quantize = true;
  bool sparse_encoding = true;
  std::size_t calibration_windows = 256;
  // Re-training of the pruned model toward the original model's outputs,
  // with the pruning mask held fixed; 0 disables it.
  std::size_t finetune_epochs = 10;
  double finetune_lr = 1e-3;

  void validate() const;
  // Neither pruning nor quantization: the model is passed through unchanged
  // and written dense.
  bool identity() const { return sparsity == 0.0 && !quantize; }
  bool use_sparse_encoding() const { return sparse_encoding && !identity(); }
};

nlohmann::json to_json(const CompressionConfig& c);
CompressionConfig compression_config_from_json(const nlohmann::json& j);

struct SizeReport {
  std::size_t float_bytes = 0;
  std::size_t pruned_sparse_float_bytes = 0;
  std::size_t int8_dense_bytes = 0;
  std::size_t int8_sparse_bytes = 0;
  std::size_t compressed_bytes = 0;  // what the configured pipeline writes
  std::size_t total_weights = 0;
  std::size_t nonzero_weights = 0;

  double ratio() const {
    return float_bytes == 0 ? 0.0 : static_cast<double>(compressed_bytes) / static_cast<double>(float_bytes);
  }
};

struct Compressed {
  nn::Parameters pruned;
  Mask mask;
  std::optional<QuantizedModel> quantized;
  SizeReport sizes;
};

// prune -> fine-tune (masked, distilled) -> calibrate -> quantize. `training`
// supplies both the fine-tuning and the calibration windows; `train_cfg` the
// optimizer settings and seed for fine-tuning.
Compressed compress_model(const nn::ModelSpec& spec, const nn::Parameters& params,
                          std::span<const nn::Window> training, const CompressionConfig& cfg,
                          const nn::TrainConfig& train_cfg = {});

}  // namespace fogwear::compress
