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

#include "fogwear/compression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fogwear/container.hpp"
#include "fogwear/error.hpp"
#include "fogwear/rng.hpp"

namespace fogwear::compress {

using nlohmann::json;
using nn::Branch;
using nn::Dense;
using nn::DepthwiseConv1D;
using nn::GlobalStats;
using nn::LayerSpec;
using nn::ReLU;

namespace {

// Scales are stored as float32; keep the in-memory model identical to what a
// reload produces.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

int clamp_i8(long v) { return static_cast<int>(std::clamp(v, -128L, 127L)); }

}  // namespace

int QuantParams::quantize(double x) const {
  const double q = std::round(x / scale) + zero_point;
  if (!(q > -128.0)) return -128;
  if (q > 127.0) return 127;
  return static_cast<int>(q);
}

QuantParams symmetric_qparams(double max_abs) {
  if (!(max_abs > 0.0)) return {kScaleFloor, 0};
  return {std::max(f32(max_abs / 127.0), kScaleFloor), 0};
}

QuantParams affine_qparams(double lo, double hi) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (!(hi - lo > 0.0)) return {kScaleFloor, 0};
  const double scale = std::max(f32((hi - lo) / 255.0), kScaleFloor);
  const long zp = -128 - std::lround(lo / scale);
  return {scale, clamp_i8(zp)};
}

// ---------------------------------------------------------------------------
// Pruning.

PruneResult prune_magnitude(const nn::Parameters& params, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
  PruneResult out;
  out.params = params;
  struct Entry {
    double magnitude;
    std::size_t tensor;
    std::size_t index;
  };
  std::vector<Entry> entries;
  std::vector<nn::Tensor*> tensors;
  for (auto& [key, t] : out.params) {
    if (!nn::is_weight_key(key)) continue;
    out.mask[key].assign(t.size(), 1);
    for (std::size_t i = 0; i < t.size(); ++i) {
      entries.push_back({std::abs(t.data[i]), tensors.size(), i});
    }
    tensors.push_back(&t);
  }
  out.total_weights = entries.size();
  const auto n_prune = static_cast<std::size_t>(
      std::llround(sparsity * static_cast<double>(entries.size())));
  if (n_prune == 0) return out;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.magnitude < b.magnitude; });
  std::vector<std::string> keys;
  for (const auto& [key, m] : out.mask) keys.push_back(key);
  for (std::size_t i = 0; i < n_prune; ++i) {
    const Entry& e = entries[i];
    tensors[e.tensor]->data[e.index] = 0.0;
    out.mask[keys[e.tensor]][e.index] = 0;
  }
  out.pruned = n_prune;
  return out;
}

// ---------------------------------------------------------------------------
// Calibration.

ActivationQuant calibrate_activations(const nn::ModelSpec& spec, const nn::Parameters& params,
                                      std::span<const nn::Window> windows) {
  if (windows.empty()) throw ConfigError("calibration needs at least one window");
  std::map<std::string, std::pair<double, double>> ranges;
  for (const nn::Window& w : windows) {
    const nn::ForwardTrace trace = nn::forward_trace(spec, params, w);
    for (const auto& [key, t] : trace.activations) {
      if (key.size() >= 5 && key.compare(key.size() - 5, 5, "/pool") == 0) continue;
      auto [it, fresh] = ranges.try_emplace(key, std::numeric_limits<double>::infinity(),
                                            -std::numeric_limits<double>::infinity());
      for (double v : t.data) {
        it->second.first = std::min(it->second.first, v);
        it->second.second = std::max(it->second.second, v);
      }
    }
  }
  ActivationQuant out;
  for (const auto& [key, r] : ranges) {
    const auto [lo, hi] = r;
    out[key] = lo < 0.0 ? symmetric_qparams(std::max(-lo, std::abs(hi))) : affine_qparams(lo, hi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quantization.

namespace {

// Input activation key of each parametrized layer.
std::map<std::string, std::string> input_keys(const nn::ModelSpec& spec) {
  std::map<std::string, std::string> out;
  for (const Branch& b : spec.branches) {
    std::string prev = b.name + "/input";
    std::size_t j = 0;
    for (const LayerSpec& l : b.layers) {
      if (std::holds_alternative<DepthwiseConv1D>(l)) {
        const std::string key = b.name + "/conv" + std::to_string(j++);
        out[key] = prev;
        prev = key;
      }
    }
  }
  std::string prev = "head/concat";
  std::size_t j = 0;
  for (const LayerSpec& l : spec.head) {
    if (std::holds_alternative<Dense>(l)) {
      const std::string key = "head/dense" + std::to_string(j++);
      out[key] = prev;
      prev = key;
    }
  }
  return out;
}

// The integer path supports branches of the form (Conv [ReLU])+ GlobalStats
// and a head of Concat (Dense [ReLU])+ Sigmoid.
void check_quantizable(const nn::ModelSpec& spec) {
  for (const Branch& b : spec.branches) {
    bool pooled = false;
    for (std::size_t i = 0; i < b.layers.size(); ++i) {
      const LayerSpec& l = b.layers[i];
      if (pooled) throw ConfigError("branch " + b.name + ": layers after pooling are not quantizable");
      if (std::holds_alternative<ReLU>(l) &&
          (i == 0 || !std::holds_alternative<DepthwiseConv1D>(b.layers[i - 1]))) {
        throw ConfigError("branch " + b.name + ": ReLU must directly follow a convolution");
      }
      pooled = std::holds_alternative<GlobalStats>(l);
    }
    if (!pooled) throw ConfigError("branch " + b.name + " must end with GlobalStats to be quantized");
  }
  for (std::size_t i = 1; i < spec.head.size(); ++i) {
    if (std::holds_alternative<ReLU>(spec.head[i]) &&
        !std::holds_alternative<Dense>(spec.head[i - 1])) {
      throw ConfigError("head: ReLU must directly follow a Dense layer");
    }
  }
}

const QuantParams& act(const ActivationQuant& a, const std::string& key) {
  const auto it = a.find(key);
  if (it == a.end()) throw ConfigError("missing activation calibration for " + key);
  return it->second;
}

}  // namespace

QuantizedModel quantize_model(const nn::ModelSpec& spec, const nn::Parameters& params,
                              const Mask* mask, const ActivationQuant& activations) {
  spec.validate();
  nn::check_parameters(spec, params);
  check_quantizable(spec);
  QuantizedModel qm;
  qm.spec = spec;
  const auto inputs = input_keys(spec);
  for (const auto& [layer, in_key] : inputs) {
    const nn::Tensor& w = params.at(layer + "/weight");
    const nn::Tensor& b = params.at(layer + "/bias");
    const std::vector<std::uint8_t>* m = nullptr;
    if (mask != nullptr) {
      const auto it = mask->find(layer + "/weight");
      if (it != mask->end()) m = &it->second;
    }
    double max_abs = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (m == nullptr || (*m)[i]) max_abs = std::max(max_abs, std::abs(w.data[i]));
    }
    QTensor qt;
    qt.shape = w.shape;
    qt.qparams = symmetric_qparams(max_abs);
    qt.values.resize(w.size());
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const bool kept = m == nullptr || (*m)[i];
      const int q = kept ? std::clamp(qt.qparams.quantize(w.data[i]), -127, 127) : 0;
      qt.values[i] = static_cast<std::int8_t>(q);
      nnz += q != 0;
    }
    qm.nonzero[layer + "/weight"] = nnz;
    QBias qb;
    qb.scale = f32(qt.qparams.scale * act(activations, in_key).scale);
    qb.values.reserve(b.size());
    for (double v : b.data) {
      const double q = std::round(v / qb.scale);
      qb.values.push_back(static_cast<std::int32_t>(
          std::clamp(q, static_cast<double>(std::numeric_limits<std::int32_t>::min()),
                     static_cast<double>(std::numeric_limits<std::int32_t>::max()))));
    }
    qm.weights.emplace(layer + "/weight", std::move(qt));
    qm.biases.emplace(layer + "/bias", std::move(qb));
  }
  for (const auto& [key, qp] : activations) {
    qm.activations[key] = {f32(qp.scale), qp.zero_point};
  }
  // Every key the integer path reads must be present.
  for (const Branch& b : spec.branches) act(qm.activations, b.name + "/input");
  act(qm.activations, "head/concat");
  for (const auto& [layer, in_key] : inputs) {
    act(qm.activations, in_key);
    if (layer.rfind("head/", 0) != 0) act(qm.activations, layer);
  }
  return qm;
}

nn::Parameters dequantize_parameters(const QuantizedModel& qm) {
  nn::Parameters p;
  const auto inputs = input_keys(qm.spec);
  for (const auto& [layer, in_key] : inputs) {
    const QTensor& qt = qm.weights.at(layer + "/weight");
    nn::Tensor w(qt.shape);
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = qt.qparams.dequantize(qt.values[i]);
    p.emplace(layer + "/weight", std::move(w));
    const QBias& qb = qm.biases.at(layer + "/bias");
    nn::Tensor b({qb.values.size()});
    for (std::size_t i = 0; i < b.size(); ++i) b.data[i] = qb.scale * qb.values[i];
    p.emplace(layer + "/bias", std::move(b));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Fixed point.

FixedPointMultiplier FixedPointMultiplier::from(double real) {
  FixedPointMultiplier f;
  if (!(real > 0.0)) return f;
  int e = 0;
  const double mant = std::frexp(real, &e);  // [0.5, 1)
  long long m0 = std::llround(mant * 2147483648.0);
  if (m0 == 2147483648LL) {
    m0 /= 2;
    ++e;
  }
  f.m0 = static_cast<std::int32_t>(m0);
  f.exponent = e;
  return f;
}

std::int32_t FixedPointMultiplier::apply(std::int64_t acc) const {
  constexpr std::int64_t kMax = std::numeric_limits<std::int32_t>::max();
  constexpr std::int64_t kMin = std::numeric_limits<std::int32_t>::min();
  if (m0 == 0 || acc == 0) return 0;
  const __int128 prod = static_cast<__int128>(acc) * m0;
  const int shift = 31 - exponent;
  __int128 result;
  if (shift <= 0) {
    if (shift < -62) return acc > 0 ? static_cast<std::int32_t>(kMax) : static_cast<std::int32_t>(kMin);
    result = prod * (static_cast<__int128>(1) << (-shift));
  } else if (shift >= 120) {
    result = 0;
  } else {
    const __int128 half = static_cast<__int128>(1) << (shift - 1);
    result = prod >= 0 ? (prod + half) >> shift : -((-prod + half) >> shift);
  }
  if (result > kMax) return static_cast<std::int32_t>(kMax);
  if (result < kMin) return static_cast<std::int32_t>(kMin);
  return static_cast<std::int32_t>(result);
}

// ---------------------------------------------------------------------------
// Integer inference.

namespace {

struct QAct {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<std::int32_t> q;  // int8-valued
  QuantParams qp;
};

QAct quantize_input(const QuantizedModel& qm, const Branch& b, const nn::Window& w) {
  const nn::InputGeometry& g = qm.spec.inputs.at(b.modality);
  const signal::ModalityBlock* blk = w.block(b.modality);
  if (blk == nullptr || blk->channels.size() != g.channels || blk->samples != g.samples) {
    throw ConfigError(std::string(signal::to_string(b.modality)) +
                      " window geometry does not match the quantized model");
  }
  QAct a;
  a.channels = g.channels;
  a.length = g.samples;
  a.qp = qm.activations.at(b.name + "/input");
  a.q.resize(blk->data.size());
  for (std::size_t i = 0; i < blk->data.size(); ++i) a.q[i] = a.qp.quantize(blk->data[i] * g.scale);
  return a;
}

QAct conv_int(const QAct& x, const DepthwiseConv1D& c, const QTensor& w, const QBias& b,
              const QuantParams& out_qp, bool relu) {
  QAct y;
  y.channels = c.out_channels();
  y.length = c.out_len(x.length);
  y.qp = out_qp;
  y.q.resize(y.channels * y.length);
  const FixedPointMultiplier mult =
      FixedPointMultiplier::from(x.qp.scale * w.qparams.scale / out_qp.scale);
  const long lo = relu ? std::max(out_qp.zero_point, -128) : -128;
  const long pad_l = static_cast<long>(c.pad_left());
  const std::size_t k_len = c.kernel_len;
  std::vector<std::int32_t> centered(x.q.size());
  for (std::size_t i = 0; i < x.q.size(); ++i) centered[i] = x.q[i] - x.qp.zero_point;
  for (std::size_t co = 0; co < y.channels; ++co) {
    const std::int32_t* xr = centered.data() + (co / c.multiplier) * x.length;
    const std::int8_t* wr = w.values.data() + co * k_len;
    for (std::size_t t = 0; t < y.length; ++t) {
      const long base = static_cast<long>(t * c.stride) - pad_l;
      const long k0 = std::max(0L, -base);
      const long k1 = std::min(static_cast<long>(k_len), static_cast<long>(x.length) - base);
      std::int32_t acc = b.values[co];
      for (long k = k0; k < k1; ++k) acc += xr[base + k] * static_cast<std::int32_t>(wr[k]);
      const long q = static_cast<long>(out_qp.zero_point) + mult.apply(acc);
      y.q[co * y.length + t] = static_cast<std::int32_t>(std::clamp(q, lo, 127L));
    }
  }
  return y;
}

// Mean over time, requantized straight onto the concat scale.
std::vector<std::int32_t> pool_int(const QAct& x, const QuantParams& out_qp) {
  const FixedPointMultiplier mult = FixedPointMultiplier::from(
      x.qp.scale / (static_cast<double>(x.length) * out_qp.scale));
  std::vector<std::int32_t> out(x.channels);
  for (std::size_t c = 0; c < x.channels; ++c) {
    std::int64_t sum = 0;
    for (std::size_t t = 0; t < x.length; ++t) sum += x.q[c * x.length + t] - x.qp.zero_point;
    out[c] = clamp_i8(static_cast<long>(out_qp.zero_point) + mult.apply(sum));
  }
  return out;
}

}  // namespace

double quantized_logit(const QuantizedModel& qm, const nn::Window& w) {
  const QuantParams& concat_qp = qm.activations.at("head/concat");
  std::vector<std::int32_t> features;
  for (const Branch& b : qm.spec.branches) {
    QAct x = quantize_input(qm, b, w);
    std::size_t j = 0;
    for (std::size_t i = 0; i < b.layers.size(); ++i) {
      const LayerSpec& l = b.layers[i];
      if (const auto* c = std::get_if<DepthwiseConv1D>(&l)) {
        const std::string key = b.name + "/conv" + std::to_string(j++);
        const bool relu = i + 1 < b.layers.size() && std::holds_alternative<ReLU>(b.layers[i + 1]);
        x = conv_int(x, *c, qm.weights.at(key + "/weight"), qm.biases.at(key + "/bias"),
                     qm.activations.at(key), relu);
      } else if (std::holds_alternative<GlobalStats>(l)) {
        const auto pooled = pool_int(x, concat_qp);
        features.insert(features.end(), pooled.begin(), pooled.end());
      }
    }
  }

  QuantParams in_qp = concat_qp;
  std::vector<std::int32_t> x = std::move(features);
  std::size_t j = 0;
  for (std::size_t i = 1; i < qm.spec.head.size(); ++i) {
    const auto* d = std::get_if<Dense>(&qm.spec.head[i]);
    if (d == nullptr) continue;
    const std::string key = "head/dense" + std::to_string(j++);
    const QTensor& wt = qm.weights.at(key + "/weight");
    const QBias& bt = qm.biases.at(key + "/bias");
    const bool last = i + 2 == qm.spec.head.size();
    const bool relu = std::holds_alternative<ReLU>(qm.spec.head[i + 1]);
    std::vector<std::int32_t> acc(d->out_dim);
    for (std::size_t a = 0; a < d->out_dim; ++a) {
      const std::int8_t* wr = wt.values.data() + a * d->in_dim;
      std::int32_t s = bt.values[a];
      for (std::size_t k = 0; k < d->in_dim; ++k) {
        s += (x[k] - in_qp.zero_point) * static_cast<std::int32_t>(wr[k]);
      }
      acc[a] = s;
    }
    if (last) {
      return static_cast<double>(acc[0]) * in_qp.scale * wt.qparams.scale;
    }
    const QuantParams& out_qp = qm.activations.at(key);
    const FixedPointMultiplier mult =
        FixedPointMultiplier::from(in_qp.scale * wt.qparams.scale / out_qp.scale);
    const long lo = relu ? std::max(out_qp.zero_point, -128) : -128;
    for (std::size_t a = 0; a < d->out_dim; ++a) {
      acc[a] = static_cast<std::int32_t>(
          std::clamp(static_cast<long>(out_qp.zero_point) + mult.apply(acc[a]), lo, 127L));
    }
    x = std::move(acc);
    in_qp = out_qp;
  }
  throw ConfigError("quantized head has no final Dense layer");
}

double quantized_forward(const QuantizedModel& qm, const nn::Window& w) {
  return nn::sigmoid(std::clamp(quantized_logit(qm, w), -nn::kLogitClamp, nn::kLogitClamp));
}

// ---------------------------------------------------------------------------
// Serialization.

std::vector<std::uint8_t> encode_quantized(const QuantizedModel& qm, bool sparse_encoding) {
  using container::ByteWriter;
  using container::DType;
  ByteWriter w;
  const std::string meta = nn::to_json(qm.spec).dump();
  container::write_header(w, container::Kind::kQuantized, meta,
                          static_cast<std::uint32_t>(qm.weights.size() + qm.biases.size()));
  auto write_shape = [&](const std::vector<std::size_t>& shape) {
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
  };
  // Interleave weight and bias records in key order.
  std::map<std::string, int> keys;
  for (const auto& [k, v] : qm.weights) keys[k] = 0;
  for (const auto& [k, v] : qm.biases) keys[k] = 1;
  for (const auto& [key, kind] : keys) {
    w.str16(key);
    if (kind == 0) {
      const QTensor& t = qm.weights.at(key);
      const std::size_t zeros =
          static_cast<std::size_t>(std::count(t.values.begin(), t.values.end(), 0));
      const bool sparse = container::use_sparse(zeros, t.values.size(), sparse_encoding);
      w.u8(static_cast<std::uint8_t>(sparse ? DType::kI8Sparse : DType::kI8));
      write_shape(t.shape);
      w.f32(static_cast<float>(t.qparams.scale));
      w.i8(static_cast<std::int8_t>(t.qparams.zero_point));
      if (!sparse) {
        for (std::int8_t v : t.values) w.i8(v);
        continue;
      }
      w.u32(static_cast<std::uint32_t>(t.values.size() - zeros));
      std::size_t prev = 0;
      bool first = true;
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        if (t.values[i] == 0) continue;
        w.uleb128(first ? i : i - prev);
        w.i8(t.values[i]);
        prev = i;
        first = false;
      }
    } else {
      const QBias& b = qm.biases.at(key);
      w.u8(static_cast<std::uint8_t>(DType::kI32));
      write_shape({b.values.size()});
      w.f32(static_cast<float>(b.scale));
      for (std::int32_t v : b.values) w.i32(v);
    }
  }
  w.u32(static_cast<std::uint32_t>(qm.activations.size()));
  for (const auto& [key, qp] : qm.activations) {
    w.str16(key);
    w.f32(static_cast<float>(qp.scale));
    w.i8(static_cast<std::int8_t>(qp.zero_point));
  }
  return w.take();
}

QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes) {
  using container::DType;
  container::ByteReader r(bytes);
  const container::Header h = container::read_header(r);
  if (h.kind != container::Kind::kQuantized) {
    throw DataError("container holds float parameters, not a quantized model");
  }
  QuantizedModel qm;
  try {
    qm.spec = nn::model_spec_from_json(json::parse(h.meta));
  } catch (const json::exception& e) {
    throw DataError(std::string("container metadata: ") + e.what());
  }
  for (std::uint32_t i = 0; i < h.tensor_count; ++i) {
    container::RawTensor t = container::read_tensor(r);
    if (t.dtype == DType::kI8 || t.dtype == DType::kI8Sparse) {
      QTensor q;
      q.shape = t.shape;
      q.values = std::move(t.q8);
      q.qparams = {static_cast<double>(t.scale), t.zero_point};
      qm.nonzero[t.key] =
          q.values.size() - static_cast<std::size_t>(std::count(q.values.begin(), q.values.end(), 0));
      qm.weights.emplace(t.key, std::move(q));
    } else if (t.dtype == DType::kI32) {
      qm.biases.emplace(t.key, QBias{std::move(t.q32), static_cast<double>(t.scale)});
    } else {
      throw DataError("tensor " + t.key + " has a float dtype in a quantized container");
    }
  }
  const std::uint32_t n_act = r.u32();
  for (std::uint32_t i = 0; i < n_act; ++i) {
    std::string key = r.str16();
    const double scale = r.f32();
    const int zp = r.i8();
    qm.activations[std::move(key)] = {scale, zp};
  }
  if (r.remaining() != 0) throw DataError("trailing bytes after quantized container");
  const auto shapes = nn::parameter_shapes(qm.spec);
  for (const auto& [key, shape] : shapes) {
    if (nn::is_weight_key(key)) {
      const auto it = qm.weights.find(key);
      if (it == qm.weights.end() || it->second.shape != shape) {
        throw DataError("quantized weight " + key + " missing or misshapen");
      }
    } else {
      const auto it = qm.biases.find(key);
      if (it == qm.biases.end() || it->second.values.size() != shape.at(0)) {
        throw DataError("quantized bias " + key + " missing or misshapen");
      }
    }
  }
  return qm;
}

void save_quantized(const std::filesystem::path& file, const QuantizedModel& qm,
                    bool sparse_encoding) {
  container::write_file_bytes(file, encode_quantized(qm, sparse_encoding));
}

QuantizedModel load_quantized(const std::filesystem::path& file) {
  try {
    return decode_quantized(container::read_file_bytes(file));
  } catch (const DataError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

std::size_t model_size_bytes(const nn::Parameters& params, const nn::ModelSpec* spec,
                             bool sparse_encoding) {
  return container::encode_parameters(spec, params, sparse_encoding).size();
}

std::size_t model_size_bytes(const QuantizedModel& qm, bool sparse_encoding) {
  return encode_quantized(qm, sparse_encoding).size();
}

// ---------------------------------------------------------------------------

void CompressionConfig::validate() const {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
  if (calibration_windows < 1) throw ConfigError("calibration needs at least one window");
  if (!(finetune_lr > 0.0)) throw ConfigError("finetune_lr must be positive");
}

json to_json(const CompressionConfig& c) {
  return {{"sparsity", c.sparsity},
          {"quantize", c.quantize},
          {"sparse_encoding", c.sparse_encoding},
          {"calibration_windows", c.calibration_windows},
          {"finetune_epochs", c.finetune_epochs},
          {"finetune_lr", c.finetune_lr}};
}

CompressionConfig compression_config_from_json(const json& j) {
  CompressionConfig c;
  c.sparsity = j.value("sparsity", c.sparsity);
  c.quantize = j.value("quantize", c.quantize);
  c.sparse_encoding = j.value("sparse_encoding", c.sparse_encoding);
  c.calibration_windows = j.value("calibration_windows", c.calibration_windows);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
  c.finetune_lr = j.value("finetune_lr", c.finetune_lr);
  c.validate();
  return c;
}

Compressed compress_model(const nn::ModelSpec& spec, const nn::Parameters& params,
                          std::span<const nn::Window> calibration, const CompressionConfig& cfg,
                          const nn::TrainConfig& train_cfg) {
  cfg.validate();
  Compressed out;
  PruneResult pr = prune_magnitude(params, cfg.sparsity);
  if (pr.pruned > 0 && cfg.finetune_epochs > 0) {
    if (calibration.empty()) throw ConfigError("fine-tuning after pruning needs training windows");
    // Distillation: the pruned model is fitted to the original model's
    // probabilities, recovering its decision function rather than re-learning
    // the labels.
    std::vector<double> teacher;
    teacher.reserve(calibration.size());
    for (const nn::Window& w : calibration) teacher.push_back(nn::forward(spec, params, w));
    nn::TrainConfig ft = train_cfg;
    ft.epochs = cfg.finetune_epochs;
    ft.lr = cfg.finetune_lr;
    ft.seed = Rng(train_cfg.seed).fork(7).next();
    ft.masks = pr.mask;
    pr.params = nn::train(spec, calibration, ft, &pr.params, teacher).params;
  }
  out.pruned = std::move(pr.params);
  out.mask = std::move(pr.mask);
  out.sizes.total_weights = pr.total_weights;
  out.sizes.nonzero_weights = pr.total_weights - pr.pruned;
  out.sizes.float_bytes = model_size_bytes(params, &spec, false);
  out.sizes.pruned_sparse_float_bytes = model_size_bytes(out.pruned, &spec, true);
  if (!cfg.quantize) {
    out.sizes.compressed_bytes = model_size_bytes(out.pruned, &spec, cfg.use_sparse_encoding());
    return out;
  }
  if (calibration.empty()) throw ConfigError("missing calibration data");
  // Evenly spaced subset keeps calibration cost bounded and deterministic.
  std::vector<nn::Window> subset;
  const std::size_t n = std::min(cfg.calibration_windows, calibration.size());
  subset.reserve(n);
  for (std::size_t i = 0; i < n; ++i) subset.push_back(calibration[i * calibration.size() / n]);
  const ActivationQuant act = calibrate_activations(spec, out.pruned, subset);
  out.quantized = quantize_model(spec, out.pruned, &out.mask, act);
  out.sizes.int8_dense_bytes = model_size_bytes(*out.quantized, false);
  out.sizes.int8_sparse_bytes = model_size_bytes(*out.quantized, true);
  out.sizes.compressed_bytes = cfg.sparse_encoding ? out.sizes.int8_sparse_bytes
                                                   : out.sizes.int8_dense_bytes;
  return out;
}

}  // namespace fogwear::compress
