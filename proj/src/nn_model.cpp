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
#include <set>

#include "fogwear/error.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/rng.hpp"

namespace fogwear::nn {

using nlohmann::json;

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(numel(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw ConfigError("tensor shape " + shape_string(shape) + " does not match " +
                      std::to_string(data.size()) + " values");
  }
}

std::size_t Tensor::numel(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t DepthwiseConv1D::out_len(std::size_t in_len) const {
  const std::size_t padded = in_len + pad_total();
  if (padded < kernel_len || stride == 0) return 0;
  return (padded - kernel_len) / stride + 1;
}

// ---------------------------------------------------------------------------

namespace {

struct BranchShape {
  std::size_t channels;
  std::size_t length;  // 0 once pooled
};

BranchShape chain_branch(const Branch& b, const InputGeometry& in) {
  BranchShape s{in.channels, in.samples};
  if (b.layers.empty()) throw ConfigError("branch " + b.name + " has no layers");
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const LayerSpec& l = b.layers[i];
    const std::string where = "branch " + b.name + " layer " + std::to_string(i);
    if (const auto* c = std::get_if<DepthwiseConv1D>(&l)) {
      if (s.length == 0) throw ConfigError(where + ": convolution after pooling");
      if (c->channels != s.channels) {
        throw ConfigError(where + ": expects " + std::to_string(c->channels) +
                          " channels, gets " + std::to_string(s.channels));
      }
      if (c->kernel_len == 0 || c->stride == 0 || c->multiplier == 0) {
        throw ConfigError(where + ": kernel, stride and multiplier must be positive");
      }
      const std::size_t out = c->out_len(s.length);
      if (out == 0) throw ConfigError(where + ": kernel longer than input");
      s = {c->out_channels(), out};
    } else if (std::holds_alternative<GlobalStats>(l)) {
      if (s.length == 0) throw ConfigError(where + ": pooling twice");
      s.length = 0;
    } else if (!std::holds_alternative<ReLU>(l)) {
      throw ConfigError(where + ": layer type not allowed in a branch");
    }
  }
  if (!std::holds_alternative<DepthwiseConv1D>(b.layers.front())) {
    throw ConfigError("branch " + b.name + " must start with a convolution");
  }
  return s;
}

std::size_t branch_out_dim(const BranchShape& s) {
  return s.length == 0 ? s.channels : s.channels * s.length;
}

}  // namespace

std::vector<Modality> ModelSpec::modalities() const {
  std::vector<Modality> out;
  for (const auto& [m, g] : inputs) out.push_back(m);
  return out;
}

std::size_t ModelSpec::feature_dim() const {
  std::size_t total = 0;
  for (const Branch& b : branches) {
    const auto it = inputs.find(b.modality);
    if (it == inputs.end()) throw ConfigError("branch " + b.name + " has no input geometry");
    total += branch_out_dim(chain_branch(b, it->second));
  }
  return total;
}

void ModelSpec::validate() const {
  if (inputs.empty()) throw ConfigError("model has no inputs");
  std::set<std::string> names;
  std::map<Modality, std::vector<const Branch*>> by_modality;
  for (const Branch& b : branches) {
    if (!names.insert(b.name).second) throw ConfigError("duplicate branch name " + b.name);
    by_modality[b.modality].push_back(&b);
  }
  for (const auto& [m, g] : inputs) {
    if (g.channels == 0 || g.samples == 0) {
      throw ConfigError(std::string(signal::to_string(m)) + " input geometry is empty");
    }
    if (!(g.scale > 0.0) || !std::isfinite(g.scale)) {
      throw ConfigError(std::string(signal::to_string(m)) + " input scale must be positive");
    }
    const auto& bs = by_modality[m];
    const std::size_t expected = m == Modality::kEEG ? 2 : 1;
    if (bs.size() != expected) {
      throw ConfigError(std::string(signal::to_string(m)) + " needs " +
                        std::to_string(expected) + " branch(es), has " +
                        std::to_string(bs.size()));
    }
    if (m == Modality::kEEG) {
      const auto& k0 = std::get<DepthwiseConv1D>(bs[0]->layers.at(0));
      const auto& k1 = std::get<DepthwiseConv1D>(bs[1]->layers.at(0));
      if (k0.kernel_len == k1.kernel_len) {
        throw ConfigError("the two EEG branches must use different kernel lengths");
      }
    }
  }
  for (const auto& [m, bs] : by_modality) {
    if (!inputs.count(m)) {
      throw ConfigError("branch for " + std::string(signal::to_string(m)) + " without input");
    }
  }
  const std::size_t features = feature_dim();

  if (head.size() < 2 || !std::holds_alternative<Concat>(head.front())) {
    throw ConfigError("head must start with Concat");
  }
  if (!std::holds_alternative<Sigmoid>(head.back())) {
    throw ConfigError("head must end with Sigmoid");
  }
  std::size_t dim = features;
  std::size_t dense_count = 0;
  for (std::size_t i = 1; i + 1 < head.size(); ++i) {
    const LayerSpec& l = head[i];
    if (const auto* d = std::get_if<Dense>(&l)) {
      if (d->in_dim != dim) {
        throw ConfigError("head dense" + std::to_string(dense_count) + " expects " +
                          std::to_string(d->in_dim) + " inputs, gets " + std::to_string(dim));
      }
      if (d->out_dim == 0) throw ConfigError("dense layer with zero outputs");
      dim = d->out_dim;
      ++dense_count;
    } else if (!std::holds_alternative<ReLU>(l)) {
      throw ConfigError("head layer " + std::to_string(i) + ": type not allowed in head");
    }
  }
  if (dense_count != 3) throw ConfigError("head must contain exactly three Dense layers");
  if (!std::holds_alternative<Dense>(head[head.size() - 2])) {
    throw ConfigError("the last Dense layer must feed the Sigmoid directly");
  }
  if (dim != 1) throw ConfigError("final Dense output dimension must be 1");
}

ModelSpec make_model_spec(const std::map<Modality, InputGeometry>& inputs,
                          const ArchitectureConfig& arch) {
  ModelSpec spec;
  spec.inputs = inputs;
  auto make_branch = [&](std::string name, Modality m, std::size_t kernel) {
    Branch b;
    b.name = std::move(name);
    b.modality = m;
    std::size_t channels = inputs.at(m).channels;
    for (std::size_t j = 0; j < arch.conv_layers; ++j) {
      DepthwiseConv1D c;
      c.kernel_len = kernel;
      c.stride = arch.stride;
      c.channels = channels;
      c.multiplier = j == 0 ? arch.multiplier : 1;
      b.layers.emplace_back(c);
      b.layers.emplace_back(ReLU{});
      channels = c.out_channels();
    }
    b.layers.emplace_back(GlobalStats{});
    return b;
  };
  if (inputs.count(Modality::kEEG)) {
    spec.branches.push_back(make_branch("eeg0", Modality::kEEG, arch.eeg_kernel_long));
    spec.branches.push_back(make_branch("eeg1", Modality::kEEG, arch.eeg_kernel_short));
  }
  if (inputs.count(Modality::kEMG)) {
    spec.branches.push_back(make_branch("emg", Modality::kEMG, arch.emg_kernel));
  }
  if (inputs.count(Modality::kACC)) {
    spec.branches.push_back(make_branch("acc", Modality::kACC, arch.acc_kernel));
  }
  const std::size_t features = spec.feature_dim();
  spec.head = {Concat{},
               Dense{features, arch.head_hidden1},
               ReLU{},
               Dense{arch.head_hidden1, arch.head_hidden2},
               ReLU{},
               Dense{arch.head_hidden2, 1},
               Sigmoid{}};
  spec.validate();
  return spec;
}

ModelSpec restrict_modalities(const ModelSpec& spec, std::span<const Modality> keep) {
  if (keep.empty()) throw ConfigError("modality subset must not be empty");
  ModelSpec out;
  for (Modality m : keep) {
    const auto it = spec.inputs.find(m);
    if (it == spec.inputs.end()) {
      throw ConfigError("model has no " + std::string(signal::to_string(m)) + " input");
    }
    out.inputs.emplace(m, it->second);
  }
  for (const Branch& b : spec.branches) {
    if (out.inputs.count(b.modality)) out.branches.push_back(b);
  }
  out.head = spec.head;
  for (LayerSpec& l : out.head) {
    if (auto* d = std::get_if<Dense>(&l)) {
      d->in_dim = out.feature_dim();
      break;
    }
  }
  out.validate();
  return out;
}

std::map<Modality, InputGeometry> geometry_of(const Window& w) {
  std::map<Modality, InputGeometry> g;
  for (const auto& b : w.blocks) g[b.modality] = {b.channels.size(), b.samples, 1.0};
  return g;
}

// ---------------------------------------------------------------------------
// JSON.

namespace {

json layer_to_json(const LayerSpec& l) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DepthwiseConv1D>) {
          return {{"type", "depthwise_conv1d"}, {"kernel_len", v.kernel_len},
                  {"stride", v.stride},         {"channels", v.channels},
                  {"multiplier", v.multiplier},
                  {"padding", v.padding == Padding::kSame ? "same" : "valid"}};
        } else if constexpr (std::is_same_v<T, ReLU>) {
          return {{"type", "relu"}};
        } else if constexpr (std::is_same_v<T, Concat>) {
          return {{"type", "concat"}, {"axis", v.axis}};
        } else if constexpr (std::is_same_v<T, Dense>) {
          return {{"type", "dense"}, {"in_dim", v.in_dim}, {"out_dim", v.out_dim}};
        } else if constexpr (std::is_same_v<T, GlobalStats>) {
          return {{"type", "global_stats"}};
        } else {
          return {{"type", "sigmoid"}};
        }
      },
      l);
}

LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "depthwise_conv1d") {
    DepthwiseConv1D c;
    c.kernel_len = j.at("kernel_len").get<std::size_t>();
    c.stride = j.value("stride", std::size_t{1});
    c.channels = j.at("channels").get<std::size_t>();
    c.multiplier = j.value("multiplier", std::size_t{1});
    const std::string pad = j.value("padding", std::string("valid"));
    if (pad != "valid" && pad != "same") throw ConfigError("unknown padding '" + pad + "'");
    c.padding = pad == "same" ? Padding::kSame : Padding::kValid;
    return c;
  }
  if (type == "relu") return ReLU{};
  if (type == "concat") return Concat{j.value("axis", std::size_t{0})};
  if (type == "dense") return Dense{j.at("in_dim").get<std::size_t>(), j.at("out_dim").get<std::size_t>()};
  if (type == "global_stats") return GlobalStats{};
  if (type == "sigmoid") return Sigmoid{};
  throw ConfigError("unknown layer type '" + type + "'");
}

}  // namespace

json to_json(const ModelSpec& spec) {
  json inputs = json::object();
  for (const auto& [m, g] : spec.inputs) {
    inputs[std::string(signal::to_string(m))] = {
        {"channels", g.channels}, {"samples", g.samples}, {"scale", g.scale}};
  }
  json branches = json::array();
  for (const Branch& b : spec.branches) {
    json layers = json::array();
    for (const LayerSpec& l : b.layers) layers.push_back(layer_to_json(l));
    branches.push_back({{"name", b.name},
                        {"modality", std::string(signal::to_string(b.modality))},
                        {"layers", std::move(layers)}});
  }
  json head = json::array();
  for (const LayerSpec& l : spec.head) head.push_back(layer_to_json(l));
  return {{"inputs", std::move(inputs)}, {"branches", std::move(branches)}, {"head", std::move(head)}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    for (const auto& [name, g] : j.at("inputs").items()) {
      spec.inputs[signal::parse_modality(name)] = {g.at("channels").get<std::size_t>(),
                                                   g.at("samples").get<std::size_t>(),
                                                   g.value("scale", 1.0)};
    }
    for (const json& b : j.at("branches")) {
      Branch br;
      br.name = b.at("name").get<std::string>();
      br.modality = signal::parse_modality(b.at("modality").get<std::string>());
      for (const json& l : b.at("layers")) br.layers.push_back(layer_from_json(l));
      spec.branches.push_back(std::move(br));
    }
    for (const json& l : j.at("head")) spec.head.push_back(layer_from_json(l));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

json to_json(const ArchitectureConfig& a) {
  return {{"eeg_kernel_long", a.eeg_kernel_long}, {"eeg_kernel_short", a.eeg_kernel_short},
          {"emg_kernel", a.emg_kernel},           {"acc_kernel", a.acc_kernel},
          {"conv_layers", a.conv_layers},         {"stride", a.stride},
          {"multiplier", a.multiplier},           {"head_hidden1", a.head_hidden1},
          {"head_hidden2", a.head_hidden2}};
}

ArchitectureConfig architecture_from_json(const json& j) {
  ArchitectureConfig a;
  a.eeg_kernel_long = j.value("eeg_kernel_long", a.eeg_kernel_long);
  a.eeg_kernel_short = j.value("eeg_kernel_short", a.eeg_kernel_short);
  a.emg_kernel = j.value("emg_kernel", a.emg_kernel);
  a.acc_kernel = j.value("acc_kernel", a.acc_kernel);
  a.conv_layers = j.value("conv_layers", a.conv_layers);
  a.stride = j.value("stride", a.stride);
  a.multiplier = j.value("multiplier", a.multiplier);
  a.head_hidden1 = j.value("head_hidden1", a.head_hidden1);
  a.head_hidden2 = j.value("head_hidden2", a.head_hidden2);
  return a;
}

// ---------------------------------------------------------------------------
// Parameters.

std::map<std::string, std::vector<std::size_t>> parameter_shapes(const ModelSpec& spec) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (const Branch& b : spec.branches) {
    std::size_t j = 0;
    for (const LayerSpec& l : b.layers) {
      if (const auto* c = std::get_if<DepthwiseConv1D>(&l)) {
        const std::string key = b.name + "/conv" + std::to_string(j++);
        out[key + "/weight"] = {c->out_channels(), c->kernel_len};
        out[key + "/bias"] = {c->out_channels()};
      }
    }
  }
  std::size_t j = 0;
  for (const LayerSpec& l : spec.head) {
    if (const auto* d = std::get_if<Dense>(&l)) {
      const std::string key = "head/dense" + std::to_string(j++);
      out[key + "/weight"] = {d->out_dim, d->in_dim};
      out[key + "/bias"] = {d->out_dim};
    }
  }
  return out;
}

std::size_t parameter_count(const Parameters& params) {
  std::size_t n = 0;
  for (const auto& [k, t] : params) n += t.size();
  return n;
}

bool is_weight_key(const std::string& key) {
  return key.size() >= 7 && key.compare(key.size() - 7, 7, "/weight") == 0;
}

void check_parameters(const ModelSpec& spec, const Parameters& params) {
  const auto shapes = parameter_shapes(spec);
  if (shapes.size() != params.size()) {
    throw ConfigError("parameter set has " + std::to_string(params.size()) +
                      " tensors, model needs " + std::to_string(shapes.size()));
  }
  for (const auto& [key, shape] : shapes) {
    const auto it = params.find(key);
    if (it == params.end()) throw ConfigError("missing parameter " + key);
    if (it->second.shape != shape || it->second.data.size() != Tensor::numel(shape)) {
      throw ConfigError("parameter " + key + " has shape " + shape_string(it->second.shape) +
                        ", expected " + shape_string(shape));
    }
  }
}

Parameters zero_parameters(const ModelSpec& spec) {
  Parameters p;
  for (const auto& [key, shape] : parameter_shapes(spec)) p.emplace(key, Tensor(shape));
  return p;
}

Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Parameters p = zero_parameters(spec);
  Rng root(seed);
  std::uint64_t stream = 0;
  for (auto& [key, t] : p) {
    ++stream;
    if (!is_weight_key(key)) continue;
    const double fan_in = static_cast<double>(t.shape.at(1));
    const double bound = std::sqrt(2.0 / fan_in);
    Rng rng = root.fork(stream);
    for (double& w : t.data) w = rng.uniform(-bound, bound);
  }
  return p;
}

}  // namespace fogwear::nn
