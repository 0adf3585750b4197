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

#include "fogwear/error.hpp"
#include "fogwear/nn.hpp"

namespace fogwear::nn {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor depthwise_conv1d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                                std::size_t stride, Padding padding) {
  if (x.shape.size() != 2 || kernel.shape.size() != 2 || bias.shape.size() != 1) {
    throw ConfigError("depthwise conv expects x[C,T], kernel[C*m,K], bias[C*m]");
  }
  const std::size_t c_in = x.shape[0];
  const std::size_t t_in = x.shape[1];
  const std::size_t c_out = kernel.shape[0];
  const std::size_t k_len = kernel.shape[1];
  if (c_in == 0 || c_out % c_in != 0 || bias.shape[0] != c_out || stride == 0) {
    throw ConfigError("depthwise conv shape mismatch: x" + shape_string(x.shape) + " kernel" +
                      shape_string(kernel.shape) + " bias" + shape_string(bias.shape));
  }
  DepthwiseConv1D geom{k_len, stride, c_in, c_out / c_in, padding};
  const std::size_t t_out = geom.out_len(t_in);
  if (t_out == 0) throw ConfigError("depthwise conv kernel longer than input");
  const std::size_t mult = c_out / c_in;
  const long pad_l = static_cast<long>(geom.pad_left());
  Tensor out({c_out, t_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    const double* xr = x.data.data() + (co / mult) * t_in;
    const double* wr = kernel.data.data() + co * k_len;
    double* yr = out.data.data() + co * t_out;
    for (std::size_t t = 0; t < t_out; ++t) {
      const long base = static_cast<long>(t * stride) - pad_l;
      const long k0 = std::max(0L, -base);
      const long k1 = std::min(static_cast<long>(k_len), static_cast<long>(t_in) - base);
      double acc = 0.0;
      for (long k = k0; k < k1; ++k) acc += xr[base + k] * wr[k];
      yr[t] = acc + bias.data[co];
    }
  }
  return out;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.shape.size() != 2 || b.shape.size() != 1 || w.shape[1] != x.size() ||
      b.shape[0] != w.shape[0]) {
    throw ConfigError("dense shape mismatch: x" + shape_string(x.shape) + " W" +
                      shape_string(w.shape) + " b" + shape_string(b.shape));
  }
  const std::size_t m = w.shape[0];
  const std::size_t n = w.shape[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* wr = w.data.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x.data[j];
    out.data[i] = acc + b.data[i];
  }
  return out;
}

namespace {

// Per-layer parameter keys, resolved once per call.
struct Plan {
  struct BranchPlan {
    const Branch* branch;
    const InputGeometry* geometry;
    std::vector<std::string> keys;  // empty for parameter-free layers
  };
  std::vector<BranchPlan> branches;
  std::vector<std::string> head_keys;
};

Plan make_plan(const ModelSpec& spec) {
  Plan plan;
  for (const Branch& b : spec.branches) {
    Plan::BranchPlan bp{&b, &spec.inputs.at(b.modality), {}};
    std::size_t j = 0;
    for (const LayerSpec& l : b.layers) {
      bp.keys.push_back(std::holds_alternative<DepthwiseConv1D>(l)
                            ? b.name + "/conv" + std::to_string(j++)
                            : std::string());
    }
    plan.branches.push_back(std::move(bp));
  }
  std::size_t j = 0;
  for (const LayerSpec& l : spec.head) {
    plan.head_keys.push_back(std::holds_alternative<Dense>(l)
                                 ? "head/dense" + std::to_string(j++)
                                 : std::string());
  }
  return plan;
}

const Tensor& param(const Parameters& p, const std::string& key) {
  const auto it = p.find(key);
  if (it == p.end()) throw ConfigError("missing parameter " + key);
  return it->second;
}

Tensor input_tensor(const Window& w, Modality m, const InputGeometry& g) {
  const signal::ModalityBlock* b = w.block(m);
  if (b == nullptr) {
    throw ConfigError("window lacks " + std::string(signal::to_string(m)) + " data");
  }
  if (b->channels.size() != g.channels || b->samples != g.samples) {
    throw ConfigError(std::string(signal::to_string(m)) + " window geometry " +
                      std::to_string(b->channels.size()) + "x" + std::to_string(b->samples) +
                      " does not match model " + std::to_string(g.channels) + "x" +
                      std::to_string(g.samples));
  }
  Tensor x({g.channels, g.samples});
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = b->data[i] * g.scale;
  return x;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

Tensor mean_over_time(const Tensor& x) {
  const std::size_t c = x.shape[0];
  const std::size_t t = x.shape[1];
  Tensor out({c});
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t; ++j) s += x.data[i * t + j];
    out.data[i] = s / static_cast<double>(t);
  }
  return out;
}

// values[0] is the (scaled) input, values[i + 1] the output of layer i.
struct BranchRun {
  std::vector<Tensor> values;
};

// values[i] is the output of head layer i; values[0] is the concatenation.
struct HeadRun {
  std::vector<Tensor> values;
  double logit = 0.0;
};

BranchRun run_branch(const Plan::BranchPlan& bp, const Parameters& params, const Window& w) {
  BranchRun run;
  run.values.reserve(bp.branch->layers.size() + 1);
  run.values.push_back(input_tensor(w, bp.branch->modality, *bp.geometry));
  for (std::size_t i = 0; i < bp.branch->layers.size(); ++i) {
    const LayerSpec& l = bp.branch->layers[i];
    const Tensor& in = run.values.back();
    if (const auto* c = std::get_if<DepthwiseConv1D>(&l)) {
      run.values.push_back(depthwise_conv1d_forward(in, param(params, bp.keys[i] + "/weight"),
                                                    param(params, bp.keys[i] + "/bias"),
                                                    c->stride, c->padding));
    } else if (std::holds_alternative<ReLU>(l)) {
      Tensor out = in;
      relu_inplace(out);
      run.values.push_back(std::move(out));
    } else {
      run.values.push_back(mean_over_time(in));
    }
  }
  return run;
}

HeadRun run_head(const ModelSpec& spec, const Plan& plan, const Parameters& params,
                 const std::vector<BranchRun>& branches) {
  HeadRun run;
  std::size_t total = 0;
  for (const BranchRun& b : branches) total += b.values.back().size();
  Tensor concat({total});
  std::size_t off = 0;
  for (const BranchRun& b : branches) {
    const Tensor& f = b.values.back();
    std::copy(f.data.begin(), f.data.end(), concat.data.begin() + static_cast<long>(off));
    off += f.size();
  }
  run.values.push_back(std::move(concat));
  for (std::size_t i = 1; i < spec.head.size(); ++i) {
    const LayerSpec& l = spec.head[i];
    const Tensor& in = run.values.back();
    if (std::holds_alternative<Dense>(l)) {
      run.values.push_back(dense_forward(in, param(params, plan.head_keys[i] + "/weight"),
                                         param(params, plan.head_keys[i] + "/bias")));
    } else if (std::holds_alternative<ReLU>(l)) {
      Tensor out = in;
      relu_inplace(out);
      run.values.push_back(std::move(out));
    } else {
      run.logit = in.data.at(0);
      run.values.push_back(Tensor({1}, {sigmoid(std::clamp(run.logit, -kLogitClamp, kLogitClamp))}));
    }
  }
  return run;
}

struct FullRun {
  std::vector<BranchRun> branches;
  HeadRun head;
};

FullRun run_model(const ModelSpec& spec, const Plan& plan, const Parameters& params,
                  const Window& w) {
  FullRun r;
  r.branches.reserve(plan.branches.size());
  for (const auto& bp : plan.branches) r.branches.push_back(run_branch(bp, params, w));
  r.head = run_head(spec, plan, params, r.branches);
  return r;
}

bool next_is_relu(const std::vector<LayerSpec>& layers, std::size_t i) {
  return i + 1 < layers.size() && std::holds_alternative<ReLU>(layers[i + 1]);
}

}  // namespace

ForwardTrace forward_trace(const ModelSpec& spec, const Parameters& params, const Window& w) {
  const Plan plan = make_plan(spec);
  FullRun r = run_model(spec, plan, params, w);
  ForwardTrace trace;
  for (std::size_t bi = 0; bi < plan.branches.size(); ++bi) {
    const auto& bp = plan.branches[bi];
    const auto& layers = bp.branch->layers;
    BranchRun& run = r.branches[bi];
    trace.activations[bp.branch->name + "/input"] = run.values[0];
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (std::holds_alternative<DepthwiseConv1D>(layers[i])) {
        trace.activations[bp.keys[i]] = run.values[next_is_relu(layers, i) ? i + 2 : i + 1];
      } else if (std::holds_alternative<GlobalStats>(layers[i])) {
        trace.activations[bp.branch->name + "/pool"] = run.values[i + 1];
      }
    }
  }
  trace.activations["head/concat"] = r.head.values[0];
  for (std::size_t i = 1; i < spec.head.size(); ++i) {
    if (std::holds_alternative<Dense>(spec.head[i])) {
      trace.activations[plan.head_keys[i]] = r.head.values[next_is_relu(spec.head, i) ? i + 1 : i];
    }
  }
  trace.logit = r.head.logit;
  trace.probability = r.head.values.back().data[0];
  return trace;
}

double forward_logit(const ModelSpec& spec, const Parameters& params, const Window& w) {
  const Plan plan = make_plan(spec);
  return run_model(spec, plan, params, w).head.logit;
}

double forward(const ModelSpec& spec, const Parameters& params, const Window& w) {
  return sigmoid(std::clamp(forward_logit(spec, params, w), -kLogitClamp, kLogitClamp));
}

// ---------------------------------------------------------------------------
// Backward.

namespace {

// Cross-entropy against a target in [0, 1] (a label or a soft target).
double sample_loss(double logit, double y, double weight, double* dlogit) {
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  if (dlogit != nullptr) *dlogit = weight * (sigmoid(z) - y);
  return weight * (softplus - y * z);
}

int label_of(const Window& w) {
  if (!w.label) throw ConfigError("window at " + std::to_string(w.start_s) + " s of " + w.subject_id + " is unlabeled");
  return *w.label;
}

void backward_branch(const Plan::BranchPlan& bp, const Parameters& params,
                     const BranchRun& run, Tensor grad, Parameters& grads) {
  const auto& layers = bp.branch->layers;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& l = layers[i];
    const Tensor& in = run.values[i];
    const Tensor& out = run.values[i + 1];
    if (const auto* c = std::get_if<DepthwiseConv1D>(&l)) {
      const Tensor& w = param(params, bp.keys[i] + "/weight");
      Tensor& gw = grads.at(bp.keys[i] + "/weight");
      Tensor& gb = grads.at(bp.keys[i] + "/bias");
      const std::size_t c_in = in.shape[0];
      const std::size_t t_in = in.shape[1];
      const std::size_t c_out = out.shape[0];
      const std::size_t t_out = out.shape[1];
      const std::size_t k_len = c->kernel_len;
      const std::size_t mult = c_out / c_in;
      const long pad_l = static_cast<long>(c->pad_left());
      const bool need_dx = i > 0;
      Tensor dx;
      if (need_dx) dx = Tensor({c_in, t_in});
      for (std::size_t co = 0; co < c_out; ++co) {
        const std::size_t ci = co / mult;
        const double* xr = in.data.data() + ci * t_in;
        const double* wr = w.data.data() + co * k_len;
        double* gwr = gw.data.data() + co * k_len;
        double* dxr = need_dx ? dx.data.data() + ci * t_in : nullptr;
        const double* gr = grad.data.data() + co * t_out;
        double gbias = 0.0;
        for (std::size_t t = 0; t < t_out; ++t) {
          const double g = gr[t];
          if (g == 0.0) continue;
          gbias += g;
          const long base = static_cast<long>(t * c->stride) - pad_l;
          const long k0 = std::max(0L, -base);
          const long k1 = std::min(static_cast<long>(k_len), static_cast<long>(t_in) - base);
          for (long k = k0; k < k1; ++k) gwr[k] += g * xr[base + k];
          if (need_dx) {
            for (long k = k0; k < k1; ++k) dxr[base + k] += g * wr[k];
          }
        }
        gb.data[co] += gbias;
      }
      if (!need_dx) return;
      grad = std::move(dx);
    } else if (std::holds_alternative<ReLU>(l)) {
      for (std::size_t j = 0; j < grad.data.size(); ++j) {
        if (!(out.data[j] > 0.0)) grad.data[j] = 0.0;
      }
    } else {
      const std::size_t c = in.shape[0];
      const std::size_t t = in.shape[1];
      Tensor dx({c, t});
      const double inv = 1.0 / static_cast<double>(t);
      for (std::size_t a = 0; a < c; ++a) {
        const double g = grad.data[a] * inv;
        std::fill_n(dx.data.begin() + static_cast<long>(a * t), t, g);
      }
      grad = std::move(dx);
    }
  }
}

void backward_sample(const ModelSpec& spec, const Plan& plan, const Parameters& params,
                     const FullRun& r, double dlogit, Parameters& grads) {
  Tensor grad({1}, {dlogit});
  // Sigmoid is folded into dlogit; walk the remaining head layers backwards.
  for (std::size_t i = spec.head.size() - 1; i-- > 1;) {
    const LayerSpec& l = spec.head[i];
    const Tensor& in = r.head.values[i - 1];
    if (std::holds_alternative<Dense>(l)) {
      const Tensor& w = param(params, plan.head_keys[i] + "/weight");
      Tensor& gw = grads.at(plan.head_keys[i] + "/weight");
      Tensor& gb = grads.at(plan.head_keys[i] + "/bias");
      const std::size_t m = w.shape[0];
      const std::size_t n = w.shape[1];
      Tensor dx({n});
      for (std::size_t a = 0; a < m; ++a) {
        const double g = grad.data[a];
        gb.data[a] += g;
        if (g == 0.0) continue;
        double* gwr = gw.data.data() + a * n;
        const double* wr = w.data.data() + a * n;
        for (std::size_t b = 0; b < n; ++b) {
          gwr[b] += g * in.data[b];
          dx.data[b] += g * wr[b];
        }
      }
      grad = std::move(dx);
    } else {
      const Tensor& out = r.head.values[i];
      for (std::size_t j = 0; j < grad.data.size(); ++j) {
        if (!(out.data[j] > 0.0)) grad.data[j] = 0.0;
      }
    }
  }
  std::size_t off = 0;
  for (std::size_t bi = 0; bi < plan.branches.size(); ++bi) {
    const Tensor& f = r.branches[bi].values.back();
    Tensor g(f.shape);
    std::copy_n(grad.data.begin() + static_cast<long>(off), f.size(), g.data.begin());
    off += f.size();
    backward_branch(plan.branches[bi], params, r.branches[bi], std::move(g), grads);
  }
}

}  // namespace

LossAndGradients backward(const ModelSpec& spec, const Parameters& params,
                          std::span<const Window* const> batch, double positive_weight) {
  return backward_soft(spec, params, batch, {}, positive_weight);
}

LossAndGradients backward_soft(const ModelSpec& spec, const Parameters& params,
                               std::span<const Window* const> batch,
                               std::span<const double> targets, double positive_weight) {
  if (batch.empty()) throw ConfigError("backward on an empty batch");
  if (!targets.empty() && targets.size() != batch.size()) {
    throw ConfigError("soft targets do not match the batch");
  }
  const Plan plan = make_plan(spec);
  LossAndGradients out;
  out.gradients = zero_parameters(spec);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FullRun r = run_model(spec, plan, params, *batch[i]);
    double y = 0.0, weight = 1.0;
    if (targets.empty()) {
      const int label = label_of(*batch[i]);
      y = label;
      weight = label == 1 ? positive_weight : 1.0;
    } else {
      y = targets[i];
    }
    double dlogit = 0.0;
    out.loss += sample_loss(r.head.logit, y, weight, &dlogit) * inv_n;
    backward_sample(spec, plan, params, r, dlogit * inv_n, out.gradients);
  }
  return out;
}

LossAndGradients backward(const ModelSpec& spec, const Parameters& params,
                          std::span<const Window> batch, double positive_weight) {
  std::vector<const Window*> ptrs;
  ptrs.reserve(batch.size());
  for (const Window& w : batch) ptrs.push_back(&w);
  return backward(spec, params, std::span<const Window* const>(ptrs), positive_weight);
}

double batch_loss(const ModelSpec& spec, const Parameters& params,
                  std::span<const Window> batch, double positive_weight) {
  if (batch.empty()) throw ConfigError("loss on an empty batch");
  const Plan plan = make_plan(spec);
  double loss = 0.0;
  for (const Window& w : batch) {
    const int y = label_of(w);
    const double z = run_model(spec, plan, params, w).head.logit;
    loss += sample_loss(z, y, y == 1 ? positive_weight : 1.0, nullptr);
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace fogwear::nn
