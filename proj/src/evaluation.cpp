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

#include "fogwear/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fogwear/error.hpp"
#include "fogwear/hash.hpp"
#include "fogwear/rng.hpp"
#include "fogwear/textio.hpp"

namespace fogwear::eval {

using nlohmann::json;

void EvalConfig::validate() const {
  if (!(window_length_s > 0.0 && stride_s > 0.0)) {
    throw ConfigError("window length and stride must be positive");
  }
  if (!(label_threshold > 0.0 && label_threshold <= 1.0)) {
    throw ConfigError("label threshold must lie in (0, 1]");
  }
  if (bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples must be at least 1");
  if (fixed_threshold && !(*fixed_threshold >= 0.0 && *fixed_threshold <= 1.0)) {
    throw ConfigError("fixed threshold must lie in [0, 1]");
  }
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

json to_json(const EvalConfig& c) {
  json j = {{"window_length_s", c.window_length_s},
            {"stride_s", c.stride_s},
            {"label_threshold", c.label_threshold},
            {"bootstrap_resamples", c.bootstrap_resamples},
            {"bootstrap_seed", c.bootstrap_seed},
            {"jobs", c.jobs}};
  j["threshold"] = c.fixed_threshold ? json(*c.fixed_threshold) : json("youden");
  j["compressed_threshold"] = c.refit_compressed_threshold ? "refit" : "inherit";
  return j;
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  c.window_length_s = j.value("window_length_s", c.window_length_s);
  c.stride_s = j.value("stride_s", c.stride_s);
  c.label_threshold = j.value("label_threshold", c.label_threshold);
  c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
  c.bootstrap_seed = j.value("bootstrap_seed", c.bootstrap_seed);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("threshold")) {
    const json& t = j["threshold"];
    if (t.is_string()) {
      if (t.get<std::string>() != "youden") {
        throw ConfigError("threshold must be \"youden\" or a number");
      }
    } else {
      c.fixed_threshold = t.get<double>();
    }
  }
  if (j.contains("compressed_threshold")) {
    const std::string t = j["compressed_threshold"].get<std::string>();
    if (t != "inherit" && t != "refit") {
      throw ConfigError("compressed_threshold must be \"inherit\" or \"refit\"");
    }
    c.refit_compressed_threshold = t == "refit";
  }
  c.validate();
  return c;
}

std::string training_manifest_hash(std::span<const Window* const> windows) {
  Fnv1a h;
  for (const Window* w : windows) {
    h.update(w->subject_id);
    h.update_f64(w->start_s);
    h.update_u64(w->label ? static_cast<std::uint64_t>(*w->label) : 2u);
  }
  h.update_u64(windows.size());
  return h.hex();
}

std::optional<double> metric_value(const MetricValues& v, std::string_view name) {
  if (name == "sensitivity") return v.sensitivity;
  if (name == "specificity") return v.specificity;
  if (name == "precision") return v.precision;
  if (name == "f1") return v.f1;
  if (name == "accuracy") return v.accuracy;
  if (name == "auc") return v.auc;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::string subset_name(std::span<const Modality> modalities) {
  std::vector<Modality> sorted(modalities.begin(), modalities.end());
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (Modality m : sorted) {
    if (!out.empty()) out += "+";
    out += signal::to_string(m);
  }
  return out;
}

namespace {

MetricValues values_at(std::span<const double> scores, std::span<const int> labels,
                       std::span<const double> thresholds) {
  metrics::ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= thresholds[i];
    if (labels[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  const metrics::Metrics m = metrics::metrics_from_confusion(c);
  MetricValues v{m.sensitivity, m.specificity, m.precision, m.f1, m.accuracy, std::nullopt};
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos > 0 && pos < static_cast<long>(labels.size())) v.auc = metrics::roc_auc(scores, labels);
  return v;
}

std::optional<double> metrics_field(const metrics::Metrics& m, std::string_view name) {
  if (name == "sensitivity") return m.sensitivity;
  if (name == "specificity") return m.specificity;
  if (name == "precision") return m.precision;
  if (name == "f1") return m.f1;
  return m.accuracy;
}

void set_value(MetricValues& v, std::string_view name, std::optional<double> x) {
  if (name == "sensitivity") v.sensitivity = x;
  if (name == "specificity") v.specificity = x;
  if (name == "precision") v.precision = x;
  if (name == "f1") v.f1 = x;
  if (name == "accuracy") v.accuracy = x;
  if (name == "auc") v.auc = x;
}

}  // namespace

MetricReport build_report(std::span<const FoldOutput> folds, bool compressed,
                          const std::string& subset, const EvalConfig& cfg) {
  MetricReport r;
  r.model = compressed ? "compressed" : "float";
  r.subset = subset;
  std::vector<double> scores, thresholds;
  std::vector<int> labels;
  for (const FoldOutput& f : folds) {
    const ModelScores* ms = compressed ? (f.compressed_model ? &*f.compressed_model : nullptr)
                                       : &f.float_model;
    if (ms == nullptr) throw ConfigError("fold " + f.subject_id + " has no compressed scores");
    SubjectMetrics sm;
    sm.subject_id = f.subject_id;
    sm.windows = f.labels.size();
    sm.positives = static_cast<std::size_t>(std::count(f.labels.begin(), f.labels.end(), 1));
    sm.threshold = ms->threshold;
    sm.train_manifest_hash = f.train_manifest_hash;
    const std::vector<double> t(f.labels.size(), ms->threshold);
    sm.values = values_at(ms->scores, f.labels, t);
    r.per_subject.push_back(sm);
    scores.insert(scores.end(), ms->scores.begin(), ms->scores.end());
    labels.insert(labels.end(), f.labels.begin(), f.labels.end());
    thresholds.insert(thresholds.end(), t.begin(), t.end());
  }
  r.windows = labels.size();
  r.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (labels.empty()) return r;
  r.pooled = values_at(scores, labels, thresholds);

  for (const char* name : kMetricNames) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const SubjectMetrics& sm : r.per_subject) {
      if (const auto v = metric_value(sm.values, name)) {
        sum += *v;
        ++n;
      }
    }
    if (n > 0) set_value(r.fold_mean, name, sum / static_cast<double>(n));
  }

  if (labels.size() < metrics::kMinBootstrapOutcomes) return r;
  // Threshold metrics resample the per-window decisions; AUC resamples the
  // raw scores.
  std::vector<metrics::Outcome> decisions(labels.size()), raw(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    decisions[i] = {scores[i] >= thresholds[i] ? 1.0 : 0.0, labels[i]};
    raw[i] = {scores[i], labels[i]};
  }
  const Rng seeds(cfg.bootstrap_seed);
  std::uint64_t stream = 0;
  for (const char* name : kMetricNames) {
    ++stream;
    if (!metric_value(r.pooled, name)) continue;
    const std::string key = name;
    try {
      if (key == "auc") {
        r.ci95[key] = metrics::bootstrap_ci(raw, metrics::auc_metric(), cfg.bootstrap_resamples,
                                            seeds.fork(stream).next());
      } else {
        const auto fn = [key](std::span<const metrics::Outcome> o) -> std::optional<double> {
          metrics::ConfusionCounts c;
          for (const auto& x : o) {
            if (x.label == 1) {
              x.score >= 0.5 ? ++c.tp : ++c.fn;
            } else {
              x.score >= 0.5 ? ++c.fp : ++c.tn;
            }
          }
          return metrics_field(metrics::metrics_from_confusion(c), key);
        };
        r.ci95[key] = metrics::bootstrap_ci(decisions, fn, cfg.bootstrap_resamples,
                                            seeds.fork(stream).next());
      }
    } catch (const DataError&) {
      // Undefined on every resample; leave the interval out.
    }
  }
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json values_json(const MetricValues& v) {
  json j = json::object();
  for (const char* name : kMetricNames) j[name] = optional_json(metric_value(v, name));
  return j;
}

}  // namespace

json to_json(const MetricReport& r) {
  json j;
  j["schema"] = std::string(kReportSchema);
  j["model"] = r.model;
  j["subset"] = r.subset;
  j["windows"] = r.windows;
  j["positives"] = r.positives;
  j["pooled"] = values_json(r.pooled);
  json ci = json::object();
  for (const auto& [k, c] : r.ci95) ci[k] = {c.lo, c.hi};
  j["ci95"] = ci;
  j["fold_mean"] = values_json(r.fold_mean);
  json subs = json::array();
  for (const SubjectMetrics& s : r.per_subject) {
    subs.push_back({{"subject", s.subject_id},
                    {"windows", s.windows},
                    {"positives", s.positives},
                    {"threshold", s.threshold},
                    {"train_manifest_hash", s.train_manifest_hash},
                    {"metrics", values_json(s.values)}});
  }
  j["per_subject"] = subs;
  return j;
}

std::string reports_csv(std::span<const MetricReport> reports) {
  std::ostringstream out;
  out << "model,subset,scope,windows,positives";
  for (const char* name : kMetricNames) out << ',' << name;
  for (const char* name : kMetricNames) out << ',' << name << "_lo," << name << "_hi";
  out << '\n';
  auto cell = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const MetricReport& r : reports) {
    auto row = [&](const std::string& scope, std::size_t n, std::size_t pos, const MetricValues& v,
                   bool with_ci) {
      out << r.model << ',' << r.subset << ',' << scope << ',' << n << ',' << pos;
      for (const char* name : kMetricNames) out << ',' << cell(metric_value(v, name));
      for (const char* name : kMetricNames) {
        const auto it = r.ci95.find(name);
        if (with_ci && it != r.ci95.end()) {
          out << ',' << format_real(it->second.lo) << ',' << format_real(it->second.hi);
        } else {
          out << ",,";
        }
      }
      out << '\n';
    };
    row("pooled", r.windows, r.positives, r.pooled, true);
    row("fold_mean", r.windows, r.positives, r.fold_mean, false);
    for (const SubjectMetrics& s : r.per_subject) row(s.subject_id, s.windows, s.positives, s.values, false);
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

double pick_threshold(const EvalConfig& cfg, std::span<const double> scores,
                      std::span<const int> labels) {
  if (cfg.fixed_threshold) return *cfg.fixed_threshold;
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) return 0.5;
  return metrics::youden_threshold(scores, labels);
}

std::uint64_t fold_seed(std::uint64_t base, const std::string& subject) {
  Fnv1a h;
  h.update(subject);
  return splitmix64(base ^ h.digest());
}

FoldOutput run_fold(std::span<const Window> windows, const std::string& subject,
                    const nn::ModelSpec& base_spec, const LooOptions& opts) {
  FoldOutput out;
  out.subject_id = subject;
  std::vector<Window> train;
  std::vector<const Window*> train_ptrs;
  std::vector<const Window*> test;
  for (const Window& w : windows) {
    if (w.subject_id == subject) {
      test.push_back(&w);
    } else {
      train_ptrs.push_back(&w);
    }
  }
  out.train_manifest_hash = training_manifest_hash(train_ptrs);
  out.n_train = train_ptrs.size();
  train.reserve(train_ptrs.size());
  for (const Window* w : train_ptrs) train.push_back(*w);

  out.spec = base_spec;
  nn::fit_input_scales(out.spec, train);

  nn::TrainConfig tc = opts.train;
  tc.seed = fold_seed(opts.train.seed, subject);
  const nn::Parameters* initial = nullptr;
  nn::Parameters init;
  if (opts.branch_init != nullptr) {
    init = nn::init_parameters(out.spec, Rng(tc.seed).fork(1).next());
    const nn::Parameters& src = opts.branch_init->at(subject);
    for (auto& [key, t] : init) {
      if (key.rfind("head/", 0) == 0) continue;
      t = src.at(key);
    }
    for (const nn::Branch& b : out.spec.branches) tc.frozen_prefixes.push_back(b.name + "/");
    initial = &init;
  }
  nn::TrainResult tr = nn::train(out.spec, train, tc, initial);
  out.params = std::move(tr.params);
  out.epoch_loss = std::move(tr.epoch_loss);

  std::vector<int> train_labels;
  train_labels.reserve(train.size());
  for (const Window& w : train) train_labels.push_back(*w.label);

  std::vector<double> train_scores;
  train_scores.reserve(train.size());
  for (const Window& w : train) train_scores.push_back(nn::forward(out.spec, out.params, w));
  out.float_model.threshold = pick_threshold(opts.eval, train_scores, train_labels);
  for (const Window* w : test) {
    out.labels.push_back(*w->label);
    out.start_s.push_back(w->start_s);
    out.float_model.scores.push_back(nn::forward(out.spec, out.params, *w));
  }
  const auto pos = std::count(out.labels.begin(), out.labels.end(), 1);
  out.single_class = pos == 0 || pos == static_cast<long>(out.labels.size());

  if (opts.compression) {
    const compress::Compressed c = compress::compress_model(out.spec, out.params, train, *opts.compression, tc);
    out.sizes = c.sizes;
    auto score = [&](const Window& w) {
      return c.quantized ? compress::quantized_forward(*c.quantized, w)
                         : nn::forward(out.spec, c.pruned, w);
    };
    ModelScores ms;
    ms.threshold = out.float_model.threshold;
    if (opts.eval.refit_compressed_threshold) {
      for (std::size_t i = 0; i < train.size(); ++i) train_scores[i] = score(train[i]);
      ms.threshold = pick_threshold(opts.eval, train_scores, train_labels);
    }
    for (const Window* w : test) ms.scores.push_back(score(*w));
    out.compressed_model = std::move(ms);
  }
  return out;
}

}  // namespace

LooResult loo_evaluate(std::span<const Window> windows, const nn::ModelSpec& spec,
                       const LooOptions& opts) {
  opts.eval.validate();
  opts.train.validate();
  if (opts.compression) opts.compression->validate();
  spec.validate();
  std::set<std::string> subjects;
  for (const Window& w : windows) {
    if (!w.label) throw DataError("window of " + w.subject_id + " has no label");
    subjects.insert(w.subject_id);
  }
  if (subjects.size() < 2) {
    throw DataError("leave-one-out needs at least 2 subjects, got " + std::to_string(subjects.size()));
  }
  const std::vector<std::string> order(subjects.begin(), subjects.end());

  LooResult result;
  result.folds.resize(order.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= order.size()) return;
      try {
        result.folds[i] = run_fold(windows, order[i], spec, opts);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::min(opts.eval.jobs, order.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  const std::string name = subset_name(spec.modalities());
  result.float_report = build_report(result.folds, false, name, opts.eval);
  if (opts.compression) {
    result.compressed_report = build_report(result.folds, true, name, opts.eval);
    std::size_t agree_half = 0, agree_t = 0, n = 0;
    for (const FoldOutput& f : result.folds) {
      for (std::size_t i = 0; i < f.labels.size(); ++i) {
        const double a = f.float_model.scores[i];
        const double b = f.compressed_model->scores[i];
        agree_half += (a >= 0.5) == (b >= 0.5);
        agree_t += (a >= f.float_model.threshold) == (b >= f.compressed_model->threshold);
        ++n;
      }
    }
    if (n > 0) {
      result.agreement_at_half = static_cast<double>(agree_half) / static_cast<double>(n);
      result.agreement_at_threshold = static_cast<double>(agree_t) / static_cast<double>(n);
    }
  }
  return result;
}

LooResult loo_evaluate(std::span<const signal::Recording> cohort, const nn::ModelSpec& spec,
                       const LooOptions& opts) {
  opts.eval.validate();
  for (const signal::Recording& r : cohort) {
    if (signal::window_count(r.duration_s, opts.eval.window_length_s, opts.eval.stride_s) == 0) {
      throw DataError("subject " + r.subject_id + " yields no windows");
    }
  }
  const auto windows = signal::make_windows(cohort, opts.eval.window_length_s, opts.eval.stride_s,
                                            opts.eval.label_threshold);
  return loo_evaluate(windows, spec, opts);
}

void AblationSpec::validate() const {
  if (subsets.empty()) throw ConfigError("ablation needs at least one modality subset");
  for (const auto& s : subsets) {
    if (s.empty()) throw ConfigError("ablation subset must not be empty");
    std::set<Modality> uniq(s.begin(), s.end());
    if (uniq.size() != s.size()) throw ConfigError("ablation subset repeats a modality");
  }
}

std::vector<AblationRow> ablation(std::span<const Window> windows, const nn::ModelSpec& base_spec,
                                  const AblationSpec& abl, const LooOptions& opts,
                                  const LooResult* full) {
  abl.validate();
  const std::vector<Modality> all = base_spec.modalities();
  for (const auto& s : abl.subsets) {
    for (Modality m : s) {
      if (std::find(all.begin(), all.end(), m) == all.end()) {
        throw ConfigError("ablation subset uses " + std::string(signal::to_string(m)) +
                          ", which the model has no branch for");
      }
    }
  }
  std::optional<LooResult> own_full;
  auto full_result = [&]() -> const LooResult& {
    if (full != nullptr) return *full;
    if (!own_full) {
      LooOptions o = opts;
      o.branch_init = nullptr;
      own_full = loo_evaluate(windows, base_spec, o);
    }
    return *own_full;
  };

  std::vector<AblationRow> rows;
  for (const auto& subset : abl.subsets) {
    AblationRow row;
    row.subset = subset_name(subset);
    if (subset.size() == all.size()) {
      row.result = full_result();
    } else {
      const nn::ModelSpec spec = nn::restrict_modalities(base_spec, subset);
      LooOptions o = opts;
      std::map<std::string, nn::Parameters> init;
      if (!abl.retrain_branches) {
        for (const FoldOutput& f : full_result().folds) init[f.subject_id] = f.params;
        o.branch_init = &init;
      }
      row.result = loo_evaluate(windows, spec, o);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fogwear::eval
