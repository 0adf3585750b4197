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

// Leave-one-subject-out evaluation, modality ablation and metric reports.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogwear/compression.hpp"
#include "fogwear/metrics.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/signal.hpp"
#include "json.hpp"

namespace fogwear::eval {

using signal::Modality;
using signal::Window;

struct EvalConfig {
  double window_length_s = signal::kDefaultWindowLengthS;
  double stride_s = signal::kDefaultStrideS;
  double label_threshold = signal::kDefaultLabelThreshold;
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t bootstrap_seed = 1;
  // Empty: Youden's J on the training fold. Otherwise a fixed threshold.
  std::optional<double> fixed_threshold;
  // false: the compressed model keeps the float model's threshold.
  // true: the threshold is picked again on the compressed model's scores.
  bool refit_compressed_threshold = false;
  std::size_t jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

// Fingerprint of a training set: subject id and start time of every window,
// in order. Any change in fold membership changes the hash.
std::string training_manifest_hash(std::span<const Window* const> windows);

struct ModelScores {
  double threshold = 0.5;
  std::vector<double> scores;
};

struct FoldOutput {
  std::string subject_id;
  std::string train_manifest_hash;
  std::size_t n_train = 0;
  std::vector<int> labels;
  std::vector<double> start_s;
  bool single_class = false;  // test subject lacks one of the classes
  nn::ModelSpec spec;         // with input scales fitted on the training fold
  nn::Parameters params;
  std::vector<double> epoch_loss;
  ModelScores float_model;
  std::optional<ModelScores> compressed_model;
  std::optional<compress::SizeReport> sizes;
};

struct MetricValues {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> accuracy;
  std::optional<double> auc;
};

inline constexpr const char* kMetricNames[] = {"sensitivity", "specificity", "precision",
                                               "f1", "accuracy", "auc"};
std::optional<double> metric_value(const MetricValues& v, std::string_view name);

struct SubjectMetrics {
  std::string subject_id;
  std::size_t windows = 0;
  std::size_t positives = 0;
  double threshold = 0.5;
  std::string train_manifest_hash;
  MetricValues values;
};

struct MetricReport {
  std::string model;   // "float" or "compressed"
  std::string subset;  // e.g. "EEG+EMG+ACC"
  std::size_t windows = 0;
  std::size_t positives = 0;
  // Pooled over all test windows of all folds (each judged at its own fold's
  // threshold); primary.
  MetricValues pooled;
  std::map<std::string, metrics::ConfidenceInterval> ci95;
  // Mean of per-subject values over subjects where the value is defined.
  MetricValues fold_mean;
  std::vector<SubjectMetrics> per_subject;
};

inline constexpr std::string_view kReportSchema = "fogwear.metrics/1";

nlohmann::json to_json(const MetricReport& r);

// Builds a report from fold outputs; `compressed` selects which scores.
MetricReport build_report(std::span<const FoldOutput> folds, bool compressed,
                          const std::string& subset, const EvalConfig& cfg);

struct LooResult {
  std::vector<FoldOutput> folds;  // sorted by subject id
  MetricReport float_report;
  std::optional<MetricReport> compressed_report;
  // Fraction of test windows where float and compressed agree at 0.5.
  std::optional<double> agreement_at_half;
  // Same, at each fold's operating thresholds.
  std::optional<double> agreement_at_threshold;
};

struct LooOptions {
  nn::TrainConfig train;
  std::optional<compress::CompressionConfig> compression;
  EvalConfig eval;
  // Branch parameters to start from, per subject (head-only re-training).
  const std::map<std::string, nn::Parameters>* branch_init = nullptr;
};

std::string subset_name(std::span<const Modality> modalities);

// One fold per subject: train on the others (input scales, training,
// threshold, pruning and calibration all use training windows only), then
// score the held-out subject. `spec` supplies the topology; its input scales
// are refitted per fold. Throws DataError for fewer than 2 subjects or a
// subject with no windows.
LooResult loo_evaluate(std::span<const Window> windows, const nn::ModelSpec& spec,
                       const LooOptions& opts);

// Windowing + labelling per opts.eval, then the above.
LooResult loo_evaluate(std::span<const signal::Recording> cohort, const nn::ModelSpec& spec,
                       const LooOptions& opts);

struct AblationSpec {
  std::vector<std::vector<Modality>> subsets = {
      {Modality::kEEG}, {Modality::kEMG}, {Modality::kACC},
      {Modality::kEEG, Modality::kEMG, Modality::kACC}};
  // true: branches re-initialized and trained with the head. false: branch
  // weights come from the full model's fold and only the head is trained.
  bool retrain_branches = true;

  void validate() const;
};

struct AblationRow {
  std::string subset;
  LooResult result;
};

// `full` may carry an already computed LOO of base_spec; it is reused for the
// subset equal to all modalities and supplies branch weights when
// retrain_branches is false (computed here if absent).
std::vector<AblationRow> ablation(std::span<const Window> windows, const nn::ModelSpec& base_spec,
                                  const AblationSpec& abl, const LooOptions& opts,
                                  const LooResult* full = nullptr);

// Flat CSV: model,subset,scope,windows,positives,<metric>...,<metric>_lo,<metric>_hi.
std::string reports_csv(std::span<const MetricReport> reports);

}  // namespace fogwear::eval
