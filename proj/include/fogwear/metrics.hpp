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

// Binary classification metrics over window scores.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace fogwear::metrics {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Predicted positive when score >= threshold. Labels must be 0 or 1.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold);

// A metric whose denominator is zero is left empty rather than reported as 0.
struct Metrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

Metrics metrics_from_confusion(const ConfusionCounts& c);

// Area under the ROC curve by trapezoids over all distinct thresholds; tied
// scores contribute one half. Throws DataError unless both classes occur.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

// Operating points from the strictest threshold (nothing positive) to the
// loosest (everything positive).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// Threshold maximizing sensitivity + specificity - 1. Thresholds are placed
// midway between adjacent distinct scores; the first maximum wins.
double youden_threshold(std::span<const double> scores, std::span<const int> labels);

struct Outcome {
  double score = 0.0;
  int label = 0;
};

// Statistic of a resample; empty when undefined for that resample (e.g. AUC
// of a single-class draw), in which case the resample is skipped.
using MetricFn = std::function<std::optional<double>(std::span<const Outcome>)>;

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t valid_resamples = 0;
};

inline constexpr std::size_t kMinBootstrapOutcomes = 10;

// Percentile bootstrap (2.5 %, 97.5 %), resampling outcomes with replacement.
// Throws DataError for fewer than kMinBootstrapOutcomes outcomes or when no
// resample yields a defined value.
ConfidenceInterval bootstrap_ci(std::span<const Outcome> outcomes, const MetricFn& metric,
                                std::size_t n_boot = 1000, std::uint64_t seed = 1);

// Convenience statistics for bootstrap_ci.
MetricFn auc_metric();
MetricFn threshold_metric(double threshold, std::optional<double> Metrics::*field);

}  // namespace fogwear::metrics
