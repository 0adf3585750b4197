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

#include "fogwear/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fogwear/error.hpp"
#include "fogwear/rng.hpp"

namespace fogwear::metrics {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("score/label length mismatch: " + std::to_string(scores.size()) + " vs " +
                    std::to_string(labels.size()));
  }
  if (scores.empty()) throw DataError("no scores to evaluate");
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw DataError("NaN score");
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

// Indices sorted by descending score.
std::vector<std::size_t> by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold) {
  check_inputs(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Metrics metrics_from_confusion(const ConfusionCounts& c) {
  Metrics m;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.accuracy = ratio(c.tp + c.tn, c.total());
  if (m.precision && m.sensitivity) {
    const double s = *m.precision + *m.sensitivity;
    if (s > 0.0) {
      m.f1 = 2.0 * *m.precision * *m.sensitivity / s;
    } else {
      m.f1 = 0.0;
    }
  }
  return m;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = static_cast<std::int64_t>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("AUC needs both classes");
  const auto idx = by_score_desc(scores);
  // Twice the area in units of (1/pos) x (1/neg); integer arithmetic keeps the
  // result exact up to the final division.
  std::int64_t twice_area = 0;
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::int64_t gtp = 0, gfp = 0;
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      labels[idx[j]] == 1 ? ++gtp : ++gfp;
      ++j;
    }
    twice_area += gfp * (2 * tp + gtp);
    tp += gtp;
    i = j;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("ROC curve needs both classes");
  const auto idx = by_score_desc(scores);
  std::vector<RocPoint> out;
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      labels[idx[i]] == 1 ? ++tp : ++fp;
      ++i;
    }
    out.push_back({s, static_cast<double>(tp) / static_cast<double>(pos),
                   static_cast<double>(fp) / static_cast<double>(neg)});
  }
  return out;
}

double youden_threshold(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = roc_curve(scores, labels);
  double best_j = -2.0;
  double best_t = 0.5;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const double j = curve[k].tpr - curve[k].fpr;
    if (j > best_j) {
      best_j = j;
      // Midway to the next lower distinct score keeps the same training
      // decisions while leaving a margin on both sides.
      best_t = k + 1 < curve.size() ? 0.5 * (curve[k].threshold + curve[k + 1].threshold)
                                    : curve[k].threshold;
    }
  }
  return best_t;
}

ConfidenceInterval bootstrap_ci(std::span<const Outcome> outcomes, const MetricFn& metric,
                                std::size_t n_boot, std::uint64_t seed) {
  if (outcomes.size() < kMinBootstrapOutcomes) {
    throw DataError("bootstrap needs at least " + std::to_string(kMinBootstrapOutcomes) +
                    " outcomes, got " + std::to_string(outcomes.size()));
  }
  if (n_boot == 0) throw ConfigError("bootstrap needs at least one resample");
  Rng rng(seed);
  std::vector<Outcome> sample(outcomes.size());
  std::vector<double> values;
  values.reserve(n_boot);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (Outcome& o : sample) o = outcomes[rng.index(outcomes.size())];
    if (const auto v = metric(sample)) values.push_back(*v);
  }
  if (values.empty()) throw DataError("metric undefined on every bootstrap resample");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {quantile(0.025), quantile(0.975), values.size()};
}

namespace {

void split(std::span<const Outcome> o, std::vector<double>& s, std::vector<int>& l) {
  s.resize(o.size());
  l.resize(o.size());
  for (std::size_t i = 0; i < o.size(); ++i) {
    s[i] = o[i].score;
    l[i] = o[i].label;
  }
}

}  // namespace

MetricFn auc_metric() {
  return [](std::span<const Outcome> o) -> std::optional<double> {
    std::vector<double> s;
    std::vector<int> l;
    split(o, s, l);
    const auto pos = std::count(l.begin(), l.end(), 1);
    if (pos == 0 || pos == static_cast<long>(l.size())) return std::nullopt;
    return roc_auc(s, l);
  };
}

MetricFn threshold_metric(double threshold, std::optional<double> Metrics::*field) {
  return [threshold, field](std::span<const Outcome> o) -> std::optional<double> {
    std::vector<double> s;
    std::vector<int> l;
    split(o, s, l);
    return metrics_from_confusion(confusion(s, l, threshold)).*field;
  };
}

}  // namespace fogwear::metrics
