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
#include <vector>

#include "doctest.h"
#include "fogwear/error.hpp"
#include "fogwear/metrics.hpp"
#include "fogwear/rng.hpp"
#include "oracles.hpp"

using namespace fogwear;
using namespace fogwear::metrics;

TEST_CASE("confusion and derived metrics") {
  const std::vector<double> s = {0.9, 0.8, 0.4, 0.3, 0.6, 0.1};
  const std::vector<int> y = {1, 1, 1, 0, 0, 0};
  const ConfusionCounts c = confusion(s, y, 0.5);
  CHECK(c == ConfusionCounts{2, 1, 2, 1});
  const Metrics m = metrics_from_confusion(c);
  CHECK(*m.sensitivity == doctest::Approx(2.0 / 3));
  CHECK(*m.specificity == doctest::Approx(2.0 / 3));
  CHECK(*m.precision == doctest::Approx(2.0 / 3));
  CHECK(*m.f1 == doctest::Approx(2.0 / 3));
  CHECK(*m.accuracy == doctest::Approx(4.0 / 6));
  // Threshold is inclusive.
  CHECK(confusion(s, y, 0.9).tp == 1);

  const Metrics none = metrics_from_confusion(ConfusionCounts{0, 0, 5, 0});
  CHECK_FALSE(none.sensitivity.has_value());
  CHECK_FALSE(none.precision.has_value());
  CHECK_FALSE(none.f1.has_value());
  CHECK(*none.specificity == 1.0);
  CHECK_THROWS_AS(confusion(s, std::vector<int>{1, 2, 0, 0, 0, 0}, 0.5), DataError);
}

TEST_CASE("AUC matches pair counting, with ties") {
  Rng rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.index(60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(8)) / 8.0;  // many ties
      y[i] = static_cast<int>(rng.index(2));
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(std::abs(roc_auc(s, y) - oracle::pair_count_auc(s, y)) <= 1e-12);
  }
  CHECK(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), DataError);
}

TEST_CASE("AUC is invariant under monotone transforms") {
  Rng rng(32);
  std::vector<double> s(300), t(300);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    y[i] = static_cast<int>(i % 3 == 0);
    s[i] = rng.normal() + y[i];
    t[i] = std::exp(3.0 * s[i]) + 7.0;
  }
  CHECK(roc_auc(s, y) == roc_auc(t, y));
}

TEST_CASE("ROC curve endpoints and Youden threshold") {
  const std::vector<double> s = {0.1, 0.2, 0.7, 0.8};
  const std::vector<int> y = {0, 0, 1, 1};
  const auto curve = roc_curve(s, y);
  REQUIRE(curve.size() >= 2);
  CHECK(curve.front().tpr == 0.0);
  CHECK(curve.front().fpr == 0.0);
  CHECK(curve.back().tpr == 1.0);
  CHECK(curve.back().fpr == 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].tpr >= curve[i - 1].tpr);
    CHECK(curve[i].fpr >= curve[i - 1].fpr);
  }
  const double thr = youden_threshold(s, y);
  CHECK(thr == doctest::Approx(0.45));
  const Metrics m = metrics_from_confusion(confusion(s, y, thr));
  CHECK(*m.sensitivity == 1.0);
  CHECK(*m.specificity == 1.0);
}

TEST_CASE("bootstrap interval") {
  Rng rng(33);
  std::vector<Outcome> small, large;
  for (int i = 0; i < 4000; ++i) {
    const int y = i % 2;
    const Outcome o{rng.normal() + y, y};
    if (i < 100) small.push_back(o);
    large.push_back(o);
  }
  const ConfidenceInterval a = bootstrap_ci(small, auc_metric(), 500, 3);
  const ConfidenceInterval b = bootstrap_ci(large, auc_metric(), 500, 3);
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& o : large) {
    s.push_back(o.score);
    y.push_back(o.label);
  }
  const double point = roc_auc(s, y);
  CHECK(b.lo <= point);
  CHECK(point <= b.hi);
  CHECK(b.hi - b.lo < a.hi - a.lo);
  CHECK(a.valid_resamples == 500);
  const ConfidenceInterval again = bootstrap_ci(small, auc_metric(), 500, 3);
  CHECK(again.lo == a.lo);
  CHECK(again.hi == a.hi);
  CHECK_THROWS_AS(bootstrap_ci(std::span(small).first(5), auc_metric()), DataError);
  std::vector<Outcome> one_class(50, Outcome{0.3, 1});
  CHECK_THROWS_AS(bootstrap_ci(one_class, auc_metric(), 50), DataError);
  const ConfidenceInterval f1 = bootstrap_ci(large, threshold_metric(0.5, &Metrics::f1), 200, 4);
  CHECK(f1.lo < f1.hi);
}
