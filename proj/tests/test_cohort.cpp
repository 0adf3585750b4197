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

#include <cmath>

#include "doctest.h"
#include "fogwear/cohort.hpp"
#include "fogwear/error.hpp"
#include "fogwear/signal.hpp"

using namespace fogwear;
using namespace fogwear::cohort;

namespace {

CohortConfig small(EffectProfile p, std::uint64_t seed = 7) {
  CohortConfig c;
  c.n_subjects = 4;
  c.windows_per_subject = 30;
  c.profile = p;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("profile names") {
  for (auto p : {EffectProfile::kNull, EffectProfile::kStrong, EffectProfile::kComplementary,
                 EffectProfile::kEegOnly}) {
    CHECK(parse_effect_profile(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_effect_profile("loud"), ConfigError);
}

TEST_CASE("config validation and JSON") {
  CohortConfig c;
  CHECK(cohort_config_from_json(to_json(c)).seed == c.seed);
  c.n_subjects = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CohortConfig{};
  c.fog_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("generated cohort is valid and deterministic") {
  const auto a = generate_synthetic_cohort(small(EffectProfile::kStrong));
  const auto b = generate_synthetic_cohort(small(EffectProfile::kStrong));
  const auto other = generate_synthetic_cohort(small(EffectProfile::kStrong, 8));
  REQUIRE(a.size() == 4);
  CHECK(a == b);
  CHECK_FALSE(a == other);
  CHECK(a[0].subject_id == "S01");
  CHECK(a[3].subject_id == "S04");
  for (const auto& r : a) {
    r.validate();
    CHECK_FALSE(r.fog_intervals.empty());
    for (const auto& ch : signal::default_channel_set()) CHECK(r.find(ch.modality, ch.channel) != nullptr);
  }
  const auto w = signal::make_windows(a, 3.0, 1.5, 0.25);
  CHECK(w.size() == 4 * 30);
}

TEST_CASE("feature baseline separates planted effects only") {
  auto run = [](EffectProfile p) {
    CohortConfig c = small(p);
    c.n_subjects = 6;
    c.windows_per_subject = 60;
    const auto rec = generate_synthetic_cohort(c);
    return feature_baseline_loo(signal::make_windows(rec, 3.0, 1.5, 0.25));
  };
  const FeatureBaseline strong = run(EffectProfile::kStrong);
  const FeatureBaseline null = run(EffectProfile::kNull);
  CHECK(strong.pooled_auc > 0.8);
  CHECK(std::abs(null.pooled_auc - 0.5) < 0.1);
  CHECK(strong.positives > 0);
  CHECK(strong.positives < strong.windows);
}

TEST_CASE("logistic regression fits a separable problem") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back({static_cast<double>(i), 1.0});
    y.push_back(i >= 20);
  }
  const LogisticModel m = fit_logistic(x, y);
  CHECK(m.predict(std::vector<double>{35.0, 1.0}) > 0.9);
  CHECK(m.predict(std::vector<double>{3.0, 1.0}) < 0.1);
}
