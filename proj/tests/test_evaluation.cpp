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
#include <set>

#include "doctest.h"
#include "fogwear/cohort.hpp"
#include "fogwear/error.hpp"
#include "fogwear/evaluation.hpp"

using namespace fogwear;
using namespace fogwear::eval;

namespace {

std::vector<Window> small_windows() {
  cohort::CohortConfig c;
  c.n_subjects = 3;
  c.windows_per_subject = 16;
  c.profile = cohort::EffectProfile::kStrong;
  return signal::make_windows(cohort::generate_synthetic_cohort(c), 3.0, 1.5, 0.25);
}

LooOptions quick() {
  LooOptions o;
  o.train.epochs = 2;
  o.eval.bootstrap_resamples = 50;
  return o;
}

}  // namespace

TEST_CASE("training manifest hash tracks fold membership") {
  const auto w = small_windows();
  std::vector<const Window*> a, b;
  for (const auto& x : w) a.push_back(&x);
  b = a;
  CHECK(training_manifest_hash(a) == training_manifest_hash(b));
  b.pop_back();
  CHECK(training_manifest_hash(a) != training_manifest_hash(b));
  std::swap(b[0], b[1]);
  b.push_back(a.back());
  CHECK(training_manifest_hash(a) != training_manifest_hash(b));
}

TEST_CASE("leave-one-subject-out folds") {
  const auto w = small_windows();
  const nn::ModelSpec spec = nn::make_model_spec(nn::geometry_of(w[0]));
  LooOptions o = quick();
  o.compression = compress::CompressionConfig{};
  o.compression->finetune_epochs = 1;
  const LooResult r = loo_evaluate(w, spec, o);
  REQUIRE(r.folds.size() == 3);
  std::set<std::string> hashes;
  std::size_t total = 0;
  for (const auto& f : r.folds) {
    const auto held = std::count_if(w.begin(), w.end(), [&](const Window& x) { return x.subject_id == f.subject_id; });
    CHECK(f.labels.size() == static_cast<std::size_t>(held));
    CHECK(f.n_train == w.size() - f.labels.size());
    CHECK(f.float_model.scores.size() == f.labels.size());
    REQUIRE(f.compressed_model.has_value());
    CHECK(f.compressed_model->scores.size() == f.labels.size());
    hashes.insert(f.train_manifest_hash);
    total += f.labels.size();
  }
  CHECK(hashes.size() == 3);
  CHECK(total == w.size());
  CHECK(r.float_report.windows == w.size());

  // The pooled AUC is the AUC of the concatenated scores.
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& f : r.folds) {
    s.insert(s.end(), f.float_model.scores.begin(), f.float_model.scores.end());
    y.insert(y.end(), f.labels.begin(), f.labels.end());
  }
  CHECK(*r.float_report.pooled.auc == metrics::roc_auc(s, y));
  REQUIRE(r.agreement_at_half.has_value());
  CHECK(*r.agreement_at_half >= 0.0);
  CHECK(*r.agreement_at_half <= 1.0);

  const auto j = to_json(r.float_report);
  CHECK(j["schema"] == std::string(kReportSchema));
  const MetricReport reports[] = {r.float_report, *r.compressed_report};
  const std::string csv = reports_csv(reports);
  CHECK(csv.rfind("model,subset,scope", 0) == 0);

  // Deterministic, and independent of the number of worker threads.
  o.eval.jobs = 2;
  const LooResult again = loo_evaluate(w, spec, o);
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    CHECK(again.folds[i].float_model.scores == r.folds[i].float_model.scores);
    CHECK(again.folds[i].compressed_model->scores == r.folds[i].compressed_model->scores);
  }
}

TEST_CASE("LOO input errors") {
  auto w = small_windows();
  const nn::ModelSpec spec = nn::make_model_spec(nn::geometry_of(w[0]));
  std::vector<Window> one;
  for (const auto& x : w) {
    if (x.subject_id == "S01") one.push_back(x);
  }
  CHECK_THROWS_AS(loo_evaluate(one, spec, quick()), DataError);
}

TEST_CASE("ablation subsets") {
  AblationSpec abl;
  abl.subsets = {{}};
  CHECK_THROWS_AS(abl.validate(), ConfigError);
  abl.subsets = {{Modality::kEEG, Modality::kEEG}};
  CHECK_THROWS_AS(abl.validate(), ConfigError);

  const auto w = small_windows();
  const nn::ModelSpec spec = nn::make_model_spec(nn::geometry_of(w[0]));
  abl = AblationSpec{};
  abl.subsets = {{Modality::kACC}};
  const auto rows = ablation(w, spec, abl, quick());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].subset == "ACC");
  CHECK(rows[0].result.folds[0].spec.branches.size() == 1);
  const Modality all[] = {Modality::kEEG, Modality::kEMG, Modality::kACC};
  CHECK(subset_name(all) == "EEG+EMG+ACC");
}
