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

// Synthetic FoG cohort generator and a band-power feature baseline used to
// check that a generated cohort carries the intended signal.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fogwear/signal.hpp"
#include "json.hpp"

namespace fogwear::cohort {

// Effect profiles:
//   null           no planted effect
//   strong         every modality carries every episode
//   complementary  each episode is strong in one randomly chosen modality and
//                  faint in the others
//   eeg_only       only EEG carries the effect; EMG and ACC are pure noise
enum class EffectProfile : std::uint8_t { kNull, kStrong, kComplementary, kEegOnly };

std::string_view to_string(EffectProfile p);
EffectProfile parse_effect_profile(std::string_view text);

struct CohortConfig {
  std::size_t n_subjects = 12;
  std::size_t windows_per_subject = 100;  // at the default 3 s / 1.5 s geometry
  EffectProfile profile = EffectProfile::kComplementary;
  std::uint64_t seed = 7;
  double eeg_rate_hz = 128.0;
  double emg_rate_hz = 250.0;
  double acc_rate_hz = 64.0;
  // Planted effect amplitude relative to the background, before per-subject
  // jitter. "Faint" is the complementary profile's off-modality level.
  double strong_effect = 1.2;
  double faint_effect = 0.15;
  // Mean fraction of time in FoG.
  double fog_fraction = 0.3;
  std::string eeg_preset = "eeg";

  void validate() const;
  double duration_s() const;
};

nlohmann::json to_json(const CohortConfig& c);
CohortConfig cohort_config_from_json(const nlohmann::json& j);

// Deterministic per seed. Subjects are named S01, S02, ...; channels follow
// signal::default_channel_set(). EEG and EMG pass through the front-end
// model; ACC is digitized at 12 bits over +/-4 g.
std::vector<signal::Recording> generate_synthetic_cohort(const CohortConfig& cfg);

// ---------------------------------------------------------------------------
// Feature baseline.

// Log band powers per modality, averaged over channels: EEG theta, alpha,
// beta; EMG broadband and 3-8 Hz envelope; ACC locomotor and freeze bands.
std::vector<double> band_power_features(const signal::Window& w);

struct LogisticModel {
  std::vector<double> mean;
  std::vector<double> stdev;
  std::vector<double> weights;  // last entry is the intercept
  double predict(std::span<const double> x) const;
};

// Full-batch gradient descent on standardized features with a small L2
// penalty; deterministic.
LogisticModel fit_logistic(std::span<const std::vector<double>> x, std::span<const int> y,
                           std::size_t iterations = 400, double lr = 0.5, double l2 = 1e-3);

struct FeatureBaseline {
  double pooled_auc = 0.5;
  std::size_t windows = 0;
  std::size_t positives = 0;
};

// Subject-level leave-one-out logistic regression on band-power features.
FeatureBaseline feature_baseline_loo(std::span<const signal::Window> windows);

}  // namespace fogwear::cohort
