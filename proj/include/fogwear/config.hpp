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

// Experiment configuration: one schema-versioned JSON document holding every
// setting a run depends on. Missing keys take their defaults; the resolved
// document (all defaults materialized) is written next to every output.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fogwear/cohort.hpp"
#include "fogwear/compression.hpp"
#include "fogwear/evaluation.hpp"
#include "fogwear/netsim.hpp"
#include "fogwear/nn.hpp"
#include "fogwear/signal.hpp"
#include "json.hpp"

namespace fogwear::config {

inline constexpr std::string_view kConfigSchema = "fogwear.config/1";
inline constexpr const char* kOutputRootEnv = "FOGWEAR_OUTPUT_ROOT";
inline constexpr const char* kDefaultOutputRoot = "fogwear_out";

struct DatasetConfig {
  // Empty: the synthetic cohort below is generated in memory.
  std::optional<std::filesystem::path> manifest;
  cohort::CohortConfig synthetic;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<signal::ChannelRef> channels = signal::default_channel_set();
  eval::EvalConfig eval;
  nn::ArchitectureConfig architecture;
  nn::TrainConfig train;
  compress::CompressionConfig compression;
  bool evaluate_compressed = true;
  bool run_ablation = true;
  eval::AblationSpec ablation;
  netsim::SimConfig netsim;
  // Subject whose recording feeds the network simulation.
  std::string netsim_subject = "S01";
  std::filesystem::path output_dir = kDefaultOutputRoot;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);

// Unknown keys, wrong types and a missing or foreign schema tag are
// ConfigErrors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Reads the file (ConfigError naming it if unreadable or malformed).
nlohmann::json read_config_document(const std::filesystem::path& file);

// Applies "a.b.c=value" to the document. The value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// $FOGWEAR_OUTPUT_ROOT if set and non-empty, else "fogwear_out".
std::filesystem::path default_output_root();

// "EEG/Fz" style references.
std::string to_string(const signal::ChannelRef& c);
signal::ChannelRef parse_channel_ref(std::string_view text);

}  // namespace fogwear::config
