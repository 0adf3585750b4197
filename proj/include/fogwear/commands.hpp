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

// The CLI subcommands as library calls. Each command writes into its own
// directory under the configured output directory, together with
// config.resolved.json (the configuration actually used) and artifacts.json
// (FNV-1a hash and size of every file it wrote).
//
//   datagen   dataset/manifest.json + per-subject streams, datagen/summary.json
//   train     train/model.fwm, train/epochs.csv, train/summary.json
//   compress  compress/model.fwm, compress/sizes.csv, compress/summary.json
//   evaluate  evaluate/{float,compressed}.json, evaluate/ablation/*.json,
//             evaluate/metrics.csv, evaluate/folds.csv, evaluate/summary.json
//   simulate  simulate/events.jsonl, simulate/summary.csv, simulate/report.json
//   report    report/modalities.csv, report/summary.md, report/all_artifacts.json

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "fogwear/config.hpp"
#include "fogwear/signal.hpp"

namespace fogwear::commands {

using Files = std::vector<std::filesystem::path>;

// The configured dataset: the manifest if set, else the synthetic cohort
// generated in memory. Channels are restricted to the configured selection.
std::vector<signal::Recording> load_cohort(const config::ExperimentConfig& cfg);

// Windowed and labelled per cfg.eval.
std::vector<signal::Window> cohort_windows(const config::ExperimentConfig& cfg,
                                           std::span<const signal::Recording> cohort);

Files cmd_datagen(const config::ExperimentConfig& cfg, std::ostream& log);
Files cmd_train(const config::ExperimentConfig& cfg, std::ostream& log);
// `model` defaults to <output_dir>/train/model.fwm.
Files cmd_compress(const config::ExperimentConfig& cfg,
                   const std::optional<std::filesystem::path>& model, std::ostream& log);
Files cmd_evaluate(const config::ExperimentConfig& cfg, std::ostream& log);
// `model` defaults to the compressed model if present, else the float model.
Files cmd_simulate(const config::ExperimentConfig& cfg,
                   const std::optional<std::filesystem::path>& model, std::ostream& log);
Files cmd_report(const config::ExperimentConfig& cfg, std::ostream& log);

}  // namespace fogwear::commands
