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

// fogwear command-line driver.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 4 runtime error, 1 anything else.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fogwear/commands.hpp"
#include "fogwear/config.hpp"
#include "fogwear/error.hpp"

namespace {

using fogwear::config::ExperimentConfig;
using nlohmann::json;

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::size_t> jobs;
  std::optional<std::string> output;
  bool print_config = false;
  std::optional<std::string> model;
  // Subcommand shortcuts for frequently changed keys.
  std::optional<std::size_t> subjects;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> sparsity;
  std::optional<double> duration;
  std::optional<double> inference_time;
  std::optional<double> ber;
};

ExperimentConfig resolve(const Options& o) {
  json doc = o.config_file.empty() ? json{{"schema", std::string(fogwear::config::kConfigSchema)}}
                                   : fogwear::config::read_config_document(o.config_file);
  if (doc.is_object() && !doc.contains("schema")) {
    throw fogwear::ConfigError(o.config_file + ": missing \"schema\" key");
  }
  auto set = [&](const std::string& key, const json& v) {
    fogwear::config::apply_override(doc, key + "=" + v.dump());
  };
  if (o.subjects) set("dataset.synthetic.n_subjects", *o.subjects);
  if (o.profile) set("dataset.synthetic.profile", *o.profile);
  if (o.seed) set("dataset.synthetic.seed", *o.seed);
  if (o.epochs) set("train.epochs", *o.epochs);
  if (o.sparsity) set("compression.sparsity", *o.sparsity);
  if (o.duration) set("netsim.sim_duration_s", *o.duration);
  if (o.inference_time) set("netsim.inference_time_s", *o.inference_time);
  if (o.ber) set("netsim.target_ber", *o.ber);
  if (o.jobs) set("eval.jobs", *o.jobs);
  if (o.output) set("output_dir", *o.output);
  for (const std::string& s : o.overrides) fogwear::config::apply_override(doc, s);
  return fogwear::config::experiment_config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fogwear: multi-modal freezing-of-gait detection, compression and body-area network simulation"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_file, "JSON experiment config (schema fogwear.config/1)");
  app.add_option("--set", o.overrides, "Override a config key: key.path=value (repeatable)");
  app.add_option("-j,--jobs", o.jobs, "Maximum worker threads");
  app.add_option("-o,--output", o.output,
                 "Output directory (default: $FOGWEAR_OUTPUT_ROOT or ./fogwear_out)");
  app.add_flag("--print-config", o.print_config, "Print the resolved config before running");

  CLI::App* datagen = app.add_subcommand("datagen", "Generate the synthetic cohort and self-check it");
  datagen->add_option("--subjects", o.subjects, "Number of subjects");
  datagen->add_option("--profile", o.profile, "Effect profile: null, strong, complementary, eeg_only");
  datagen->add_option("--seed", o.seed, "Cohort seed");

  CLI::App* train = app.add_subcommand("train", "Train a model on the whole dataset");
  train->add_option("--epochs", o.epochs, "Training epochs");

  CLI::App* compress = app.add_subcommand("compress", "Prune, fine-tune and quantize a trained model");
  compress->add_option("--model", o.model, "Float model container (default: <output>/train/model.fwm)");
  compress->add_option("--sparsity", o.sparsity, "Fraction of weights to prune");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Leave-one-subject-out evaluation and ablation");
  evaluate->add_option("--epochs", o.epochs, "Training epochs per fold");

  CLI::App* simulate = app.add_subcommand("simulate", "Run the body-area network simulation");
  simulate->add_option("--model", o.model, "Model container (default: compressed, else float)");
  simulate->add_option("--duration", o.duration, "Simulated seconds");
  simulate->add_option("--inference-time", o.inference_time, "Inference time per window in seconds");
  simulate->add_option("--ber", o.ber, "Target bit error rate after majority decoding");

  CLI::App* report = app.add_subcommand("report", "Collect outputs into figure data and a summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig cfg = resolve(o);
    if (o.print_config) std::cout << fogwear::config::to_json(cfg).dump(2) << "\n";
    std::optional<std::filesystem::path> model;
    if (o.model) model = *o.model;
    if (datagen->parsed()) {
      fogwear::commands::cmd_datagen(cfg, std::cout);
    } else if (train->parsed()) {
      fogwear::commands::cmd_train(cfg, std::cout);
    } else if (compress->parsed()) {
      fogwear::commands::cmd_compress(cfg, model, std::cout);
    } else if (evaluate->parsed()) {
      fogwear::commands::cmd_evaluate(cfg, std::cout);
    } else if (simulate->parsed()) {
      fogwear::commands::cmd_simulate(cfg, model, std::cout);
    } else if (report->parsed()) {
      fogwear::commands::cmd_report(cfg, std::cout);
    }
  } catch (const fogwear::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fogwear::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const fogwear::RuntimeError& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
