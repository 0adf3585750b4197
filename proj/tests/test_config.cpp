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

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "fogwear/commands.hpp"
#include "fogwear/config.hpp"
#include "fogwear/error.hpp"
#include "fogwear/textio.hpp"
#include "json.hpp"

using namespace fogwear;
using namespace fogwear::config;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json base_doc(const fs::path& out) {
  json doc = {{"schema", std::string(kConfigSchema)}};
  apply_override(doc, "dataset.synthetic.n_subjects=3");
  apply_override(doc, "dataset.synthetic.windows_per_subject=14");
  apply_override(doc, "train.epochs=3");
  apply_override(doc, "compression.finetune_epochs=1");
  apply_override(doc, "eval.bootstrap_resamples=50");
  apply_override(doc, "run_ablation=false");
  apply_override(doc, "netsim.sim_duration_s=9");
  doc["output_dir"] = out.generic_string();
  return doc;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("defaults round trip") {
  ExperimentConfig c;
  c.output_dir = "x";
  const ExperimentConfig back = experiment_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(parse_channel_ref("EEG/Fz").channel == "Fz");
  CHECK(to_string(parse_channel_ref("ACC/L_x")) == "ACC/L_x");
  CHECK_THROWS_AS(parse_channel_ref("Fz"), ConfigError);
}

TEST_CASE("overrides") {
  json doc = {{"schema", std::string(kConfigSchema)}};
  apply_override(doc, "train.epochs=7");
  apply_override(doc, "netsim_subject=S02");
  apply_override(doc, "eval.threshold=0.4");
  apply_override(doc, "eval.compressed_threshold=refit");
  const ExperimentConfig c = experiment_config_from_json(doc);
  CHECK(c.train.epochs == 7);
  CHECK(c.netsim_subject == "S02");
  CHECK(*c.eval.fixed_threshold == 0.4);
  CHECK(c.eval.refit_compressed_threshold);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "train..epochs=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "train.epochs.x=1"), ConfigError);
}

TEST_CASE("invalid configs") {
  json doc = {{"schema", std::string(kConfigSchema)}};
  json bad = doc;
  apply_override(bad, "train.epoch=3");
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = doc;
  apply_override(bad, "dataset.synthetic.n_subjects=1");
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = doc;
  apply_override(bad, "train.epochs=\"many\"");
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = doc;
  apply_override(bad, "netsim.window_s=2");
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = doc;
  bad["channels"] = {"EEG/Fz", "EEG/Fz"};
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json(json{{"schema", "other/1"}}), ConfigError);
  CHECK_THROWS_AS(read_config_document("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("output root from the environment") {
  ::setenv(kOutputRootEnv, "/tmp/fogwear_env_root", 1);
  CHECK(default_output_root() == fs::path("/tmp/fogwear_env_root"));
  const ExperimentConfig c = experiment_config_from_json(json{{"schema", std::string(kConfigSchema)}});
  CHECK(c.output_dir == fs::path("/tmp/fogwear_env_root"));
  ::unsetenv(kOutputRootEnv);
  CHECK(default_output_root() == fs::path(kDefaultOutputRoot));
}

TEST_CASE("command pipeline") {
  const fs::path out = fresh_dir("fogwear_test_pipeline");
  const ExperimentConfig cfg = experiment_config_from_json(base_doc(out));
  std::ostringstream log;
  commands::cmd_datagen(cfg, log);
  CHECK(fs::exists(out / "dataset" / "manifest.json"));
  commands::cmd_train(cfg, log);
  CHECK(fs::exists(out / "train" / "model.fwm"));
  const json ts = json::parse(read_text_file(out / "train" / "summary.json"));
  const std::string epochs = read_text_file(out / "train" / "epochs.csv");
  CHECK(epochs.find("epoch,loss") == 0);
  std::istringstream rows(epochs);
  std::string line;
  std::getline(rows, line);
  std::vector<double> loss;
  while (std::getline(rows, line)) loss.push_back(*parse_real(line.substr(line.find(',') + 1)));
  REQUIRE(loss.size() == 3);
  CHECK(loss.back() < loss.front());
  CHECK(ts.contains("training_threshold"));

  const auto files = commands::cmd_compress(cfg, std::nullopt, log);
  const json cs = json::parse(read_text_file(out / "compress" / "summary.json"));
  CHECK(cs["file_bytes"]["output"].get<std::uint64_t>() == fs::file_size(out / "compress" / "model.fwm"));
  CHECK(cs["file_bytes"]["output"].get<std::uint64_t>() < fs::file_size(out / "train" / "model.fwm"));
  const json art = json::parse(read_text_file(out / "compress" / "artifacts.json"));
  CHECK(art["model.fwm"]["bytes"].get<std::uint64_t>() == fs::file_size(out / "compress" / "model.fwm"));
  CHECK(files.back() == out / "compress" / "artifacts.json");

  commands::cmd_simulate(cfg, std::nullopt, log);
  CHECK(fs::exists(out / "simulate" / "events.jsonl"));
  commands::cmd_report(cfg, log);
  CHECK(fs::exists(out / "report" / "summary.md"));

  // A missing model path is a configuration error.
  CHECK_THROWS_AS(commands::cmd_compress(cfg, out / "absent.fwm", log), Error);
}

TEST_CASE("no compression gives ratio one") {
  const fs::path out = fresh_dir("fogwear_test_nocompress");
  json doc = base_doc(out);
  apply_override(doc, "compression.sparsity=0");
  apply_override(doc, "compression.quantize=false");
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  std::ostringstream log;
  commands::cmd_train(cfg, log);
  commands::cmd_compress(cfg, std::nullopt, log);
  CHECK(fs::file_size(out / "compress" / "model.fwm") == fs::file_size(out / "train" / "model.fwm"));
  const std::string sizes = read_text_file(out / "compress" / "sizes.csv");
  const std::size_t row = sizes.find("\ncompressed,");
  REQUIRE(row != std::string::npos);
  CHECK(sizes.substr(sizes.rfind(',') + 1) == "1\n");
  CHECK(sizes.find('\n', row + 1) == sizes.size() - 1);
}

TEST_CASE("corrupt manifest is a data error") {
  const fs::path out = fresh_dir("fogwear_test_corrupt");
  fs::create_directories(out);
  write_text_file(out / "manifest.json", "{\"schema\": 3");
  json doc = base_doc(out);
  doc["dataset"]["manifest"] = (out / "manifest.json").generic_string();
  const ExperimentConfig cfg = experiment_config_from_json(doc);
  std::ostringstream log;
  CHECK_THROWS_AS(commands::load_cohort(cfg), DataError);
}
