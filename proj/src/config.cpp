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

#include "fogwear/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "fogwear/error.hpp"

namespace fogwear::config {

using nlohmann::json;

std::string to_string(const signal::ChannelRef& c) {
  return std::string(signal::to_string(c.modality)) + "/" + c.channel;
}

signal::ChannelRef parse_channel_ref(std::string_view text) {
  const std::size_t slash = text.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 == text.size()) {
    throw ConfigError("channel '" + std::string(text) + "' must look like MODALITY/name");
  }
  return {signal::parse_modality(text.substr(0, slash)), std::string(text.substr(slash + 1))};
}

void ExperimentConfig::validate() const {
  if (!dataset.manifest) dataset.synthetic.validate();
  if (channels.empty()) throw ConfigError("channel selection is empty");
  std::set<std::string> seen;
  for (const auto& c : channels) {
    if (!seen.insert(to_string(c)).second) throw ConfigError("channel " + to_string(c) + " listed twice");
  }
  eval.validate();
  train.validate();
  compression.validate();
  ablation.validate();
  netsim.validate();
  if (netsim.window_s != eval.window_length_s) {
    throw ConfigError("netsim.window_s must equal eval.window_length_s");
  }
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

json to_json(const ExperimentConfig& c) {
  json channels = json::array();
  for (const auto& ch : c.channels) channels.push_back(to_string(ch));
  json subsets = json::array();
  for (const auto& s : c.ablation.subsets) {
    json names = json::array();
    for (signal::Modality m : s) names.push_back(std::string(signal::to_string(m)));
    subsets.push_back(names);
  }
  json dataset = {{"synthetic", to_json(c.dataset.synthetic)}};
  dataset["manifest"] = c.dataset.manifest ? json(c.dataset.manifest->generic_string()) : json(nullptr);
  return {{"schema", std::string(kConfigSchema)},
          {"dataset", dataset},
          {"channels", channels},
          {"eval", eval::to_json(c.eval)},
          {"architecture", nn::to_json(c.architecture)},
          {"train", nn::to_json(c.train)},
          {"compression", compress::to_json(c.compression)},
          {"evaluate_compressed", c.evaluate_compressed},
          {"run_ablation", c.run_ablation},
          {"ablation", {{"subsets", subsets}, {"retrain_branches", c.ablation.retrain_branches}}},
          {"netsim", netsim::to_json(c.netsim)},
          {"netsim_subject", c.netsim_subject},
          {"output_dir", c.output_dir.generic_string()}};
}

namespace {

// Every object key in `doc` must exist in `reference` (the defaults).
void check_keys(const json& doc, const json& reference, const std::string& path) {
  if (!doc.is_object()) {
    if (reference.is_object()) throw ConfigError(path + " must be an object");
    return;
  }
  for (const auto& [k, v] : doc.items()) {
    const std::string here = path.empty() ? k : path + "." + k;
    if (here == "netsim.target_ber") continue;
    if (!reference.contains(k)) throw ConfigError("unknown config key '" + here + "'");
    if (reference[k].is_object()) check_keys(v, reference[k], here);
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const std::string schema = j.value("schema", std::string());
  if (schema != kConfigSchema) {
    throw ConfigError("config schema '" + schema + "' is not " + std::string(kConfigSchema));
  }
  ExperimentConfig c;
  check_keys(j, to_json(c), "");
  try {
    const json empty = json::object();
    auto section = [&](const char* key) -> const json& { return j.contains(key) ? j[key] : empty; };
    const json& ds = section("dataset");
    if (ds.contains("manifest") && !ds["manifest"].is_null()) {
      c.dataset.manifest = std::filesystem::path(ds["manifest"].get<std::string>());
    }
    c.dataset.synthetic = cohort::cohort_config_from_json(ds.value("synthetic", empty));
    if (j.contains("channels")) {
      c.channels.clear();
      for (const json& s : j["channels"]) c.channels.push_back(parse_channel_ref(s.get<std::string>()));
    }
    c.eval = eval::eval_config_from_json(section("eval"));
    c.architecture = nn::architecture_from_json(section("architecture"));
    c.train = nn::train_config_from_json(section("train"));
    c.compression = compress::compression_config_from_json(section("compression"));
    c.evaluate_compressed = j.value("evaluate_compressed", c.evaluate_compressed);
    c.run_ablation = j.value("run_ablation", c.run_ablation);
    const json& abl = section("ablation");
    if (abl.contains("subsets")) {
      c.ablation.subsets.clear();
      for (const json& s : abl["subsets"]) {
        std::vector<signal::Modality> subset;
        for (const json& m : s) subset.push_back(signal::parse_modality(m.get<std::string>()));
        c.ablation.subsets.push_back(std::move(subset));
      }
    }
    c.ablation.retrain_branches = abl.value("retrain_branches", c.ablation.retrain_branches);
    c.netsim = netsim::sim_config_from_json(section("netsim"));
    c.netsim_subject = j.value("netsim_subject", c.netsim_subject);
    c.output_dir = j.contains("output_dir") ? std::filesystem::path(j["output_dir"].get<std::string>())
                                            : default_output_root();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json read_config_document(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like key.path=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + path + "' has an empty key");
    if (!node->is_object()) throw ConfigError("override '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  if (env != nullptr && *env != '\0') return env;
  return kDefaultOutputRoot;
}

}  // namespace fogwear::config
